//! CSV persistence: generic tables, price series and pMH chains.

use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use nupf_core::inference::{PmhChain, SvParams};
use nupf_core::models::{build_stochvol, simulate};
use nupf_core::RngStream;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Synthetic daily price series shipped with the crate, simulated from the
/// stochastic volatility model at [`BUNDLED_THETA`] (see
/// [`synthetic_sv_prices`] with [`BUNDLED_SEED`], 500 returns).
pub const BUNDLED_PRICES: &str = include_str!("../data/sv_synthetic.csv");
pub const BUNDLED_THETA: SvParams = SvParams {
    mu: -0.2,
    sigma_v: 0.15,
    phi: 0.97,
};
pub const BUNDLED_SEED: u64 = 20_141_231;
pub const BUNDLED_RETURNS: usize = 500;

/// Named CSV table; rows are already formatted.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        csv_write(&dir.join(&self.name), &self.header, &self.rows)
    }
}

/// Write `header` then `rows`. An empty row set yields a header-only file.
pub fn csv_write<H: AsRef<str>, R: AsRef<[String]>>(path: &Path, header: &[H], rows: &[R]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| HarnessError::csv(path, e))?;
    w.write_record(header.iter().map(|h| h.as_ref()))
        .map_err(|e| HarnessError::csv(path, e))?;
    for r in rows {
        w.write_record(r.as_ref()).map_err(|e| HarnessError::csv(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Shortest round-trip decimal form; empty for `None`.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt_f64)
}

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub date: NaiveDate,
    pub price: f64,
}

/// Read a `date,price` CSV with ISO dates.
pub fn read_prices(path: &Path) -> Result<Vec<PricePoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_prices(&text).map_err(|m| HarnessError::csv(path, m))
}

pub fn parse_prices(text: &str) -> std::result::Result<Vec<PricePoint>, String> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().collect::<Vec<_>>() != ["date", "price"] {
        return Err(format!(
            "expected header `date,price`, found `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<PricePoint>().enumerate() {
        out.push(rec.map_err(|e| format!("row {}: {e}", i + 1))?);
    }
    if out.len() < 2 {
        return Err("need at least two prices".into());
    }
    Ok(out)
}

pub fn write_prices(path: &Path, prices: &[PricePoint]) -> Result<()> {
    std::fs::write(path, format_prices(prices)).map_err(|e| HarnessError::io(path, e))
}

pub fn format_prices(prices: &[PricePoint]) -> String {
    let mut s = String::from("date,price\n");
    for p in prices {
        s.push_str(&format!("{},{:.10}\n", p.date, p.price));
    }
    s
}

/// Prices `s_0 … s_T` whose returns `100 log(s_t / s_{t−1})` follow the
/// stochastic volatility model at `theta`. Dates run over weekdays from
/// `start`.
pub fn synthetic_sv_prices(
    theta: &SvParams,
    returns: usize,
    seed: u64,
    start: NaiveDate,
    s0: f64,
) -> Result<Vec<PricePoint>> {
    let model = build_stochvol::<f64>(&theta.spec())?;
    let traj = simulate(&model, returns, &RngStream::new(seed));
    let mut date = start;
    let mut price = s0;
    let mut out = Vec::with_capacity(returns + 1);
    out.push(PricePoint { date, price });
    for y in &traj.observations {
        date = next_weekday(date);
        price *= (y.values[0] / 100.0).exp();
        out.push(PricePoint { date, price });
    }
    Ok(out)
}

fn next_weekday(d: NaiveDate) -> NaiveDate {
    let mut n = d.succ_opt().expect("date in range");
    while matches!(n.weekday(), Weekday::Sat | Weekday::Sun) {
        n = n.succ_opt().expect("date in range");
    }
    n
}

/// Prices from `path`, or the bundled series.
pub fn load_prices(path: Option<&Path>) -> Result<Vec<f64>> {
    let points = match path {
        Some(p) => read_prices(p)?,
        None => parse_prices(BUNDLED_PRICES).map_err(|m| HarnessError::csv(Path::new("<bundled>"), m))?,
    };
    Ok(points.into_iter().map(|p| p.price).collect())
}

pub const CHAIN_HEADER: [&str; 6] = ["iter", "mu", "sigma_v", "phi", "log_marginal", "accepted"];

pub fn chain_table(name: impl Into<String>, chain: &PmhChain) -> Table {
    let mut t = Table::new(name, &CHAIN_HEADER);
    for (i, ((s, ll), acc)) in chain
        .samples
        .iter()
        .zip(&chain.log_marginals)
        .zip(&chain.accepted)
        .enumerate()
    {
        t.push(vec![
            (i + 1).to_string(),
            fmt_f64(s.mu),
            fmt_f64(s.sigma_v),
            fmt_f64(s.phi),
            fmt_f64(*ll),
            u8::from(*acc).to_string(),
        ]);
    }
    t
}

#[derive(Debug, Deserialize)]
struct ChainRow {
    #[allow(dead_code)]
    iter: usize,
    mu: f64,
    sigma_v: f64,
    phi: f64,
    log_marginal: f64,
    accepted: u8,
}

/// Read a chain written by [`chain_table`]; `failed_proposals` is not stored.
pub fn read_chain(path: &Path) -> Result<PmhChain> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    let mut chain = PmhChain::default();
    for rec in r.deserialize::<ChainRow>() {
        let row = rec.map_err(|e| HarnessError::csv(path, e))?;
        chain.samples.push(SvParams::new(row.mu, row.sigma_v, row.phi));
        chain.log_marginals.push(row.log_marginal);
        chain.accepted.push(row.accepted != 0);
    }
    Ok(chain)
}
