use std::ops::Range;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String, Option<Range<usize>>),
    #[error("{path}:{line}:{column}: {message}")]
    ConfigAt {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unknown experiment id `{0}`")]
    UnknownExperiment(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("NMSE denominator is zero")]
    ZeroDenominator,
    #[error("length mismatch: {0} estimates against {1} reference steps")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Core(#[from] nupf_core::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn csv(path: &Path, message: impl ToString) -> Self {
        Self::Csv {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// Attach file and line/column to a parse error.
    pub(crate) fn in_file(self, path: &Path, text: &str) -> Self {
        match self {
            Self::Config(message, span) => {
                let offset = span.map_or(0, |s| s.start);
                let offset = unknown_key_offset(&message, text, offset).unwrap_or(offset);
                let before = &text[..offset.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                Self::ConfigAt {
                    path: path.to_path_buf(),
                    line,
                    column,
                    message,
                }
            }
            other => other,
        }
    }
}

/// Errors inside the tagged `[experiment]` table carry the span of the
/// whole table; move an unknown-field error onto the offending key.
fn unknown_key_offset(message: &str, text: &str, from: usize) -> Option<usize> {
    let key = message.strip_prefix("unknown field `")?.split('`').next()?;
    let mut pos = from.min(text.len());
    for line in text[pos..].split_inclusive('\n') {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return Some(pos + line.len() - trimmed.len());
            }
        }
        pos += line.len();
    }
    None
}
