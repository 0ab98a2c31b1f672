//! File formats: the binary year event table, CSV for event loss tables
//! and year loss tables, and the TOML portfolio config.
//!
//! The year event table is the large input and gets a fixed little-endian
//! binary layout; everything else is small and stays human-readable. Every
//! writer has a reader and a round-trip law.

mod binary;
mod config;
mod csv;

pub use binary::{read_yet, write_yet, YET_HEADER_BYTES, YET_MAGIC, YET_VERSION};
pub use config::{read_portfolio_config, write_portfolio_config, EltSource, PortfolioConfig};
pub use csv::{read_elt_csv, read_ylt_csv, write_elt_csv, write_ylt_csv};

use std::fmt;

use crate::model::{ModelError, Violation};

/// Failure reading or writing one of the module's formats.
#[derive(Debug)]
pub enum IoError {
    /// Underlying stream failure.
    Io(std::io::Error),
    /// Year event table file does not start with [`YET_MAGIC`].
    BadMagic { found: [u8; 8] },
    /// Year event table file version is not [`YET_VERSION`].
    VersionMismatch { found: u32 },
    /// Stream ended inside a field; `offset` is where the field began.
    Truncated { offset: u64 },
    /// Header count disagrees with the body.
    CountMismatch { what: &'static str, declared: u64, found: u64 },
    /// Malformed CSV content at a 1-based line number.
    Csv { line: usize, message: String },
    /// Invalid portfolio config; `at` is the config key path.
    Config { at: String, message: String },
    /// Structurally valid year event table that breaks table invariants.
    InvalidTable(Vec<Violation>),
    /// Parsed data violates a model invariant.
    Model(ModelError),
}

impl fmt::Display for IoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io(err) => write!(f, "i/o failure: {err}"),
            Self::BadMagic { found } => {
                write!(f, "bad magic {found:02x?}, not a year event table file")
            }
            Self::VersionMismatch { found } => {
                write!(f, "unsupported year event table version {found}")
            }
            Self::Truncated { offset } => write!(f, "file truncated at byte offset {offset}"),
            Self::CountMismatch { what, declared, found } => {
                write!(f, "header declares {declared} {what}, body has {found}")
            }
            Self::Csv { line, message } => write!(f, "line {line}: {message}"),
            Self::Config { at, message } => write!(f, "{at}: {message}"),
            Self::InvalidTable(violations) => {
                write!(f, "table violates {} invariant(s)", violations.len())?;
                for v in violations.iter().take(5) {
                    write!(f, "; {v}")?;
                }
                if violations.len() > 5 {
                    write!(f, "; ...")?;
                }
                Ok(())
            }
            Self::Model(err) => write!(f, "{err}"),
        }
    }
}

impl std::error::Error for IoError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Io(err) => Some(err),
            Self::Model(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for IoError {
    fn from(err: std::io::Error) -> Self {
        Self::Io(err)
    }
}

impl From<ModelError> for IoError {
    fn from(err: ModelError) -> Self {
        Self::Model(err)
    }
}
