use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the pipeline.
///
/// The variants fall into three groups that the command-line front end maps
/// onto distinct exit codes: validation problems with inputs or parameters,
/// data gaps (a requested cell/timestamp has no value in some family), and
/// everything else.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("point ({x}, {y}) lies outside the study area")]
    OutOfArea { x: f64, y: f64 },

    #[error("unknown cell id {0}")]
    UnknownCell(u32),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("data gap: {}", summarize_gaps(.0))]
    DataGap(Vec<String>),

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("{0}")]
    Unfittable(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn summarize_gaps(gaps: &[String]) -> String {
    const SHOWN: usize = 10;
    let mut msg = gaps.iter().take(SHOWN).cloned().collect::<Vec<_>>().join("; ");
    if gaps.len() > SHOWN {
        msg.push_str(&format!("; ... and {} more", gaps.len() - SHOWN));
    }
    msg
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_data_gap(&self) -> bool {
        matches!(self, Error::DataGap(_))
    }

    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_)
                | Error::OutOfArea { .. }
                | Error::UnknownCell(_)
                | Error::Parse { .. }
                | Error::Undefined(_)
                | Error::Unfittable(_)
                | Error::Csv(_)
        )
    }
}
