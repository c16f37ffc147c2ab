use thiserror::Error;

/// Errors raised by estimation, solving, backtesting and file ingestion.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "solver did not converge after {iterations} iterations \
         (primal residual {primal_residual:.3e}, dual residual {dual_residual:.3e}, \
         kkt residual {kkt_residual:.3e})"
    )]
    Convergence {
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
        kkt_residual: f64,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("LLA round {round}: {source}")]
    Lla {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("portfolio value wiped out on holding day {day} (gross factor {factor:.3e})")]
    Wipeout { day: usize, factor: f64 },

    #[error("Sharpe ratio undefined: {0}")]
    UndefinedSharpe(String),

    #[error("lambda tuning failed for every candidate: {}", format_failures(.0))]
    Tuning(Vec<(f64, String)>),

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_failures(failures: &[(f64, String)]) -> String {
    failures
        .iter()
        .map(|(lambda, reason)| format!("lambda={lambda}: {reason}"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn parse(line: usize, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
