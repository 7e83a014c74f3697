use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("synthesis problem is infeasible (constraint residual {residual:.3e})")]
    Infeasible { residual: f64 },

    #[error("invalid synthesis problem: {0}")]
    InvalidProblem(String),

    #[error("unresolvable matrix reference {0}")]
    DanglingMatrix(String),

    #[error("evaluation schedule contains a cycle through node {0}")]
    ScheduleCycle(String),

    #[error("link {link} payload has {got} entries, expected {expected}")]
    LinkDimension {
        link: usize,
        expected: usize,
        got: usize,
    },

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("invalid experiment:\n  - {}", .0.join("\n  - "))]
    InvalidExperiment(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
