use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("agent {agent} has zero out-degree")]
    ZeroOutDegree { agent: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("weight of agent {agent} is {weight}, above 1/d = {limit}")]
    WeightTooLarge { agent: usize, weight: f64, limit: f64 },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("run diverged at round {round}: {msg}")]
    Divergence { round: usize, msg: String },

    #[error("numeric degeneracy at round {round}: {msg}")]
    NumericDegeneracy { round: usize, msg: String },

    #[error("inner solver for agent {agent} hit {iterations} iterations (gradient norm {grad_norm:e})")]
    InnerSolve {
        agent: usize,
        iterations: usize,
        grad_norm: f64,
    },

    #[error("rate certificate infeasible: {0}")]
    CertificateInfeasible(String),

    #[error("degenerate start: {0}")]
    DegenerateStart(String),

    #[error("rate fit failed: {0}")]
    Fit(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
