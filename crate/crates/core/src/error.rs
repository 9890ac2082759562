use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Cholesky breakdown; `pivot` is the zero-based column whose pivot was not positive.
    #[error("matrix is not positive definite (failing pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("degenerate likelihood: {0}")]
    DegenerateLikelihood(String),

    #[error("sampler failed at iteration {iteration}: {source}")]
    Sampler {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown benchmark function `{0}`")]
    UnknownBenchmark(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("no admissible candidate points")]
    NoCandidates,

    #[error("simulator failed: {0}")]
    Simulator(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Shape(_)
            | Error::Domain(_)
            | Error::UnknownBenchmark(_)
            | Error::Parse { .. }
            | Error::Data(_)
            | Error::Simulator(_)
            | Error::Io(_) => 3,
            Error::NotPositiveDefinite { .. }
            | Error::DegenerateLikelihood(_)
            | Error::Sampler { .. }
            | Error::NoCandidates => 4,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        Error::Parse {
            line,
            message: err.to_string(),
        }
    }
}
