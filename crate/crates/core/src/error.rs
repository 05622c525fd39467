use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("evaluation outside the domain of f' at theta = {theta:?}: {detail}")]
    Domain { theta: Vec<f64>, detail: String },

    #[error("SGD diverged at step {step}; last finite state {last_state:?}")]
    Divergence { step: u64, last_state: Vec<f64> },

    #[error("diffusion matrix singular or ill-conditioned at theta = {theta:?} (condition {condition:e}); use an augmented field")]
    SingularDiffusion { theta: Vec<f64>, condition: f64 },

    #[error("curl defect {defect:e} exceeds tolerance {tolerance:e}; the drift is not a gradient (augment the field or reject)")]
    CurlDefect { defect: f64, tolerance: f64 },

    #[error("matrix for {what} is not positive definite (smallest eigenvalue {min_eig:e})")]
    NotPositiveDefinite { what: String, min_eig: f64 },

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("partition function {0}; try log-domain output")]
    Partition(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("ambiguous basin assignment; candidate minima {candidates:?}")]
    AmbiguousBasin { candidates: Vec<Vec<f64>> },

    #[error("basin pairing failed: {0}")]
    Pairing(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("too few samples: found {found}, need {required}")]
    InsufficientSamples { found: usize, required: usize },

    #[error("at T = {temperature}: {source}")]
    AtTemperature {
        temperature: f64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn at_temperature(self, temperature: f64) -> Error {
        Error::AtTemperature { temperature, source: Box::new(self) }
    }
}
