use thiserror::Error;

/// Errors raised by the state algebra and the channel operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("qubit amplitudes are not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("density matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("density matrix trace is {0}, expected 1")]
    BadTrace(f64),
    #[error("density matrix has negative eigenvalue {0:.3e}")]
    NotPositive(f64),
    #[error("filter is orthogonal to the support of the state (pass probability {0:.3e})")]
    FilterBlocked(f64),
    #[error("coincidence probabilities sum to zero; correlation undefined")]
    EmptyCorrelation,
    #[error("fraction {name} = {value} is outside [0, 1]")]
    FractionOutOfRange { name: &'static str, value: f64 },
    #[error("analyzer index {0} is outside 1..=4")]
    BadSettingIndex(u8),
}

/// Errors from the classical post-processing stage.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PostprocessError {
    #[error("keys differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("key is empty")]
    EmptyKey,
    #[error("no trials recorded for setting combination (alpha_{alice}, beta_{bob})")]
    MissingCombination { alice: u8, bob: u8 },
    #[error("reconciliation did not converge within {0} rounds")]
    NotConverged(usize),
    #[error("reconciliation terminated with {0} undetected residual errors")]
    ResidualErrors(usize),
    #[error("requested {requested} output bits from a {available}-bit key")]
    TooManyOutputBits { requested: usize, available: usize },
    #[error("estimated error rate {0} leaves nothing to reconcile")]
    BadErrorEstimate(f64),
    #[error("invalid block size schedule: {0}")]
    BadSchedule(String),
}

/// Errors from configuration parsing and validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {msg}")]
    BadValue { key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Anything that can go wrong in an end-to-end run.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Postprocess(#[from] PostprocessError),
    #[error("malformed {what} at line {line}: {msg}")]
    Parse {
        what: &'static str,
        line: usize,
        msg: String,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        PipelineError::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit status: 1 for configuration problems, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            _ => 2,
        }
    }
}
