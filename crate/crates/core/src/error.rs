use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the engine can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op}: domain error: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,

    #[error("invalid input: {0}")]
    Input(String),

    #[error("node {node} has degree zero; add self-loops before normalizing")]
    DegreeZero { node: usize },

    #[error("requested {requested} new edges but only {available} node pairs are absent")]
    Capacity { requested: usize, available: usize },

    #[error("class {class} has {have} members, {need} needed for the training split")]
    Stratification { class: usize, have: usize, need: usize },

    #[error("{file}:{line}: {detail}")]
    Parse {
        file: String,
        line: usize,
        detail: String,
    },

    #[error("cubic solve did not converge after {iterations} iterations (last residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("implicit step is ill-conditioned: |1 - dt(alpha - 3 beta R^2)| = {denominator:e}")]
    IllConditioned { denominator: f64 },

    #[error("linear implicit step is undefined: 1 - dt*alpha = {denominator} <= 0")]
    LinearBranch { denominator: f64 },

    #[error("entry {index} has zero magnitude; phase is undefined")]
    DegeneratePhase { index: usize },

    #[error("step size {h:e} underflowed at t = {t}")]
    StepUnderflow { t: f64, h: f64 },

    #[error("maximum number of steps ({steps}) exceeded at t = {t}")]
    MaxSteps { steps: usize, t: f64 },

    #[error("unbounded growth detected at t = {t} (|y| = {magnitude:e})")]
    Growth { t: f64, magnitude: f64 },

    #[error("decay fit rejected: {0}")]
    FitRejected(String),

    #[error("analysis window has {got} samples, {needed} required")]
    Window { needed: usize, got: usize },

    #[error("node {node} magnitude {r:e} is too small for the criticality residual")]
    DegenerateMagnitude { node: usize, r: f64 },

    #[error("eigen-decomposition failed: {0}")]
    Eigen(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown or invalid configuration keys: {}", .0.join(", "))]
    ConfigKeys(Vec<String>),

    #[error("mask error: {0}")]
    Mask(String),

    #[error("pooling error: {0}")]
    Pooling(String),

    #[error("non-finite loss at epoch {epoch}: {diagnostics}")]
    NonFinite { epoch: usize, diagnostics: String },

    #[error("t-score undefined: pooled variance is zero")]
    DegenerateVariance,

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::ConfigKeys(_) | Error::Usage(_) => 2,
            Error::Io(_) | Error::Parse { .. } | Error::Json(_) => 4,
            _ => 3,
        }
    }

    /// Short machine-readable category name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Domain { .. } => "domain",
            Error::Contract(_) => "contract",
            Error::TapeConsumed => "tape_consumed",
            Error::Input(_) => "input",
            Error::DegreeZero { .. } => "degree_zero",
            Error::Capacity { .. } => "capacity",
            Error::Stratification { .. } => "stratification",
            Error::Parse { .. } => "parse",
            Error::Solver { .. } => "solver",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::LinearBranch { .. } => "linear_branch",
            Error::DegeneratePhase { .. } => "degenerate_phase",
            Error::StepUnderflow { .. } => "step_underflow",
            Error::MaxSteps { .. } => "max_steps",
            Error::Growth { .. } => "growth",
            Error::FitRejected(_) => "fit_rejected",
            Error::Window { .. } => "window",
            Error::DegenerateMagnitude { .. } => "degenerate_magnitude",
            Error::Eigen(_) => "eigen",
            Error::Config(_) => "config",
            Error::ConfigKeys(_) => "config",
            Error::Mask(_) => "mask",
            Error::Pooling(_) => "pooling",
            Error::NonFinite { .. } => "non_finite",
            Error::DegenerateVariance => "degenerate_variance",
            Error::Usage(_) => "usage",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
