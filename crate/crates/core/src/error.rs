use thiserror::Error;

/// Failure modes shared by the solvers, diagnostics and the scenario runner.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("model error: {0}")]
    Model(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("ODE trajectory diverged: |h| = {value:e} exceeds u_max at t = {t}")]
    Divergence { t: f64, value: f64 },
    #[error("solution blew up: max u = {max:e} exceeds u_max at t = {t}")]
    BlowUp { t: f64, max: f64 },
    #[error(
        "boundary leak {value:e} > {threshold:e} at t = {t} (domain half-width {half_width}); enlarge L"
    )]
    Truncation {
        t: f64,
        value: f64,
        threshold: f64,
        half_width: f64,
    },
    #[error("range error: {0}")]
    Range(String),
    #[error("bracket error: {0}")]
    Bracket(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("monotone certificate failed in period {period} at x = {x} (drop {drop:e})")]
    Certificate { period: usize, x: f64, drop: f64 },
    #[error("domain too small: no solution at R = {r}{}", feasible.map(|f| format!("; smallest feasible R found by doubling: {f}")).unwrap_or_else(|| "; none found up to the search cap".into()))]
    DomainTooSmall { r: f64, feasible: Option<f64> },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("no periodic orbit within 1e-2 of the tail values {tails:?}")]
    Match { tails: Vec<f64> },
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config { .. } => 2,
            LabError::Bracket(_) | LabError::Hypothesis(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
