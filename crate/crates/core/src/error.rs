use num_complex::Complex64;
use thiserror::Error;

/// Failure modes surfaced by the numerical layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("metric function admits no positivity interval between two simple positive roots")]
    NoPositivityInterval,
    #[error("adaptive quadrature for the radial coordinate map failed to converge: {0}")]
    QuadratureFailure(String),
    #[error("no ergoregion at this latitude (metric coefficient keeps one sign)")]
    NoErgoregion,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("pencil is numerically singular at z = {0}")]
    PencilSingular(Complex64),
    #[error("grid extends beyond the tabulated coordinate map")]
    AssemblyDomainError,
    #[error("cutoff support does not fit in the grid span")]
    SupportOverflow,
    #[error("positivity violated for {which}: smallest eigenvalue {eigenvalue}")]
    PositivityViolation { which: String, eigenvalue: f64 },
    #[error("problem size {0} exceeds the dense-solver budget {1}")]
    BudgetExceeded(usize, usize),
    #[error("eigen/linear solver failure: {0}")]
    SolverFailure(String),
    #[error("operator 1+K is ill conditioned at z = {0}")]
    IllConditioned(Complex64),
    #[error("integration contour passes too close to the spectrum")]
    SpectrumOnContour,
    #[error("defective eigenvalue cluster near z = {0} (eigenvector matrix ill conditioned)")]
    DefectiveCluster(Complex64),
    #[error("datum does not satisfy the zero-mean integrability condition")]
    NotInL,
    #[error("datum is not in the finite angular-mode subspace")]
    NotInFin,
    #[error("time horizon violates the causal window: need X >= support + T + margin")]
    CausalWindowExceeded,
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
