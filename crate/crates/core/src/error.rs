use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{free} non-singleton entries exceed the corner cap {cap}")]
    CornerExplosion { free: usize, cap: usize },

    #[error("linearization center lies outside the domain box (component {index})")]
    CenterOutsideBox { index: usize },

    #[error("shape matrix is singular (reciprocal condition {rcond:e})")]
    SingularShape { rcond: f64 },

    #[error("embedding step {step} made the shape matrix singular")]
    StepTooLarge { step: usize },

    #[error("reachable set left its linear-inclusion domain at step {step}")]
    DomainViolation { step: usize },

    #[error("stopping condition not reached within {steps} steps")]
    MaxSteps { steps: usize },

    #[error("guard slice is degenerate (rank-deficient shape on the guard basis)")]
    DegenerateSlice,

    #[error("no verification window: {reason}")]
    NoWindow { reason: &'static str },

    #[error("no verifiable scale in [2^-20, 2^20]")]
    NoVerifiableScale,

    #[error("leg length must be positive (r = {r})")]
    NonPositiveLength { r: f64 },

    #[error("angle {theta} is at or beyond the coordinate singularity ±π/2")]
    SingularAngle { theta: f64 },

    #[error("no guard impact within horizon {horizon}")]
    NoImpact { horizon: f64 },

    #[error("guard crossing at t = {t} is not transversal (hdot = {hdot:e})")]
    NonTransversalCrossing { t: f64, hdot: f64 },

    #[error("integrator step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("finite-difference derivatives disagree (relative deviation {deviation:e})")]
    FiniteDifference { deviation: f64 },

    #[error("pair (A, B) is not controllable")]
    Uncontrollable,

    #[error("spectral radius {rho} is not below one")]
    SpectralRadiusTooLarge { rho: f64 },

    #[error("gait synthesis did not converge (constraint residual {residual:e})")]
    InfeasibleGait { residual: f64 },

    #[error("gradient descent diverged after {halvings} step-size halvings")]
    DivergentDescent { halvings: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file: {0}")]
    Parse(String),
}
