use thiserror::Error;

/// Errors raised across the inference pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("sample of size {n} is too small for a kernel of order {order}")]
    SampleTooSmall { n: usize, order: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("theta = {theta} lies outside the open convex hull of the constraint points")]
    InfeasibleTheta { theta: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("linear system is numerically singular: {0}")]
    SingularSystem(String),

    #[error("size measure of unit {unit} is too large: n * z / sum(z) = {scaled} >= 1")]
    SizeMeasureTooLarge { unit: usize, scaled: f64 },

    #[error("Rao-Sampford rejection budget of {budget} restarts exceeded")]
    RejectionBudgetExceeded { budget: usize },

    #[error("weight {index} is not strictly positive ({value})")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("calibration cross-product matrix is singular")]
    SingularCalibration,

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("degenerate posterior: only {feasible} feasible grid points")]
    DegeneratePosterior { feasible: usize },

    #[error("ratio root not bracketed on the {side} side; stopped at the hull edge {edge}")]
    RootNotBracketed { side: &'static str, edge: f64 },

    #[error("target correlation {target} is unattainable (attainable range ({lo}, {hi}])")]
    RhoUnattainable { target: f64, lo: f64, hi: f64 },

    #[error("{failed} of {total} replicates failed (more than 2%)")]
    TooManyFailures { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
