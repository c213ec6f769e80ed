use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A type invariant of the model configuration does not hold.
    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("lambda = {lambda} outside tabulated range [{lo}, {hi}]")]
    OutOfRange { lambda: f64, lo: f64, hi: f64 },

    #[error("quadrature did not converge: achieved error {achieved:.3e}, requested {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("point {0} lies on the real axis")]
    OnRealAxis(Complex64),

    #[error("analytic continuation unavailable for the {0} density")]
    ContinuationUnavailable(&'static str),

    #[error("root search did not converge after {iterations} iterations (|h| = {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("h has no upper-half-plane zeros (iterate converged to {0})")]
    UpperHalfPlaneRoot(Complex64),

    #[error("h vanishes on the real axis at sigma = {0} (bound state or threshold)")]
    RealZero(f64),

    #[error("bound state present: measure incomplete (real zero of h near {0})")]
    BoundState(f64),

    #[error("phase step {step:.3} exceeds pi/2 near sigma = {sigma} after maximal refinement")]
    PhaseJump { sigma: f64, step: f64 },

    #[error("representation mismatch: expected {expected}, found {found}")]
    Representation {
        expected: &'static str,
        found: &'static str,
    },

    #[error("negative evolution time {0}")]
    NegativeTime(f64),

    #[error("operator at s = {0} is not self-adjoint")]
    NotSelfAdjoint(f64),

    #[error("zero auxiliary vector at sigma = {0}")]
    ZeroAuxiliary(f64),

    #[error("pole with zero width cannot define a resonant state")]
    RealPole,

    #[error("oscillation under-resolved: tau * panel width = {0:.3} exceeds the resolution limit")]
    UnderResolved(f64),
}
