use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical or structural invariant of an input value was violated.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("cavity is geometrically unstable: length {length} m >= radius of curvature {roc} m")]
    UnstableCavity { length: f64, roc: f64 },

    /// Optical anti-damping exceeds the intrinsic damping (γ_eff ≤ 0).
    #[error("dynamically unstable: effective damping {gamma_eff} rad/s is not positive")]
    DynamicalInstability { gamma_eff: f64 },

    #[error("simulation diverged at t = {time} s (|x| = {x} m)")]
    Divergence { time: f64, x: f64 },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error(
        "trajectory too short: {samples} samples for segments of {segment} (need >= 4 segments)"
    )]
    TooShort { samples: usize, segment: usize },

    #[error("no visible peak (max/median = {ratio:.3}, need > 5)")]
    NoPeak { ratio: f64 },

    #[error("fit did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("singular Jacobian at the optimum")]
    SingularJacobian,

    #[error("unidentifiable parameters (covariance condition number {condition:.3e})")]
    Unidentifiable { condition: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("detuning {detuning} rad/s is outside the locked region |Δ| < κ = {kappa} rad/s")]
    OutOfLockRange { detuning: f64, kappa: f64 },

    #[error("reference peak missing or weak (SNR {snr:.3}, need > 10)")]
    WeakReference { snr: f64 },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
