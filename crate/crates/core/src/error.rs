use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration value violates its invariant. `field` is a dotted path
    /// such as `params.L2` so front ends can point at the offending input.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("steering angle {alpha} rad is outside the domain |alpha| < pi/2")]
    SteeringDomain { alpha: f64 },

    #[error("linearization point {alpha_e} rad is outside |alpha_e| < {alpha_max} rad")]
    BeyondLinearizationLimit { alpha_e: f64, alpha_max: f64 },

    #[error("trailer angle {beta3_e} rad is outside |beta3_e| < pi/2")]
    TrailerAngleDomain { beta3_e: f64 },

    #[error("Riccati equation has no stabilizing solution: {0}")]
    NoStabilizingSolution(String),

    #[error("linearization point {alpha_e} rad lies outside the scheduled range ±{limit} rad")]
    OutOfSchedule { alpha_e: f64, limit: f64 },

    #[error("bearing to target is undefined: target coincides with the anchor")]
    UndefinedBearing,

    #[error("trace is empty")]
    EmptyTrace,
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid { field: field.into(), reason: reason.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
