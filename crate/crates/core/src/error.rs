use core::fmt;

/// Errors raised by the analysis and simulation core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A probability parameter fell outside `(0, 1]`.
    InvalidProbability { name: &'static str, value: f64 },
    /// A structural parameter (N, M, T, m, ...) is out of range.
    InvalidParameter { name: &'static str, reason: &'static str },
    /// Delivery reported for a user that was not scheduled.
    DeliveryWithoutSchedule { user: usize },
    /// A scheduling decision referenced a user that does not exist.
    UserOutOfRange { user: usize, users: usize },
    /// More users scheduled than the bandwidth allows.
    BandwidthExceeded { scheduled: usize, bandwidth: usize },
    /// Threshold below 1.
    InvalidThreshold(u64),
    /// Age below 1 where the index is undefined.
    InvalidAge(u64),
    /// An iterative solver hit its iteration cap.
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    /// Bisection could not bracket the root.
    BracketFailure { upper: f64 },
    /// A policy is not defined for the requested configuration.
    Unsupported(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidProbability { name, value } => {
                write!(f, "{name} must lie in (0, 1], got {value}")
            }
            Error::InvalidParameter { name, reason } => write!(f, "invalid {name}: {reason}"),
            Error::DeliveryWithoutSchedule { user } => {
                write!(f, "user {user} delivered without being scheduled")
            }
            Error::UserOutOfRange { user, users } => {
                write!(f, "user index {user} out of range for {users} users")
            }
            Error::BandwidthExceeded { scheduled, bandwidth } => {
                write!(f, "{scheduled} users scheduled but bandwidth is {bandwidth}")
            }
            Error::InvalidThreshold(t) => write!(f, "threshold must be >= 1, got {t}"),
            Error::InvalidAge(s) => write!(f, "age must be >= 1, got {s}"),
            Error::NotConverged {
                solver,
                iterations,
                residual,
            } => write!(
                f,
                "{solver} did not converge after {iterations} iterations (residual {residual:e})"
            ),
            Error::BracketFailure { upper } => {
                write!(f, "bisection bracket failure, upper bound reached {upper:e}")
            }
            Error::Unsupported(what) => write!(f, "unsupported: {what}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
