use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// An exhaustive enumeration would exceed its configured cap.
    #[error("resource cap exceeded: {what} requires {requested}, cap is {cap}")]
    Resource {
        what: &'static str,
        requested: u64,
        cap: u64,
    },

    /// Inconsistent or unsupported configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A quadrature or estimator produced a non-finite number.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An exact identity check failed; carries a printable witness.
    #[error("assertion failed: {what} (residual {residual:e}); witness: {witness}")]
    Assertion {
        what: String,
        residual: f64,
        witness: String,
    },

    /// The particle count exceeded the configured hard cap.
    #[error("rate explosion: {count} particles at t = {time} exceeds cap {cap}")]
    RateExplosion { count: usize, cap: usize, time: f64 },

    /// Internal bookkeeping went out of sync.
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_cap(what: &'static str, requested: u64, cap: u64) -> Result<()> {
    if requested > cap {
        Err(Error::Resource {
            what,
            requested,
            cap,
        })
    } else {
        Ok(())
    }
}
