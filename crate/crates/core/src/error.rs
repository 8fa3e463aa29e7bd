use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The integrand produced NaN or an infinity.
    #[error("integrand is not finite at x = {abscissa}")]
    NonFinite { abscissa: f64 },

    /// Adaptive quadrature hit its subdivision limit before meeting tolerance.
    #[error("quadrature did not converge: value {value}, estimated error {abs_err}")]
    NoConvergence { value: f64, abs_err: f64 },

    /// Too many Monte Carlo replications had no usable transmitter.
    #[error(
        "{censored} of {total} replications were censored (budget {budget}); \
         increase the window radius"
    )]
    CensoringExceeded { censored: u64, total: u64, budget: f64 },
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
