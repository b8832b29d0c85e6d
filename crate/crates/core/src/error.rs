use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Range rate is non-negative, so no time-to-go exists.
    #[error("engagement over: range rate {range_rate} m/s is not closing")]
    EngagementOver { range_rate: f64 },

    #[error("engagement terminated: range collapsed to {rho} m")]
    RangeCollapsed { rho: f64 },

    #[error("no closest approach found before t = {t_cap} s (last range {last_range} m)")]
    NoClosestApproach { t_cap: f64, last_range: f64 },

    #[error("empty sample set")]
    EmptySamples,

    #[error("missing previous cloud at step {step}")]
    MissingPreviousCloud { step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn domain(what: &'static str, value: f64) -> Error {
    Error::Domain { what, value }
}
