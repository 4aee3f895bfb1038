use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse {what}: {message}")]
    Parse { what: &'static str, message: String },

    #[error("missing required key `{0}`")]
    MissingKey(&'static str),

    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: &'static str, reason: String },

    #[error(
        "infeasible geometry (`min_spacing`): cannot place {antennas} antennas \
         with spacing {min_spacing} m inside the region"
    )]
    InfeasibleRegion { antennas: usize, min_spacing: f64 },

    #[error("subcarrier index {index} out of range 1..={count}")]
    SubcarrierOutOfRange { index: usize, count: usize },

    #[error("covariance on subcarrier {subcarrier} is not positive definite")]
    NotPositiveDefinite { subcarrier: usize },

    #[error("no admissible lattice point left for antenna {antenna}")]
    EmptyFeasibleSet { antenna: usize },

    #[error("cyclic prefix of {cp_len} samples is shorter than the maximum delay {max_delay}")]
    CyclicPrefixTooShort { cp_len: usize, max_delay: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(key: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidValue {
            key,
            reason: reason.into(),
        }
    }
}
