use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("drive schedule is empty")]
    EmptyDrive,
    #[error(
        "oracle step {step:e} s exceeds the limit of {limit:e} s (200 steps per carrier period)"
    )]
    StepTooLarge { step: f64, limit: f64 },
    #[error("amplitude {amplitude} V does not exceed the diode threshold {threshold} V")]
    NotConducting { amplitude: f64, threshold: f64 },
    #[error("no steady state within {horizon:e} s for amplitude {amplitude} V")]
    NoConvergence { amplitude: f64, horizon: f64 },
    #[error("no positive amplitude spacing reaches average power {target} with M = {order}, A_min = {min_amplitude}")]
    Infeasible {
        order: usize,
        min_amplitude: f64,
        target: f64,
    },
    #[error("length {len} is not a multiple of {multiple}")]
    LengthMismatch { len: usize, multiple: usize },
    #[error("block of {len} symbols exceeds the configured block length {block_length}")]
    BlockTooLong { len: usize, block_length: usize },
    #[error("{candidates} candidate sequences exceed the enumeration budget of {budget}")]
    BudgetExceeded { candidates: u128, budget: usize },
    #[error("adjacent output ranges of symbols {lower} and {upper} overlap; bounded ML is unusable, use MLSD")]
    Overlap { lower: usize, upper: usize },
    #[error("invalid link configuration: {0}")]
    InvalidConfig(String),
}
