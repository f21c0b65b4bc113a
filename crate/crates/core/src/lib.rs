pub mod detection;
pub mod error;
pub mod experiments;
pub mod modem;
pub mod rectifier;

pub use error::{Error, Result};
