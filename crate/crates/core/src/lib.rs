pub mod acquisition;
pub mod baseline;
pub mod bench;
pub mod bundle;
pub mod cli;
pub mod data;
pub mod doe;
pub mod error;
pub mod icm;
pub mod linalg;
pub mod metrics;
pub mod predict;
pub mod sampler;

pub use error::{Error, Result};
