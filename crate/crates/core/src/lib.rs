pub mod adherence;
pub mod canonical;
pub mod cli;
pub mod drift;
pub mod error;
pub mod fixtures;
pub mod monitor;
pub mod reliability;
pub mod report;
pub mod stats;
pub mod store;
pub mod synth;
pub mod within_unit;

pub use error::{Error, Result};
