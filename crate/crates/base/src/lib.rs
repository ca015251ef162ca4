//! Error type and compressed sparse row matrices shared by the solver crates.

mod error;
pub mod sparse;

pub use error::{Error, Result};
