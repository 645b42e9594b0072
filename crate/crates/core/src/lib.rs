pub mod diffmath;
pub mod error;
pub mod evaluation;
pub mod graphstore;
pub mod harness;
pub mod models;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
