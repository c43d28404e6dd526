pub mod clinic;
pub mod dataset;
mod error;
pub mod eval;
pub mod media;
pub mod model;
pub mod pose;
pub mod report;
pub mod retrieval;
pub mod segment;
pub mod synthetic;
pub mod text;

pub use error::{Error, Result};
