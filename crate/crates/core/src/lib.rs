pub mod error;
pub mod experiments;
pub mod analysis;
pub mod besov;
pub mod drift;
pub mod grid;
pub mod kernel;
pub mod noise;
pub mod scheme;
pub mod solver;

pub use error::{Error, Result};
