pub mod assignment;
pub mod baselines;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod imageio;
pub mod matcher;
pub mod puzzle;
pub mod raster;
pub mod rng;

pub use error::{Error, Result};
