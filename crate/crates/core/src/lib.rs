pub mod analytic;
pub mod chain;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod learner;
pub mod rng;
pub mod sim;
pub mod stationary;

pub use error::{Error, Result};
