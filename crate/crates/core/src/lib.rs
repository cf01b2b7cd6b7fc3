pub mod classifiers;
pub mod dataset;
pub mod error;
pub mod feature_extraction;
pub mod feature_selection;
pub mod harness;
pub mod hierarchy;
pub mod numerics;
pub mod persist;
pub mod rng;
pub mod sampling;
pub mod selftest;

pub use error::{Error, Result};
pub use numerics::Matrix;
