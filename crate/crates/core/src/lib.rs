//! Concept bottleneck models with concept-level information bottleneck
//! regularization, leakage metrics and test-time intervention tooling.

pub mod datagen;
pub mod diffcore;
pub mod error;
pub mod info;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
