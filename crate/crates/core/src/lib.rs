//! Policy-gradient estimators for problems whose horizon is a random
//! first-hitting time of a terminal set.

pub mod env;
pub mod error;
pub mod estimators;
pub mod oracle;
pub mod plot;
pub mod policy;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
