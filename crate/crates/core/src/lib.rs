pub mod cli;
pub mod data;
pub mod error;
pub mod kalman;
pub mod numerics;
pub mod pflow;
pub mod rng;
pub mod statespace;
pub mod ukf;

pub use error::{Error, Result};
