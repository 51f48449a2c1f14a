pub mod baselines;
pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod harness;
pub mod student;
pub mod teacher;

pub use error::{Error, Result};
