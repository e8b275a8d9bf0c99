pub mod config;
pub mod error;
pub mod estimator;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod kernel;
pub mod mollifier;
pub mod nufft;
pub mod quadrature;
pub mod scene;

pub use error::{Error, Result};
