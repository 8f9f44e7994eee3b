pub mod conditional;
pub mod csvio;
pub mod domain;
pub mod error;
pub mod inference;
pub mod kernels;
pub mod linalg;
pub mod predict;
pub mod quad;
pub mod sim;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
