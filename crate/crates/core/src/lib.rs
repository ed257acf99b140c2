pub mod error;
pub mod lwa;
pub mod noise;
pub mod scene;
pub mod alloc;
pub mod linalg;
pub mod baselines;
pub mod music;
pub mod experiments;

pub use error::{Error, Result};
