pub mod cli;
pub mod data;
pub mod error;
pub mod layers;
pub mod loss;
pub mod models;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Rng, Tensor};
