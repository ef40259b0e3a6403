//! Radio map completion with multilinear rank and total-variation
//! regularization, solved by parallel Douglas-Rachford splitting.

pub mod datagen;
pub mod error;
pub mod io;
pub mod problems;
pub mod prox;
pub mod rbf;
pub mod rng;
pub mod samples;
pub mod solver;
pub mod sweep;
pub mod tensor;
pub mod tuning;

pub use error::{Error, Result};
pub use samples::SampleSet;
pub use tensor::DenseTensor;
