pub mod autodiff;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod gradsuite;
pub mod model;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
