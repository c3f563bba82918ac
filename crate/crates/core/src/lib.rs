pub mod bench;
pub mod error;
pub mod matops;
pub mod modelsel;
pub mod rng;
pub mod satc;
pub mod spca;
pub mod synth;
pub mod vq;

pub use error::{Error, Result};
pub use matops::Matrix;
