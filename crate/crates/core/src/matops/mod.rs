//! Dense linear-algebra kernels.

pub mod dct;
pub mod eig;
pub mod io;
mod matrix;
pub mod stats;
pub mod svd;

pub use dct::{dct2_block_matrix, dct_matrix};
pub use eig::{sym_eig, EigDecomp};
pub use matrix::{dot, norm_sq, Matrix};
pub use stats::{column_mean, sample_covariance};
pub use svd::{default_pinv_tol, pinv, thin_svd, Svd};
