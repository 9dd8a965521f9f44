//! Dense linear algebra: the matrix type, products, factorizations and the
//! random number generator used to build instances.

mod eigen;
pub(crate) mod kernel;
mod matrix;
pub(crate) mod polar;
mod qr;
mod rng;

pub use eigen::{jacobi_eigh, SymEigDecomposition, JACOBI_MAX_SWEEPS};
pub use kernel::kernel_name;
pub use matrix::{fro_norm, gram, inner, matmul, matmul_tn, skew, sym, DenseMatrix};
pub use polar::{polar_factor, spectral_map};
pub use qr::thin_qr;
pub use rng::{gaussian_matrix, Rng, RNG_ALGORITHM};
