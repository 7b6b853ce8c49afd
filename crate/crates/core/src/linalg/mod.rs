//! Dense linear algebra: matrices, N-way tensors, Jacobi eigen/singular value
//! decompositions and spectral rank diagnostics.

mod eig;
mod matrix;
mod solve;
mod svd;
mod tensor;

pub use eig::{sym_eig, SymEig, DEFAULT_EIG_TOL, MAX_SWEEPS};
pub(crate) use matrix::{dot, gemm_nn, gemm_nt, gemm_tn};
pub use matrix::{matmul, DenseMatrix};
pub use solve::cholesky_solve;
pub use svd::{effective_rank, effective_rank_of_spectrum, nuclear_norm, svd, Svd};
pub use tensor::{mode_n_product, DenseTensor};
