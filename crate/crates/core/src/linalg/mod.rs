//! Deterministic dense linear algebra in `f64`.

mod eig;
mod kernels;
mod ledger;
mod matrix;
mod svd;

pub use eig::{jacobi_eig_sym, SymSpectrum};
pub use kernels::{
    cholesky, forward_trsm, frob_norm, gram, matmul, row_norms, transpose, tril, DIAG_FLOOR,
    PIVOT_FLOOR_REL,
};
pub(crate) use kernels::{dot, normalize_rows};
pub use ledger::{FlopConvention, FlopLedger};
pub use matrix::Matrix;
pub use svd::{svd_thin, ThinSvd};
