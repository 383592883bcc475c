//! Matrix-whitening optimizers and the numerical machinery behind them.
//!
//! * [`linalg`]: dense kernels with a FLOP ledger, Cholesky, Jacobi eigen/SVD.
//! * [`whitening`]: MUD triangular decorrelation, Newton-Schulz (Muon),
//!   exact polar and CholeskyQR whitening, plus the Gram-space map.
//! * [`optim`]: AdamW, Muon and MUD update rules with schedule and clipping.
//! * [`harness`]: synthetic tasks with analytic gradients and a training loop.
//! * [`analysis`]: instance generators, convergence traces and benchmarks.
//! * [`cli`]: the `mudkit` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod optim;
pub mod rng;
pub mod whitening;

pub use error::{Error, Result};
pub use linalg::{FlopConvention, FlopLedger, Matrix, SymSpectrum};
pub use rng::SplitMix64;
