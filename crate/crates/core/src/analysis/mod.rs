//! Instance generators with controlled spectra, convergence tracing of the
//! Gram-space map, and FLOP/time benchmarks of the whitening operators.

mod bench;
mod generators;
mod trace;

pub use bench::{bench, BenchOp, BenchRow, BENCH_CSV_HEADER};
pub use generators::{random_row_orthonormal, random_unit_diag_spd, random_with_spectrum, SpectrumSpec};
pub use trace::{fit_slope, quadratic_constant, slope_pairs, trace_convergence, SLOPE_WINDOW, TRACE_FLOOR};
