use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Matrix;

pub const MAX_SWEEPS: usize = 50;
pub const MAX_DIM: usize = 1024;

/// Eigenvalues of a symmetric matrix, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymSpectrum {
    pub eigenvalues: Vec<f64>,
}

impl SymSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(f64::NAN)
    }

    /// Largest elementwise gap between two sorted spectra of equal length.
    pub fn max_discrepancy(&self, other: &SymSpectrum) -> f64 {
        assert_eq!(self.len(), other.len(), "spectra of different length");
        self.eigenvalues
            .iter()
            .zip(&other.eigenvalues)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigenvalue sweep for a symmetric matrix.
///
/// Stops once the off-diagonal Frobenius mass drops below `tol * ‖G‖_F`.
/// Only the lower triangle of `g` is trusted; the upper triangle is
/// overwritten from it.
pub fn jacobi_eig_sym(g: &Matrix, tol: f64) -> Result<SymSpectrum> {
    if !g.is_square() {
        return Err(Error::DimensionMismatch {
            op: "jacobi_eig_sym",
            left: g.shape(),
            right: g.shape(),
        });
    }
    let n = g.rows();
    if n > MAX_DIM {
        return Err(Error::invalid(format!("jacobi_eig_sym supports n <= {MAX_DIM}, got {n}")));
    }
    let mut a = Matrix::from_fn(n, n, |i, j| if i >= j { g[(i, j)] } else { g[(j, i)] });
    let norm = a.frob_norm();
    if norm == 0.0 || n == 1 {
        return Ok(sorted(a.diagonal()));
    }

    for _sweep in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= tol * norm {
            return Ok(sorted(a.diagonal()));
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[(p, p)], a[(q, q)]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    let new_rp = arp - s * (arq + tau * arp);
                    let new_rq = arq + s * (arp - tau * arq);
                    a[(r, p)] = new_rp;
                    a[(p, r)] = new_rp;
                    a[(r, q)] = new_rq;
                    a[(q, r)] = new_rq;
                }
            }
        }
    }
    if off_diagonal_norm(&a) <= tol * norm {
        return Ok(sorted(a.diagonal()));
    }
    Err(Error::IterationLimit {
        method: "jacobi_eig_sym",
        sweeps: MAX_SWEEPS,
    })
}

fn sorted(mut v: Vec<f64>) -> SymSpectrum {
    v.sort_by(f64::total_cmp);
    SymSpectrum { eigenvalues: v }
}
