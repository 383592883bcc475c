use crate::error::{Error, Result};

use super::kernels::dot;
use super::Matrix;

const MAX_SWEEPS: usize = 60;

/// Thin SVD `M = U diag(sigma) Vᵀ` of a wide matrix (`k <= d`).
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// `k x k`, orthogonal.
    pub u: Matrix,
    /// Descending, non-negative.
    pub sigma: Vec<f64>,
    /// `d x k`, orthonormal columns.
    pub v: Matrix,
}

impl ThinSvd {
    pub fn reconstruct(&self) -> Matrix {
        let us = Matrix::from_fn(self.u.rows(), self.u.cols(), |i, j| self.u[(i, j)] * self.sigma[j]);
        us.matmul(&self.v.transpose()).expect("thin svd factors are conformant")
    }

    pub fn condition_number(&self) -> f64 {
        let max = self.sigma.first().copied().unwrap_or(0.0);
        let min = self.sigma.last().copied().unwrap_or(0.0);
        max / min
    }
}

/// One-sided (Hestenes) Jacobi SVD acting on the rows of `m`.
///
/// Row pairs are rotated until every pair is orthogonal to within `tol`
/// relative to the product of their norms. The threshold is clamped from
/// below by the rounding level of a length-`d` dot product.
pub fn svd_thin(m: &Matrix, tol: f64) -> Result<ThinSvd> {
    let (k, d) = m.shape();
    if k > d {
        return Err(Error::invalid(format!(
            "svd_thin expects rows <= cols, got {k}x{d}; transpose first"
        )));
    }
    if k > super::eig::MAX_DIM {
        return Err(Error::invalid(format!("svd_thin supports k <= 1024, got {k}")));
    }
    let thresh = tol.max(4.0 * (d as f64).sqrt() * f64::EPSILON);

    let mut w = m.clone();
    let mut r = Matrix::identity(k);
    let mut converged = k < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..k - 1 {
            for q in p + 1..k {
                let alpha = dot(w.row(p), w.row(p));
                let beta = dot(w.row(q), w.row(q));
                let gamma = dot(w.row(p), w.row(q));
                let scale = (alpha * beta).sqrt();
                if scale == 0.0 || gamma.abs() <= thresh * scale {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, p, q, c, s);
                rotate_rows(&mut r, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::IterationLimit {
            method: "svd_thin",
            sweeps: MAX_SWEEPS,
        });
    }

    let norms: Vec<f64> = (0..k).map(|i| dot(w.row(i), w.row(i)).sqrt()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let sigma: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    let tiny = sigma_max * 1e-150;

    // M = Rᵀ W, so U = Rᵀ with columns permuted.
    let u = Matrix::from_fn(k, k, |i, j| r[(order[j], i)]);
    let mut v = Matrix::zeros(d, k);
    let mut missing = Vec::new();
    for (j, &src) in order.iter().enumerate() {
        let s = norms[src];
        if s > tiny && s > 0.0 {
            for c in 0..d {
                v[(c, j)] = w[(src, c)] / s;
            }
        } else {
            missing.push(j);
        }
    }
    complete_columns(&mut v, &missing);

    Ok(ThinSvd { u, sigma, v })
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fill the listed (zero) columns of `v` with unit vectors orthogonal to
/// every other column, by Gram-Schmidt on standard basis candidates.
fn complete_columns(v: &mut Matrix, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let (d, k) = v.shape();
    let mut filled: Vec<usize> = (0..k).filter(|j| !missing.contains(j)).collect();
    let mut candidate = 0;
    for &j in missing {
        while candidate < d {
            let mut x = vec![0.0; d];
            x[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &f in &filled {
                    let proj: f64 = (0..d).map(|r| v[(r, f)] * x[r]).sum();
                    for (r, xr) in x.iter_mut().enumerate() {
                        *xr -= proj * v[(r, f)];
                    }
                }
            }
            let n = dot(&x, &x).sqrt();
            if n > 0.5 {
                for (r, xr) in x.iter().enumerate() {
                    v[(r, j)] = xr / n;
                }
                filled.push(j);
                break;
            }
        }
    }
}
