//! Dense kernels: GEMM, Gram, forward TRSM, Cholesky and simple reductions.
//!
//! All loops are single-threaded with a fixed summation order, so results
//! are bit-reproducible on a given platform. Products stream the right-hand
//! operand in column tiles of [`COL_TILE`] entries to stay cache resident
//! at the ~512x2048 sizes the optimizers see.

use crate::error::{Error, Result};

use super::{FlopLedger, Matrix};

const COL_TILE: usize = 256;

/// Smallest admissible |T[i][i]| in [`forward_trsm`].
pub const DIAG_FLOOR: f64 = 1e-12;

/// Cholesky pivots must exceed this fraction of the largest diagonal entry.
pub const PIVOT_FLOOR_REL: f64 = 1e-12;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `C = A B`. Counts `2 m n p` FLOPs as GEMM.
pub fn matmul(a: &Matrix, b: &Matrix, ledger: &mut FlopLedger) -> Result<Matrix> {
    if a.cols() != b.rows() {
        return Err(Error::DimensionMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (m, inner, n) = (a.rows(), a.cols(), b.cols());
    let mut c = Matrix::zeros(m, n);
    let bs = b.as_slice();
    let cs = c.as_mut_slice();
    for c0 in (0..n).step_by(COL_TILE) {
        let c1 = (c0 + COL_TILE).min(n);
        for i in 0..m {
            let arow = a.row(i);
            let crow = &mut cs[i * n + c0..i * n + c1];
            for (l, &ail) in arow.iter().enumerate() {
                if ail != 0.0 {
                    axpy(ail, &bs[l * n + c0..l * n + c1], crow);
                }
            }
        }
    }
    ledger.add_gemm(2 * (m * inner * n) as u64);
    Ok(c)
}

/// Row Gram matrix `M Mᵀ`, exactly symmetric.
///
/// Only the upper triangle is computed and mirrored, but the ledger records
/// the conventional `2 k² d` FLOPs of a full GEMM.
pub fn gram(m: &Matrix, ledger: &mut FlopLedger) -> Matrix {
    let (k, d) = m.shape();
    let mut g = Matrix::zeros(k, k);
    let ms = m.as_slice();
    for c0 in (0..d).step_by(COL_TILE) {
        let c1 = (c0 + COL_TILE).min(d);
        for i in 0..k {
            let ri = &ms[i * d + c0..i * d + c1];
            for j in i..k {
                let rj = &ms[j * d + c0..j * d + c1];
                g[(i, j)] += dot(ri, rj);
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    ledger.add_gemm(2 * (k * k * d) as u64);
    g
}

/// Solve `T X = B` by forward substitution, `T` lower triangular.
///
/// Entries strictly above the diagonal of `T` are ignored.
pub fn forward_trsm(t: &Matrix, b: &Matrix, ledger: &mut FlopLedger) -> Result<Matrix> {
    if !t.is_square() || t.rows() != b.rows() {
        return Err(Error::DimensionMismatch {
            op: "forward_trsm",
            left: t.shape(),
            right: b.shape(),
        });
    }
    let (k, d) = b.shape();
    for i in 0..k {
        let tii = t[(i, i)];
        if !(tii.abs() >= DIAG_FLOOR) {
            return Err(Error::SingularTriangular { row: i, value: tii });
        }
    }
    let mut x = b.clone();
    let xs = x.as_mut_slice();
    for c0 in (0..d).step_by(COL_TILE) {
        let c1 = (c0 + COL_TILE).min(d);
        for i in 0..k {
            let (solved, rest) = xs.split_at_mut(i * d);
            let xi = &mut rest[c0..c1];
            for j in 0..i {
                let tij = t[(i, j)];
                if tij != 0.0 {
                    axpy(-tij, &solved[j * d + c0..j * d + c1], xi);
                }
            }
            let inv = 1.0 / t[(i, i)];
            xi.iter_mut().for_each(|v| *v *= inv);
        }
    }
    ledger.add_trsm(k, d);
    Ok(x)
}

/// Lower Cholesky factor `L` with `L Lᵀ = G`. Only the lower triangle of `G` is read.
pub fn cholesky(g: &Matrix) -> Result<Matrix> {
    if !g.is_square() {
        return Err(Error::DimensionMismatch {
            op: "cholesky",
            left: g.shape(),
            right: g.shape(),
        });
    }
    let n = g.rows();
    let max_diag = g.diagonal().into_iter().fold(0.0, f64::max);
    let floor = PIVOT_FLOOR_REL * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let ljrow = &l.row(j)[..j];
        let pivot = g[(j, j)] - dot(ljrow, ljrow);
        if !(pivot > floor) {
            return Err(Error::NotSpd { pivot: j, value: pivot });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let s = g[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

pub fn transpose(m: &Matrix) -> Matrix {
    let (r, c) = m.shape();
    let mut t = Matrix::zeros(c, r);
    // blocked to keep both sides in cache
    const B: usize = 32;
    for i0 in (0..r).step_by(B) {
        for j0 in (0..c).step_by(B) {
            for i in i0..(i0 + B).min(r) {
                for j in j0..(j0 + B).min(c) {
                    t[(j, i)] = m[(i, j)];
                }
            }
        }
    }
    t
}

/// Lower triangle including the diagonal.
pub fn tril(g: &Matrix) -> Matrix {
    let mut t = g.clone();
    let c = t.cols();
    for i in 0..t.rows() {
        for j in (i + 1)..c {
            t[(i, j)] = 0.0;
        }
    }
    t
}

pub fn row_norms(m: &Matrix, ledger: &mut FlopLedger) -> Vec<f64> {
    let out = (0..m.rows()).map(|i| dot(m.row(i), m.row(i)).sqrt()).collect();
    ledger.add_reduction(2 * (m.rows() * m.cols()) as u64);
    out
}

pub fn frob_norm(m: &Matrix, ledger: &mut FlopLedger) -> f64 {
    ledger.add_reduction(2 * m.as_slice().len() as u64);
    dot(m.as_slice(), m.as_slice()).sqrt()
}

/// Scale each row to unit length, dividing by `max(norm, eps)`.
pub(crate) fn normalize_rows(m: &mut Matrix, eps: f64, ledger: &mut FlopLedger) {
    let norms = row_norms(m, ledger);
    for (i, r) in norms.into_iter().enumerate() {
        let inv = 1.0 / r.max(eps);
        m.row_mut(i).iter_mut().for_each(|v| *v *= inv);
    }
}

impl Matrix {
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        matmul(self, other, &mut FlopLedger::new())
    }

    pub fn gram(&self) -> Matrix {
        gram(self, &mut FlopLedger::new())
    }

    pub fn transpose(&self) -> Matrix {
        transpose(self)
    }

    pub fn tril(&self) -> Matrix {
        tril(self)
    }

    pub fn frob_norm(&self) -> f64 {
        dot(self.as_slice(), self.as_slice()).sqrt()
    }

    pub fn row_norms(&self) -> Vec<f64> {
        row_norms(self, &mut FlopLedger::new())
    }
}
