//! Row-whitening operators and the Gram-space MUD map.
//!
//! Every operator works on the `k x d` orientation (`k <= d`); inputs with
//! more rows than columns are transposed on entry and the result is
//! transposed back, so callers can pass parameter-shaped matrices directly.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, cholesky, forward_trsm, jacobi_eig_sym, matmul, normalize_rows, svd_thin, FlopLedger,
    Matrix, SymSpectrum,
};

/// Quintic Newton-Schulz coefficients `(a, b, c)` used by Muon.
pub const NS_COEFFS: (f64, f64, f64) = (3.4445, -4.7750, 2.0315);

const EIG_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WhitenConfig {
    /// MUD passes.
    pub passes: usize,
    /// Newton-Schulz iterations.
    pub ns_iters: usize,
    pub eps: f64,
    pub ns_coeffs: (f64, f64, f64),
}

impl Default for WhitenConfig {
    fn default() -> Self {
        Self {
            passes: 1,
            ns_iters: 5,
            eps: 1e-8,
            ns_coeffs: NS_COEFFS,
        }
    }
}

impl WhitenConfig {
    pub fn with_passes(passes: usize) -> Self {
        Self {
            passes,
            ..Self::default()
        }
    }

    pub fn with_ns_iters(ns_iters: usize) -> Self {
        Self {
            ns_iters,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.passes == 0 {
            return Err(Error::invalid("passes must be >= 1"));
        }
        if self.ns_iters == 0 {
            return Err(Error::invalid("ns_iters must be >= 1"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct WhitenReport {
    pub output: Matrix,
    /// `‖QQᵀ - I‖_F` along the small dimension.
    pub ortho_residual: f64,
    pub ledger: FlopLedger,
    pub wall_seconds: f64,
}

impl WhitenReport {
    fn finish(output: Matrix, ledger: FlopLedger, started: Instant) -> Self {
        let wall_seconds = started.elapsed().as_secs_f64();
        let ortho_residual = ortho_residual(&output);
        Self {
            output,
            ortho_residual,
            ledger,
            wall_seconds,
        }
    }
}

/// Deviation of one Gram iterate from the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub pass: usize,
    pub linf: f64,
    pub l1: f64,
    pub fro: f64,
}

impl TracePoint {
    pub fn of(pass: usize, g: &Matrix) -> Self {
        let e = g
            .sub(&Matrix::identity(g.rows()))
            .expect("gram iterate is square");
        Self {
            pass,
            linf: e.norm_inf(),
            l1: e.norm_one(),
            fro: e.frob_norm(),
        }
    }

    pub fn get(&self, norm: DeviationNorm) -> f64 {
        match norm {
            DeviationNorm::Linf => self.linf,
            DeviationNorm::L1 => self.l1,
            DeviationNorm::Fro => self.fro,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviationNorm {
    Linf,
    L1,
    Fro,
}

/// Sequence of `‖G_t - I‖` over passes of the Gram-space map.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GramTrace {
    pub points: Vec<TracePoint>,
}

impl GramTrace {
    pub fn series(&self, norm: DeviationNorm) -> Vec<f64> {
        self.points.iter().map(|p| p.get(norm)).collect()
    }
}

/// Transpose to `k x d` with `k <= d`. Square inputs are left alone.
pub fn shape_normalize(m: &Matrix) -> (Matrix, bool) {
    if m.rows() > m.cols() {
        (m.transpose(), true)
    } else {
        (m.clone(), false)
    }
}

fn restore(q: Matrix, transposed: bool) -> Matrix {
    if transposed {
        q.transpose()
    } else {
        q
    }
}

/// MUD: `passes` rounds of row-normalise, Gram, lower-triangular solve, renormalise.
///
/// Rows are normalised by `max(‖row‖, eps)`. A row that has collapsed to zero
/// has a zero Gram diagonal; that diagonal is replaced by one before the solve
/// so the row stays zero.
pub fn mud_whiten(m: &Matrix, cfg: &WhitenConfig) -> Result<WhitenReport> {
    cfg.validate()?;
    let started = Instant::now();
    let mut ledger = FlopLedger::new();
    let (mut q, transposed) = shape_normalize(m);
    for _ in 0..cfg.passes {
        normalize_rows(&mut q, cfg.eps, &mut ledger);
        let g = linalg::gram(&q, &mut ledger);
        let mut t = g.tril();
        for i in 0..t.rows() {
            if t[(i, i)] < cfg.eps {
                t[(i, i)] = 1.0;
            }
        }
        q = forward_trsm(&t, &q, &mut ledger)?;
        normalize_rows(&mut q, cfg.eps, &mut ledger);
    }
    Ok(WhitenReport::finish(restore(q, transposed), ledger, started))
}

/// Muon's quintic Newton-Schulz iteration on the Frobenius-normalised input.
pub fn muon_ns(m: &Matrix, cfg: &WhitenConfig) -> Result<WhitenReport> {
    cfg.validate()?;
    let started = Instant::now();
    let mut ledger = FlopLedger::new();
    let (mut x, transposed) = shape_normalize(m);
    let norm = linalg::frob_norm(&x, &mut ledger);
    x.scale_in_place(1.0 / (norm + cfg.eps));
    let (a, b, c) = cfg.ns_coeffs;
    for _ in 0..cfg.ns_iters {
        let gram = linalg::gram(&x, &mut ledger);
        let ax = matmul(&gram, &x, &mut ledger)?;
        let aax = matmul(&gram, &ax, &mut ledger)?;
        let xs = x.as_mut_slice();
        for ((xi, axi), aaxi) in xs.iter_mut().zip(ax.as_slice()).zip(aax.as_slice()) {
            *xi = a * *xi + b * axi + c * aaxi;
        }
    }
    Ok(WhitenReport::finish(restore(x, transposed), ledger, started))
}

/// Exact polar factor `U Vᵀ` from a thin SVD.
pub fn polar_exact(m: &Matrix) -> Result<WhitenReport> {
    let started = Instant::now();
    let mut ledger = FlopLedger::new();
    let (mk, transposed) = shape_normalize(m);
    let svd = svd_thin(&mk, 1e-14)?;
    let smax = svd.sigma.first().copied().unwrap_or(0.0);
    let smin = svd.sigma.last().copied().unwrap_or(0.0);
    if !(smin > 1e-10 * smax) {
        let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
        return Err(Error::RankDeficient { ratio });
    }
    let q = matmul(&svd.u, &svd.v.transpose(), &mut ledger)?;
    Ok(WhitenReport::finish(restore(q, transposed), ledger, started))
}

/// CholeskyQR whitening `L⁻¹ M` with `L = chol(M Mᵀ)`.
pub fn cholqr_whiten(m: &Matrix) -> Result<WhitenReport> {
    let started = Instant::now();
    let mut ledger = FlopLedger::new();
    let (mk, transposed) = shape_normalize(m);
    let g = linalg::gram(&mk, &mut ledger);
    let l = cholesky(&g)?;
    let q = forward_trsm(&l, &mk, &mut ledger)?;
    Ok(WhitenReport::finish(restore(q, transposed), ledger, started))
}

/// Symmetric scaling to unit diagonal, `D^{-1/2} G D^{-1/2}`.
pub fn corr_normalize(g: &Matrix) -> Result<Matrix> {
    check_square("corr_normalize", g)?;
    let n = g.rows();
    let mut inv_sqrt = Vec::with_capacity(n);
    for (i, d) in g.diagonal().into_iter().enumerate() {
        if !(d > 0.0) {
            return Err(Error::NonPositiveDiagonal { index: i, value: d });
        }
        inv_sqrt.push(1.0 / d.sqrt());
    }
    let mut out = Matrix::from_fn(n, n, |i, j| g[(i, j)] * (inv_sqrt[i] * inv_sqrt[j]));
    for i in 0..n {
        out[(i, i)] = 1.0;
    }
    Ok(out)
}

fn check_square(op: &'static str, g: &Matrix) -> Result<()> {
    if !g.is_square() {
        return Err(Error::DimensionMismatch {
            op,
            left: g.shape(),
            right: g.shape(),
        });
    }
    Ok(())
}

fn check_unit_diagonal(op: &str, g: &Matrix) -> Result<()> {
    for (i, d) in g.diagonal().into_iter().enumerate() {
        if !((d - 1.0).abs() <= 1e-10) {
            return Err(Error::invalid(format!(
                "{op} needs a unit diagonal, entry {i} is {d}"
            )));
        }
    }
    Ok(())
}

/// `T⁻¹ G T⁻ᵀ` with `T = tril(G)`, symmetrised.
fn inner_congruence(g: &Matrix, ledger: &mut FlopLedger) -> Result<Matrix> {
    let t = g.tril();
    let x = forward_trsm(&t, g, ledger)?;
    let b = forward_trsm(&t, &x.transpose(), ledger)?;
    Ok(symmetrize(&b))
}

fn symmetrize(b: &Matrix) -> Matrix {
    Matrix::from_fn(b.rows(), b.cols(), |i, j| 0.5 * (b[(i, j)] + b[(j, i)]))
}

/// One step of the MUD fixed-point map in Gram space,
/// `G ↦ Corr(tril(G)⁻¹ G tril(G)⁻ᵀ)`, for unit-diagonal `G`.
pub fn gram_map(g: &Matrix) -> Result<Matrix> {
    check_square("gram_map", g)?;
    check_unit_diagonal("gram_map", g)?;
    let b = inner_congruence(g, &mut FlopLedger::new())?;
    corr_normalize(&b)
}

/// Spectra of the MUD inner congruence `B = T⁻¹GT⁻ᵀ` and of the symmetric
/// Gauss-Seidel preconditioned matrix `(TTᵀ)⁻¹G`.
///
/// The second spectrum is obtained independently: `TTᵀ` is formed explicitly,
/// factored by Cholesky, and the generalized problem `Gx = λ(TTᵀ)x` is reduced
/// to a standard symmetric one.
pub fn sgs_preconditioned_spectrum(g: &Matrix) -> Result<(SymSpectrum, SymSpectrum)> {
    check_square("sgs_preconditioned_spectrum", g)?;
    check_unit_diagonal("sgs_preconditioned_spectrum", g)?;
    let mut ledger = FlopLedger::new();
    let b = inner_congruence(g, &mut ledger)?;
    let spec_b = jacobi_eig_sym(&b, EIG_TOL)?;

    let t = g.tril();
    let precond = matmul(&t, &t.transpose(), &mut ledger)?;
    let l = cholesky(&symmetrize(&precond))?;
    let y = forward_trsm(&l, g, &mut ledger)?;
    let c = forward_trsm(&l, &y.transpose(), &mut ledger)?;
    let spec_sgs = jacobi_eig_sym(&symmetrize(&c), EIG_TOL)?;
    Ok((spec_b, spec_sgs))
}

/// `‖QQᵀ - I_k‖_F` measured along the smaller dimension.
pub fn ortho_residual(q: &Matrix) -> f64 {
    let (qk, _) = shape_normalize(q);
    let g = linalg::gram(&qk, &mut FlopLedger::new());
    let mut s = 0.0;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let e = g[(i, j)] - if i == j { 1.0 } else { 0.0 };
            s += e * e;
        }
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn row_orthonormal(k: usize, d: usize, rng: &mut SplitMix64) -> Matrix {
        let svd = svd_thin(&Matrix::gaussian(k, d, rng), 1e-15).unwrap();
        svd.u.matmul(&svd.v.transpose()).unwrap()
    }

    /// Scalar Newton-Schulz recurrence, written out independently.
    fn phi(x0: f64, iters: usize) -> f64 {
        let (a, b, c) = (3.4445, -4.7750, 2.0315);
        let mut x = x0;
        for _ in 0..iters {
            x = a * x + b * x.powi(3) + c * x.powi(5);
        }
        x
    }

    #[test]
    fn shape_normalize_cases() {
        let wide = Matrix::zeros(3, 5);
        assert_eq!(shape_normalize(&wide), (wide.clone(), false));
        let mut rng = SplitMix64::new(1);
        let tall = Matrix::gaussian(5, 3, &mut rng);
        let (t, flag) = shape_normalize(&tall);
        assert!(flag);
        assert_eq!(t.shape(), (3, 5));
        assert_eq!(t.transpose(), tall);
        let sq = Matrix::gaussian(4, 4, &mut rng);
        assert_eq!(shape_normalize(&sq), (sq.clone(), false));
    }

    #[test]
    fn mud_fixed_point_on_orthonormal_rows() {
        let mut rng = SplitMix64::new(2);
        let q = row_orthonormal(6, 15, &mut rng);
        for p in 1..=3 {
            let r = mud_whiten(&q, &WhitenConfig::with_passes(p)).unwrap();
            assert!(r.output.max_abs_diff(&q) < 1e-10);
        }
        let r = mud_whiten(&q.transpose(), &WhitenConfig::default()).unwrap();
        assert!(r.output.max_abs_diff(&q.transpose()) < 1e-10);
    }

    #[test]
    fn mud_one_pass_whitens_two_correlated_rows() {
        let rho: f64 = 0.6;
        let d = 7;
        let mut m = Matrix::zeros(2, d);
        m[(0, 0)] = 1.0;
        m[(1, 0)] = rho;
        m[(1, 1)] = (1.0 - rho * rho).sqrt();
        let r = mud_whiten(&m, &WhitenConfig::default()).unwrap();
        let g = r.output.gram();
        assert!(g.max_abs_diff(&Matrix::identity(2)) < 1e-10);
    }

    #[test]
    fn mud_contracts_random_gaussian() {
        let mut rng = SplitMix64::new(3);
        let m = Matrix::gaussian(64, 256, &mut rng);
        let input = ortho_residual(&rownorm(&m));
        let one = mud_whiten(&m, &WhitenConfig::with_passes(1)).unwrap();
        let two = mud_whiten(&m, &WhitenConfig::with_passes(2)).unwrap();
        let cholqr = cholqr_whiten(&m).unwrap();
        assert!(one.ortho_residual < input, "{} vs {input}", one.ortho_residual);
        assert!(two.ortho_residual <= 6.0 * one.ortho_residual.powi(2));
        assert!(cholqr.ortho_residual < 1e-10);
        for n in one.output.row_norms() {
            assert!((n - 1.0).abs() < 1e-10);
        }
    }

    pub(crate) fn rownorm(m: &Matrix) -> Matrix {
        let mut q = m.clone();
        normalize_rows(&mut q, 1e-8, &mut FlopLedger::new());
        q
    }

    #[test]
    fn mud_keeps_zero_rows_zero() {
        let m = Matrix::from_rows(&[[1.0, 2.0, 0.0, 1.0], [0.0, 0.0, 0.0, 0.0], [0.5, 0.0, 1.0, 0.0]]);
        let r = mud_whiten(&m, &WhitenConfig::with_passes(2)).unwrap();
        assert!(r.output.row(1).iter().all(|&x| x == 0.0));
        let norms = r.output.row_norms();
        assert!((norms[0] - 1.0).abs() < 1e-10 && (norms[2] - 1.0).abs() < 1e-10);

        let z = mud_whiten(&Matrix::zeros(3, 4), &WhitenConfig::default()).unwrap();
        assert_eq!(z.output, Matrix::zeros(3, 4));
    }

    #[test]
    fn mud_rejects_zero_passes() {
        let err = mud_whiten(&Matrix::identity(2), &WhitenConfig::with_passes(0)).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn muon_zero_and_scalar() {
        let z = muon_ns(&Matrix::zeros(3, 4), &WhitenConfig::default()).unwrap();
        assert_eq!(z.output, Matrix::zeros(3, 4));

        let r = muon_ns(&Matrix::from_rows(&[[2.0]]), &WhitenConfig::default()).unwrap();
        let want = phi(2.0 / (2.0 + 1e-8), 5);
        assert!((r.output[(0, 0)] - want).abs() < 1e-14);
        assert!((want - 0.70).abs() < 0.05, "{want}");
    }

    #[test]
    fn muon_transports_singular_values() {
        let mut rng = SplitMix64::new(4);
        let (k, d) = (5, 12);
        let u = row_orthonormal(k, k, &mut rng);
        let vt = row_orthonormal(k, d, &mut rng);
        let sigma = [3.0, 1.5, 1.0, 0.4, 0.05];
        let m = Matrix::from_fn(k, k, |i, j| u[(i, j)] * sigma[j]).matmul(&vt).unwrap();
        let fro: f64 = sigma.iter().map(|s| s * s).sum::<f64>().sqrt();
        let phis: Vec<f64> = sigma.iter().map(|s| phi(s / (fro + 1e-8), 5)).collect();
        let want = Matrix::from_fn(k, k, |i, j| u[(i, j)] * phis[j]).matmul(&vt).unwrap();
        let got = muon_ns(&m, &WhitenConfig::default()).unwrap();
        assert!(got.output.max_abs_diff(&want) < 1e-8);
        // tall orientation is handled by transposition
        let got_t = muon_ns(&m.transpose(), &WhitenConfig::default()).unwrap();
        assert!(got_t.output.max_abs_diff(&want.transpose()) < 1e-8);
    }

    #[test]
    fn muon_ledger_is_30_k2d() {
        let mut rng = SplitMix64::new(5);
        let (k, d) = (8, 40);
        let r = muon_ns(&Matrix::gaussian(k, d, &mut rng), &WhitenConfig::default()).unwrap();
        assert_eq!(r.ledger.gemm_flops, 30 * (k * k * d) as u64);
        assert_eq!(r.ledger.trsm_flops, 0);
    }

    #[test]
    fn polar_cases() {
        let mut rng = SplitMix64::new(6);
        let q = row_orthonormal(4, 9, &mut rng);
        assert!(polar_exact(&q).unwrap().output.max_abs_diff(&q) < 1e-9);

        let d = Matrix::from_rows(&[[3.0, 0.0], [0.0, 2.0]]);
        assert!(polar_exact(&d).unwrap().output.max_abs_diff(&Matrix::identity(2)) < 1e-12);

        let m = Matrix::gaussian(8, 32, &mut rng);
        let p = polar_exact(&m).unwrap();
        let c = cholqr_whiten(&m).unwrap();
        assert!(p.ortho_residual < 1e-9);
        let dp = m.sub(&p.output).unwrap().frob_norm();
        let dc = m.sub(&c.output).unwrap().frob_norm();
        assert!(dp <= dc);
    }

    #[test]
    fn polar_rejects_rank_deficient() {
        let m = Matrix::from_rows(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]);
        assert!(matches!(polar_exact(&m), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn cholqr_cases() {
        let mut rng = SplitMix64::new(7);
        let q = row_orthonormal(3, 8, &mut rng);
        assert!(cholqr_whiten(&q).unwrap().output.max_abs_diff(&q) < 1e-9);

        let m = Matrix::from_rows(&[[2.0, 0.0, 0.0, 0.0], [0.0, 3.0, 0.0, 0.0]]);
        let want = Matrix::from_rows(&[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]);
        assert!(cholqr_whiten(&m).unwrap().output.max_abs_diff(&want) < 1e-15);

        let m = Matrix::gaussian(16, 64, &mut rng);
        assert!(cholqr_whiten(&m).unwrap().ortho_residual <= 1e-8 * 16.0);
    }

    #[test]
    fn cholqr_surfaces_not_spd() {
        let m = Matrix::from_rows(&[[1.0, 1.0, 0.0], [1.0, 1.0, 0.0]]);
        assert!(matches!(cholqr_whiten(&m), Err(Error::NotSpd { .. })));
    }

    #[test]
    fn corr_normalize_cases() {
        assert_eq!(corr_normalize(&Matrix::identity(3)).unwrap(), Matrix::identity(3));
        let c = corr_normalize(&Matrix::from_rows(&[[4.0, 2.0], [2.0, 1.0]])).unwrap();
        assert_eq!(c, Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]));
        let err = corr_normalize(&Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]])).unwrap_err();
        assert_eq!(err, Error::NonPositiveDiagonal { index: 1, value: 0.0 });
    }

    #[test]
    fn gram_map_two_by_two_is_exact() {
        for rho in [-0.9, -0.5, -0.1, 0.1, 0.5, 0.9, 0.999] {
            let g = Matrix::from_rows(&[[1.0, rho], [rho, 1.0]]);
            let out = gram_map(&g).unwrap();
            assert!(out.max_abs_diff(&Matrix::identity(2)) < 1e-12, "rho {rho}");
        }
        assert_eq!(gram_map(&Matrix::identity(5)).unwrap(), Matrix::identity(5));
    }

    #[test]
    fn gram_map_needs_unit_diagonal() {
        assert!(gram_map(&Matrix::from_rows(&[[2.0, 0.0], [0.0, 1.0]])).is_err());
    }

    #[test]
    fn sgs_two_by_two() {
        let g = Matrix::from_rows(&[[1.0, 0.5], [0.5, 1.0]]);
        let (b, m) = sgs_preconditioned_spectrum(&g).unwrap();
        for s in [&b, &m] {
            assert!((s.eigenvalues[0] - 0.75).abs() < 1e-12);
            assert!((s.eigenvalues[1] - 1.0).abs() < 1e-12);
        }
        let (b, m) = sgs_preconditioned_spectrum(&Matrix::identity(4)).unwrap();
        assert_eq!(b.eigenvalues, vec![1.0; 4]);
        assert_eq!(m.eigenvalues, vec![1.0; 4]);
    }

    #[test]
    fn ortho_residual_cases() {
        let mut rng = SplitMix64::new(8);
        assert!(ortho_residual(&row_orthonormal(4, 10, &mut rng)) < 1e-10);
        let dup = Matrix::from_rows(&[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert!((ortho_residual(&dup) - 2f64.sqrt()).abs() < 1e-15);
        assert!((ortho_residual(&Matrix::zeros(3, 7)) - 3f64.sqrt()).abs() < 1e-15);
        assert!((ortho_residual(&Matrix::zeros(7, 3)) - 3f64.sqrt()).abs() < 1e-15);
    }
}
