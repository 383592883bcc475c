use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, dot, Matrix};
use crate::rng::SplitMix64;

const SPD_ATTEMPTS: usize = 10;

/// Shape and singular values of a generated `k x d` instance.
///
/// Exactly one of `singular_values` (descending, positive, length `k`) and
/// `condition_number` must be set. A condition number `κ` gives `σ₁ = 1`,
/// `σ_k = 1/κ` and interior values drawn log-uniformly between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSpec {
    pub k: usize,
    pub d: usize,
    #[serde(default)]
    pub singular_values: Option<Vec<f64>>,
    #[serde(default)]
    pub condition_number: Option<f64>,
}

impl SpectrumSpec {
    pub fn with_values(k: usize, d: usize, values: Vec<f64>) -> Self {
        Self {
            k,
            d,
            singular_values: Some(values),
            condition_number: None,
        }
    }

    pub fn with_condition(k: usize, d: usize, cond: f64) -> Self {
        Self {
            k,
            d,
            singular_values: None,
            condition_number: Some(cond),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.d {
            return Err(Error::invalid(format!(
                "need 1 <= k <= d, got k = {}, d = {}",
                self.k, self.d
            )));
        }
        match (&self.singular_values, self.condition_number) {
            (Some(s), None) => {
                if s.len() != self.k {
                    return Err(Error::invalid(format!(
                        "{} singular values for k = {}",
                        s.len(),
                        self.k
                    )));
                }
                if s.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                    return Err(Error::invalid("singular values must be positive and finite"));
                }
                if s.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::invalid("singular values must be descending"));
                }
                Ok(())
            }
            (None, Some(c)) if c >= 1.0 && c.is_finite() => Ok(()),
            (None, Some(c)) => Err(Error::invalid(format!("condition number {c} must be >= 1"))),
            _ => Err(Error::invalid(
                "set exactly one of singular_values and condition_number",
            )),
        }
    }
}

/// Orthonormalise the rows of `m` in place (modified Gram-Schmidt, two passes).
fn orthonormalize_rows(m: &mut Matrix) -> Result<()> {
    let cols = m.cols();
    let data = m.as_mut_slice();
    for i in 0..data.len() / cols {
        let (done, rest) = data.split_at_mut(i * cols);
        let row = &mut rest[..cols];
        let start = dot(row, row).sqrt();
        for _ in 0..2 {
            for q in done.chunks_exact(cols) {
                let c = dot(row, q);
                row.iter_mut().zip(q).for_each(|(r, qv)| *r -= c * qv);
            }
        }
        let norm = dot(row, row).sqrt();
        if !(norm > 1e-8 * start) {
            return Err(Error::invalid("gaussian rows are numerically dependent"));
        }
        row.iter_mut().for_each(|r| *r /= norm);
    }
    Ok(())
}

/// `U diag(σ) Vᵀ` with Haar-like random orthonormal `U` (k×k) and `V` (d×k).
pub fn random_with_spectrum(spec: &SpectrumSpec, seed: u64) -> Result<Matrix> {
    spec.validate()?;
    let (k, d) = (spec.k, spec.d);
    let mut rng = SplitMix64::new(seed);
    let sigma = match (&spec.singular_values, spec.condition_number) {
        (Some(s), _) => s.clone(),
        (None, Some(cond)) => {
            let mut s = vec![1.0; k];
            if k > 1 {
                let top = -cond.ln();
                for x in s.iter_mut().take(k - 1).skip(1) {
                    *x = (rng.uniform(top, 0.0)).exp();
                }
                s[k - 1] = 1.0 / cond;
                s[1..k - 1].sort_by(|a, b| b.total_cmp(a));
            }
            s
        }
        (None, None) => unreachable!("validated"),
    };
    let mut u = Matrix::gaussian(k, k, &mut rng);
    orthonormalize_rows(&mut u)?;
    let mut vt = Matrix::gaussian(k, d, &mut rng);
    orthonormalize_rows(&mut vt)?;
    for (i, s) in sigma.iter().enumerate() {
        vt.row_mut(i).iter_mut().for_each(|x| *x *= s);
    }
    u.matmul(&vt)
}

/// Random row-orthonormal `k x d` matrix.
pub fn random_row_orthonormal(k: usize, d: usize, seed: u64) -> Result<Matrix> {
    random_with_spectrum(&SpectrumSpec::with_values(k, d, vec![1.0; k]), seed)
}

/// `I + E` with `E` symmetric, zero on the diagonal, entries uniform in
/// `[-ε₀, ε₀]`. Requires `ε₀ < 1/(k-1)` so the result is diagonally
/// dominant; positive definiteness is confirmed by Cholesky.
pub fn random_unit_diag_spd(k: usize, offdiag_scale: f64, seed: u64) -> Result<Matrix> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if !(offdiag_scale >= 0.0) || (k > 1 && offdiag_scale * (k - 1) as f64 >= 1.0) {
        return Err(Error::invalid(format!(
            "offdiag scale {offdiag_scale} must lie in [0, 1/(k-1)) for k = {k}"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut last = None;
    for _ in 0..SPD_ATTEMPTS {
        let mut g = Matrix::identity(k);
        for i in 0..k {
            for j in 0..i {
                let e = rng.uniform(-offdiag_scale, offdiag_scale);
                g[(i, j)] = e;
                g[(j, i)] = e;
            }
        }
        match cholesky(&g) {
            Ok(_) => return Ok(g),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}
