//! Per-parameter update rules.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::whitening::{mud_whiten, muon_ns, WhitenConfig};

use super::{GroupHyper, ParamState, Tensor};

/// Shape-dependent step multiplier `0.2 * sqrt(max(n, m))`.
pub fn shape_scale(rows: usize, cols: usize) -> f64 {
    0.2 * (rows.max(cols) as f64).sqrt()
}

/// One AdamW step with bias correction and decoupled weight decay.
pub fn adamw_update(
    param: &mut Tensor,
    grad: &Tensor,
    state: &mut ParamState,
    hp: &GroupHyper,
    lr_t: f64,
) -> Result<()> {
    param.check_same_shape(grad, "adamw gradient")?;
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = hp.adam_betas;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let decay = 1.0 - lr_t * hp.weight_decay;
    let p = param.as_mut_slice();
    let m = state.m.as_mut_slice();
    let v = state.v.as_mut_slice();
    for (((pi, &gi), mi), vi) in p.iter_mut().zip(grad.as_slice()).zip(m).zip(v) {
        *mi = b1 * *mi + (1.0 - b1) * gi;
        *vi = b2 * *vi + (1.0 - b2) * gi * gi;
        let m_hat = *mi / bc1;
        let v_hat = *vi / bc2;
        *pi = decay * *pi - lr_t * m_hat / (v_hat.sqrt() + hp.eps);
    }
    Ok(())
}

/// Heavy-ball buffer update `V ← βV + G`, returning the lookahead `G + βV`.
pub fn matrix_direction(grad: &Matrix, momentum: &mut Matrix, beta: f64) -> Result<Matrix> {
    grad.check_same_shape("matrix_direction", momentum)?;
    let mut out = grad.clone();
    lookahead(grad.as_slice(), momentum.as_mut_slice(), out.as_mut_slice(), beta);
    Ok(out)
}

fn lookahead(g: &[f64], v: &mut [f64], out: &mut [f64], beta: f64) {
    for ((gi, vi), oi) in g.iter().zip(v.iter_mut()).zip(out.iter_mut()) {
        *vi = beta * *vi + gi;
        *oi = gi + beta * *vi;
    }
}

fn apply_scaled(w: &mut [f64], q: &[f64], decay: f64, step: f64) {
    for (wi, qi) in w.iter_mut().zip(q) {
        *wi = decay * *wi - step * qi;
    }
}

fn matrix_parts<'a>(
    param: &'a mut Tensor,
    grad: &'a Tensor,
    state: &'a mut ParamState,
) -> Option<(&'a mut Matrix, &'a Matrix, &'a mut Matrix)> {
    match (param, grad, &mut state.momentum) {
        (Tensor::Matrix(w), Tensor::Matrix(g), Tensor::Matrix(v)) => Some((w, g, v)),
        _ => None,
    }
}

/// Muon update for a matrix parameter: lookahead momentum, Newton-Schulz,
/// scaled step with decoupled weight decay.
pub fn muon_update(
    param: &mut Tensor,
    grad: &Tensor,
    state: &mut ParamState,
    hp: &GroupHyper,
    ns: &WhitenConfig,
    lr_t: f64,
) -> Result<()> {
    param.check_same_shape(grad, "muon gradient")?;
    let (w, g, v) = matrix_parts(param, grad, state)
        .ok_or_else(|| Error::invalid("muon update needs a 2-D parameter"))?;
    let dir = matrix_direction(g, v, hp.beta_momentum)?;
    let q = muon_ns(&dir, ns)?.output;
    let scale = shape_scale(w.rows(), w.cols());
    apply_scaled(w.as_mut_slice(), q.as_slice(), 1.0 - lr_t * hp.weight_decay, lr_t * scale);
    state.step += 1;
    Ok(())
}

/// MUD update. Matrices go through `passes` rounds of triangular
/// decorrelation; anything else takes a plain lookahead-momentum step.
pub fn mud_update(
    param: &mut Tensor,
    grad: &Tensor,
    state: &mut ParamState,
    hp: &GroupHyper,
    whiten: &WhitenConfig,
    lr_t: f64,
) -> Result<()> {
    param.check_same_shape(grad, "mud gradient")?;
    let decay = 1.0 - lr_t * hp.weight_decay;
    if let Some((w, g, v)) = matrix_parts(param, grad, state) {
        let dir = matrix_direction(g, v, hp.beta_momentum)?;
        let q = mud_whiten(&dir, whiten)?.output;
        let scale = shape_scale(w.rows(), w.cols());
        apply_scaled(w.as_mut_slice(), q.as_slice(), decay, lr_t * scale);
    } else {
        let mut dir = grad.as_slice().to_vec();
        lookahead(grad.as_slice(), state.momentum.as_mut_slice(), &mut dir, hp.beta_momentum);
        apply_scaled(param.as_mut_slice(), &dir, decay, lr_t);
    }
    state.step += 1;
    Ok(())
}
