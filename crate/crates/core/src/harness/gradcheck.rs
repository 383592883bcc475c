use crate::error::{Error, Result};
use crate::optim::{NamedTensor, Tensor};
use crate::rng::SplitMix64;

use super::{Batch, Task};

/// Fewest coordinates probed by [`fd_gradient_check`] (all of them if the
/// point is smaller).
pub const MIN_FD_COORDS: usize = 64;

/// Largest relative error between `grad` and central differences of `f`
/// at `x`, over a random subset of at least `coords` coordinates.
///
/// The relative error of coordinate `i` is `|a_i − f_i| / max(|a_i|, |f_i|, 1e-3·‖a‖∞)`,
/// so coordinates whose true derivative is near zero are judged against the
/// gradient's overall scale rather than against themselves.
pub fn fd_gradient_check<F>(mut f: F, x: &[f64], grad: &[f64], h: f64, coords: usize, seed: u64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::invalid(format!("step h = {h:e} must lie in [1e-7, 1e-3]")));
    }
    if x.len() != grad.len() {
        return Err(Error::invalid(format!(
            "point has {} coordinates but gradient has {}",
            x.len(),
            grad.len()
        )));
    }
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    let take = coords.max(MIN_FD_COORDS).min(n);
    let mut rng = SplitMix64::new(seed);
    for i in 0..take {
        let j = i + rng.below(n - i);
        order.swap(i, j);
    }
    let floor = 1e-3 * grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));

    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for &i in &order[..take] {
        probe[i] = x[i] + h;
        let up = f(&probe)?;
        probe[i] = x[i] - h;
        let down = f(&probe)?;
        probe[i] = x[i];
        let fd = (up - down) / (2.0 * h);
        let denom = grad[i].abs().max(fd.abs()).max(floor);
        if denom > 0.0 {
            worst = worst.max((grad[i] - fd).abs() / denom);
        }
    }
    Ok(worst)
}

/// Concatenate parameter values in order.
pub fn flatten(tensors: &[Tensor]) -> Vec<f64> {
    tensors.iter().flat_map(|t| t.as_slice().iter().copied()).collect()
}

/// Inverse of [`flatten`] against a template with the target shapes.
pub fn unflatten(template: &[NamedTensor], flat: &[f64]) -> Result<Vec<NamedTensor>> {
    let total: usize = template.iter().map(|p| p.value.len()).sum();
    if total != flat.len() {
        return Err(Error::invalid(format!(
            "{} values for {total} parameter entries",
            flat.len()
        )));
    }
    let mut out = template.to_vec();
    let mut at = 0;
    for p in &mut out {
        let s = p.value.as_mut_slice();
        s.copy_from_slice(&flat[at..at + s.len()]);
        at += s.len();
    }
    Ok(out)
}

/// [`fd_gradient_check`] applied to a task's loss on a fixed batch.
pub fn check_task_gradient(
    task: &dyn Task,
    params: &[NamedTensor],
    batch: &Batch,
    h: f64,
    seed: u64,
) -> Result<f64> {
    let (_, grads) = task.loss_grad(params, batch)?;
    let values: Vec<Tensor> = params.iter().map(|p| p.value.clone()).collect();
    let x = flatten(&values);
    let g = flatten(&grads);
    fd_gradient_check(
        |y| task.loss(&unflatten(params, y)?, batch),
        &x,
        &g,
        h,
        MIN_FD_COORDS,
        seed,
    )
}
