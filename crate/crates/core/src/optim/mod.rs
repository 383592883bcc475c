//! AdamW, Muon and MUD optimizers over named parameters.
//!
//! Parameters are split into a matrix-rule group (2-D weights, updated by
//! Muon or MUD) and an elementwise group (everything else, updated by AdamW).
//! With [`OptimizerKind::AdamW`] both groups use AdamW.

mod rules;
mod schedule;
mod tensor;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::whitening::WhitenConfig;

pub use rules::{adamw_update, matrix_direction, mud_update, muon_update, shape_scale};
pub use schedule::{lr_at, Schedule};
pub use tensor::{NamedTensor, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    Matrix,
    Elementwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupHyper {
    /// Multiplier on the scheduled learning rate.
    pub lr_scale: f64,
    pub weight_decay: f64,
    pub beta_momentum: f64,
    pub adam_betas: (f64, f64),
    pub eps: f64,
}

impl Default for GroupHyper {
    fn default() -> Self {
        Self {
            lr_scale: 1.0,
            weight_decay: 1e-2,
            beta_momentum: 0.95,
            adam_betas: (0.9, 0.95),
            eps: 1e-8,
        }
    }
}

impl GroupHyper {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x < 1.0;
        if !(self.lr_scale > 0.0) {
            return Err(Error::invalid("lr_scale must be > 0"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight_decay must be >= 0"));
        }
        if !in_unit(self.beta_momentum) {
            return Err(Error::invalid("beta_momentum must lie in (0, 1)"));
        }
        if !in_unit(self.adam_betas.0) || !in_unit(self.adam_betas.1) {
            return Err(Error::invalid("adam betas must lie in (0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("eps must be > 0"));
        }
        Ok(())
    }
}

/// Indices into a parameter list that share one update rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub rule: UpdateRule,
    pub indices: Vec<usize>,
    pub hyper: GroupHyper,
}

/// Optimizer buffers for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub momentum: Tensor,
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
}

impl ParamState {
    pub fn zeros_like(p: &Tensor) -> Self {
        Self {
            momentum: p.zeros_like(),
            m: p.zeros_like(),
            v: p.zeros_like(),
            step: 0,
        }
    }
}

/// Split parameters into (matrix-rule, elementwise-rule) groups.
///
/// 2-D parameters go to the matrix group unless their name starts with one
/// of `deny_prefixes` (embeddings, output heads).
pub fn partition_params(
    params: &[NamedTensor],
    deny_prefixes: &[String],
    hyper: GroupHyper,
) -> Result<(ParamGroup, ParamGroup)> {
    let mut seen = HashSet::new();
    let mut matrix = Vec::new();
    let mut elementwise = Vec::new();
    for (i, p) in params.iter().enumerate() {
        if !seen.insert(p.name.as_str()) {
            return Err(Error::DuplicateName(p.name.clone()));
        }
        let denied = deny_prefixes.iter().any(|d| p.name.starts_with(d.as_str()));
        if p.value.ndim() == 2 && !denied {
            matrix.push(i);
        } else {
            elementwise.push(i);
        }
    }
    Ok((
        ParamGroup {
            rule: UpdateRule::Matrix,
            indices: matrix,
            hyper,
        },
        ParamGroup {
            rule: UpdateRule::Elementwise,
            indices: elementwise,
            hyper,
        },
    ))
}

/// Scale all gradients jointly so their global ℓ2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(Error::invalid("max_norm must be > 0"));
    }
    let norm = grads.iter().map(Tensor::sum_squares).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.as_mut_slice().iter_mut().for_each(|x| *x *= s);
        }
    }
    Ok(norm)
}

fn check_aligned(params: &[NamedTensor], grads: &[Tensor], states: &[ParamState]) -> Result<()> {
    if params.len() != grads.len() || params.len() != states.len() {
        return Err(Error::invalid(format!(
            "{} params, {} grads, {} states",
            params.len(),
            grads.len(),
            states.len()
        )));
    }
    Ok(())
}

pub fn adamw_step(
    group: &ParamGroup,
    params: &mut [NamedTensor],
    grads: &[Tensor],
    states: &mut [ParamState],
    lr_t: f64,
) -> Result<()> {
    check_aligned(params, grads, states)?;
    let lr = lr_t * group.hyper.lr_scale;
    for &i in &group.indices {
        adamw_update(&mut params[i].value, &grads[i], &mut states[i], &group.hyper, lr)?;
    }
    Ok(())
}

pub fn muon_step(
    group: &ParamGroup,
    params: &mut [NamedTensor],
    grads: &[Tensor],
    states: &mut [ParamState],
    lr_t: f64,
    ns: &WhitenConfig,
) -> Result<()> {
    check_aligned(params, grads, states)?;
    if let Some(&i) = group.indices.iter().find(|&&i| params[i].value.ndim() != 2) {
        return Err(Error::invalid(format!(
            "muon group holds non-matrix parameter `{}`",
            params[i].name
        )));
    }
    let lr = lr_t * group.hyper.lr_scale;
    for &i in &group.indices {
        muon_update(&mut params[i].value, &grads[i], &mut states[i], &group.hyper, ns, lr)?;
    }
    Ok(())
}

pub fn mud_step(
    group: &ParamGroup,
    params: &mut [NamedTensor],
    grads: &[Tensor],
    states: &mut [ParamState],
    lr_t: f64,
    whiten: &WhitenConfig,
) -> Result<()> {
    check_aligned(params, grads, states)?;
    let lr = lr_t * group.hyper.lr_scale;
    for &i in &group.indices {
        mud_update(&mut params[i].value, &grads[i], &mut states[i], &group.hyper, whiten, lr)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    AdamW,
    Muon,
    Mud,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::AdamW => "adamw",
            OptimizerKind::Muon => "muon",
            OptimizerKind::Mud => "mud",
        }
    }
}

/// A configured optimizer owning the per-parameter state of one run.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub matrix_group: ParamGroup,
    pub elementwise_group: ParamGroup,
    /// Newton-Schulz settings for Muon, pass count for MUD.
    pub whiten: WhitenConfig,
    states: Vec<ParamState>,
}

impl Optimizer {
    pub fn new(
        kind: OptimizerKind,
        params: &[NamedTensor],
        deny_prefixes: &[String],
        hyper: GroupHyper,
        whiten: WhitenConfig,
    ) -> Result<Self> {
        hyper.validate()?;
        whiten.validate()?;
        let (matrix_group, elementwise_group) = partition_params(params, deny_prefixes, hyper)?;
        Ok(Self {
            kind,
            matrix_group,
            elementwise_group,
            whiten,
            states: params.iter().map(|p| ParamState::zeros_like(&p.value)).collect(),
        })
    }

    pub fn states(&self) -> &[ParamState] {
        &self.states
    }

    pub fn states_mut(&mut self) -> &mut [ParamState] {
        &mut self.states
    }

    pub fn step(&mut self, params: &mut [NamedTensor], grads: &[Tensor], lr_t: f64) -> Result<()> {
        for (p, g) in params.iter().zip(grads) {
            p.value.check_same_shape(g, &format!("gradient of `{}`", p.name))?;
        }
        let states = &mut self.states;
        match self.kind {
            OptimizerKind::AdamW => {
                adamw_step(&self.matrix_group, params, grads, states, lr_t)?;
            }
            OptimizerKind::Muon => {
                muon_step(&self.matrix_group, params, grads, states, lr_t, &self.whiten)?;
            }
            OptimizerKind::Mud => {
                mud_step(&self.matrix_group, params, grads, states, lr_t, &self.whiten)?;
            }
        }
        adamw_step(&self.elementwise_group, params, grads, states, lr_t)
    }
}
