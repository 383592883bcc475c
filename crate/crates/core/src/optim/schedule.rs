use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear warmup followed by cosine decay to a floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub peak_lr: f64,
    pub min_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl Schedule {
    /// Warmup 500, floor at a tenth of the peak.
    pub fn standard(peak_lr: f64, total_steps: usize) -> Self {
        Self {
            peak_lr,
            min_lr: 0.1 * peak_lr,
            warmup_steps: 500,
            total_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr > 0.0) {
            return Err(Error::invalid("peak_lr must be > 0"));
        }
        if !(self.min_lr >= 0.0 && self.min_lr <= self.peak_lr) {
            return Err(Error::invalid("min_lr must lie in [0, peak_lr]"));
        }
        if self.total_steps == 0 {
            return Err(Error::invalid("total_steps must be > 0"));
        }
        if self.warmup_steps >= self.total_steps {
            return Err(Error::invalid(format!(
                "warmup_steps ({}) must be < total_steps ({})",
                self.warmup_steps, self.total_steps
            )));
        }
        Ok(())
    }
}

/// Learning rate at `step`, for `0 <= step <= total_steps`.
///
/// Warmup uses `(step + 1) / warmup` so the very first step is nonzero.
pub fn lr_at(s: &Schedule, step: usize) -> Result<f64> {
    s.validate()?;
    if step > s.total_steps {
        return Err(Error::invalid(format!(
            "step {step} is past total_steps {}",
            s.total_steps
        )));
    }
    if step < s.warmup_steps {
        return Ok(s.peak_lr * (step + 1) as f64 / s.warmup_steps as f64);
    }
    let progress = (step - s.warmup_steps) as f64 / (s.total_steps - s.warmup_steps) as f64;
    Ok(s.min_lr + 0.5 * (s.peak_lr - s.min_lr) * (1.0 + (PI * progress).cos()))
}
