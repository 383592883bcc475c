use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{clip_global_norm, lr_at, GroupHyper, Optimizer, OptimizerKind, Schedule};
use crate::whitening::WhitenConfig;

use super::{MatReg, Mlp, Task};

pub const TRAIN_CSV_HEADER: [&str; 5] = ["step", "loss", "lr", "grad_norm_preclip", "elapsed_seconds"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Matreg,
    Mlp,
}

/// Whether records carry wall-clock time. With `Off` every
/// `elapsed_seconds` is 0 and the record list is a pure function of the
/// config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    #[default]
    Wall,
    Off,
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub task: TaskKind,
    pub optimizer: OptimizerKind,
    pub mud_passes: usize,
    pub ns_iters: usize,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    pub lr: f64,
    /// Defaults to `0.1 * lr`.
    pub min_lr: Option<f64>,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub beta_momentum: f64,
    pub eps: f64,
    pub clip: f64,
    /// Matreg output dimension.
    pub rows: usize,
    /// Matreg input dimension.
    pub cols: usize,
    pub input_dim: usize,
    pub hidden: usize,
    pub classes: usize,
    /// 2-D parameters whose names start with one of these use AdamW.
    pub deny_prefixes: Vec<String>,
    pub timing: Timing,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let h = GroupHyper::default();
        Self {
            task: TaskKind::Matreg,
            optimizer: OptimizerKind::Mud,
            mud_passes: 1,
            ns_iters: 5,
            steps: 2000,
            batch: 64,
            seed: 0,
            lr: 1e-3,
            min_lr: None,
            warmup_steps: 500,
            weight_decay: h.weight_decay,
            betas: h.adam_betas,
            beta_momentum: h.beta_momentum,
            eps: h.eps,
            clip: 1.0,
            rows: 32,
            cols: 32,
            input_dim: 16,
            hidden: 32,
            classes: 4,
            deny_prefixes: Vec::new(),
            timing: Timing::Wall,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> Schedule {
        Schedule {
            peak_lr: self.lr,
            min_lr: self.min_lr.unwrap_or(0.1 * self.lr),
            warmup_steps: self.warmup_steps,
            total_steps: self.steps,
        }
    }

    pub fn hyper(&self) -> GroupHyper {
        GroupHyper {
            lr_scale: 1.0,
            weight_decay: self.weight_decay,
            beta_momentum: self.beta_momentum,
            adam_betas: self.betas,
            eps: self.eps,
        }
    }

    pub fn whiten(&self) -> WhitenConfig {
        WhitenConfig {
            passes: self.mud_passes,
            ns_iters: self.ns_iters,
            eps: self.eps,
            ..WhitenConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::invalid("batch must be >= 1"));
        }
        if !(self.clip > 0.0) {
            return Err(Error::invalid("clip must be > 0"));
        }
        self.hyper().validate()?;
        self.whiten().validate()?;
        if self.steps > 0 {
            self.schedule().validate()?;
        }
        Ok(())
    }
}

/// One row of a training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm_preclip: f64,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    Completed,
    /// The caller asked to stop after recording `step`.
    Stopped { step: usize },
    /// The loss at `step` was not finite; records stop before it.
    Diverged { step: usize, loss: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub records: Vec<TrainRecord>,
    pub status: TrainStatus,
}

impl TrainOutcome {
    /// `Err(Error::Diverged)` if the run diverged.
    pub fn completed(&self) -> Result<()> {
        match self.status {
            TrainStatus::Completed | TrainStatus::Stopped { .. } => Ok(()),
            TrainStatus::Diverged { step, loss } => Err(Error::Diverged { step, loss }),
        }
    }
}

pub fn build_task(cfg: &TrainConfig) -> Result<Box<dyn Task>> {
    Ok(match cfg.task {
        TaskKind::Matreg => Box::new(MatReg::new(cfg.seed, cfg.rows, cfg.cols, cfg.batch)?),
        TaskKind::Mlp => Box::new(Mlp::new(
            cfg.seed,
            cfg.input_dim,
            cfg.hidden,
            cfg.classes,
            cfg.batch,
        )?),
    })
}

/// Run the training loop. Numerical errors from the optimizer are returned
/// as `Err`; a non-finite loss ends the run with [`TrainStatus::Diverged`]
/// and keeps the records gathered so far.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(cfg, |_| true)
}

/// [`train`], calling `keep_going` after each record and stopping with
/// [`TrainStatus::Stopped`] when it returns false.
pub fn train_with<F>(cfg: &TrainConfig, mut keep_going: F) -> Result<TrainOutcome>
where
    F: FnMut(&TrainRecord) -> bool,
{
    cfg.validate()?;
    let mut task = build_task(cfg)?;
    let mut params = task.init_params();
    let mut opt = Optimizer::new(cfg.optimizer, &params, &cfg.deny_prefixes, cfg.hyper(), cfg.whiten())?;
    let schedule = cfg.schedule();
    let start = Instant::now();
    let mut records = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let batch = task.sample_batch();
        let (loss, mut grads) = task.loss_grad(&params, &batch)?;
        if !loss.is_finite() {
            return Ok(TrainOutcome {
                records,
                status: TrainStatus::Diverged { step, loss },
            });
        }
        let grad_norm = clip_global_norm(&mut grads, cfg.clip)?;
        let lr = lr_at(&schedule, step)?;
        opt.step(&mut params, &grads, lr)?;
        let elapsed_seconds = match cfg.timing {
            Timing::Wall => start.elapsed().as_secs_f64(),
            Timing::Off => 0.0,
        };
        let record = TrainRecord {
            step,
            loss,
            lr,
            grad_norm_preclip: grad_norm,
            elapsed_seconds,
        };
        records.push(record);
        if !keep_going(&record) && step + 1 < cfg.steps {
            return Ok(TrainOutcome {
                records,
                status: TrainStatus::Stopped { step },
            });
        }
    }
    Ok(TrainOutcome {
        records,
        status: TrainStatus::Completed,
    })
}

/// CSV with header `step,loss,lr,grad_norm_preclip,elapsed_seconds`, also
/// for an empty record list.
pub fn records_to_csv(records: &[TrainRecord]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(TRAIN_CSV_HEADER).expect("write to memory");
    for r in records {
        w.serialize(r).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(optimizer: OptimizerKind) -> TrainConfig {
        TrainConfig {
            optimizer,
            steps: 60,
            warmup_steps: 10,
            rows: 8,
            cols: 6,
            batch: 16,
            timing: Timing::Off,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_steps() {
        let cfg = TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        };
        let out = train(&cfg).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(records_to_csv(&out.records), "step,loss,lr,grad_norm_preclip,elapsed_seconds\n");
    }

    #[test]
    fn deterministic_for_every_optimizer() {
        for kind in [OptimizerKind::AdamW, OptimizerKind::Muon, OptimizerKind::Mud] {
            let a = train(&short(kind)).unwrap();
            let b = train(&short(kind)).unwrap();
            assert_eq!(records_to_csv(&a.records), records_to_csv(&b.records));
            assert_eq!(a.records.len(), 60);
        }
    }

    #[test]
    fn wall_timing_is_monotone() {
        let cfg = TrainConfig {
            timing: Timing::Wall,
            ..short(OptimizerKind::Mud)
        };
        let out = train(&cfg).unwrap();
        assert!(out.records.windows(2).all(|w| w[1].elapsed_seconds >= w[0].elapsed_seconds));
        let off = train(&short(OptimizerKind::Mud)).unwrap();
        for (a, b) in out.records.iter().zip(&off.records) {
            assert_eq!((a.loss, a.lr, a.grad_norm_preclip), (b.loss, b.lr, b.grad_norm_preclip));
        }
    }

    #[test]
    fn divergence_keeps_partial_records() {
        let cfg = TrainConfig {
            optimizer: OptimizerKind::AdamW,
            lr: 1e200,
            warmup_steps: 0,
            ..short(OptimizerKind::AdamW)
        };
        let out = train(&cfg).unwrap();
        match out.status {
            TrainStatus::Diverged { step, .. } => assert_eq!(out.records.len(), step),
            other => panic!("expected divergence, got {other:?}"),
        }
        assert!(out.records.iter().all(|r| r.loss.is_finite()));
        assert!(matches!(out.completed(), Err(Error::Diverged { .. })));
    }

    #[test]
    fn early_stop() {
        let out = train_with(&short(OptimizerKind::Mud), |r| r.step < 4).unwrap();
        assert_eq!(out.records.len(), 5);
        assert_eq!(out.status, TrainStatus::Stopped { step: 4 });
        assert!(out.completed().is_ok());
    }

    #[test]
    fn config_is_strict() {
        let err = serde_json::from_str::<TrainConfig>(r#"{"steps": 3, "bogus": 1}"#);
        assert!(err.is_err());
        let cfg: TrainConfig = serde_json::from_str(r#"{"optimizer": "muon", "steps": 700}"#).unwrap();
        assert_eq!(cfg.optimizer, OptimizerKind::Muon);
        assert_eq!(cfg.schedule().min_lr, 1e-4);
        let bad = TrainConfig {
            steps: 100,
            ..TrainConfig::default()
        };
        assert!(train(&bad).is_err());
    }

    #[test]
    fn mlp_single_example_overfits() {
        let mut task = Mlp::new(21, 8, 16, 4, 1).unwrap();
        let batch = task.batch_of(1);
        let mut params = task.init_params();
        let mut opt = Optimizer::new(
            OptimizerKind::AdamW,
            &params,
            &[],
            GroupHyper::default(),
            WhitenConfig::default(),
        )
        .unwrap();
        let mut loss = f64::INFINITY;
        for _ in 0..500 {
            let (l, g) = task.loss_grad(&params, &batch).unwrap();
            loss = l;
            opt.step(&mut params, &g, 1e-2).unwrap();
        }
        let final_loss = task.loss(&params, &batch).unwrap();
        assert!(final_loss < 1e-3, "{loss} {final_loss}");
    }
}
