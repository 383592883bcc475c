use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::harness::TrainConfig;

use super::{env_seed, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// A training config plus where and how to write its records.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub output_path: Option<PathBuf>,
    pub format: OutputFormat,
}

/// Several training runs sharing a base config, compared on time to reach
/// `target_ratio` times their initial loss.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareConfig {
    pub runs: Vec<(String, TrainConfig)>,
    pub target_ratio: f64,
    /// Stop each run once it reaches the target.
    pub stop_at_target: bool,
    pub output_path: Option<PathBuf>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn as_object(v: Value, what: &str) -> Result<Map<String, Value>, CliError> {
    match v {
        Value::Object(m) => Ok(m),
        _ => Err(usage(format!("{what} must be a JSON object"))),
    }
}

fn strict_train_config(obj: Map<String, Value>, what: &str) -> Result<TrainConfig, CliError> {
    let mut cfg: TrainConfig = serde_json::from_value(Value::Object(obj))
        .map_err(|e| usage(format!("{what}: {e}")))?;
    if let Some(seed) = env_seed()? {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| usage(format!("{what}: {e}")))?;
    Ok(cfg)
}

fn take_output_path(obj: &mut Map<String, Value>) -> Result<Option<PathBuf>, CliError> {
    match obj.remove("output_path") {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(PathBuf::from(s))),
        Some(_) => Err(usage("output_path must be a string")),
    }
}

/// Parse a run config: every [`TrainConfig`] key plus optional
/// `output_path` and `format` (`"csv"` or `"json"`). Unknown keys are errors.
pub fn parse_run_config(text: &str) -> Result<RunConfig, CliError> {
    let value: Value = serde_json::from_str(text).map_err(|e| usage(format!("config: {e}")))?;
    let mut obj = as_object(value, "config")?;
    let output_path = take_output_path(&mut obj)?;
    let format = match obj.remove("format") {
        None | Some(Value::Null) => OutputFormat::Csv,
        Some(Value::String(s)) if s == "csv" => OutputFormat::Csv,
        Some(Value::String(s)) if s == "json" => OutputFormat::Json,
        Some(other) => return Err(usage(format!("format must be \"csv\" or \"json\", got {other}"))),
    };
    let train = strict_train_config(obj, "config")?;
    Ok(RunConfig {
        train,
        output_path,
        format,
    })
}

/// Parse a compare config:
///
/// ```json
/// { "base": { ...TrainConfig keys... },
///   "runs": [ { "name": "mud1", "optimizer": "mud" }, { "name": "muon", "optimizer": "muon" } ],
///   "target_ratio": 0.5, "stop_at_target": true, "output_path": "cmp.json" }
/// ```
///
/// Each run's keys override `base`; `name` defaults to the run's index.
pub fn parse_compare_config(text: &str) -> Result<CompareConfig, CliError> {
    let value: Value = serde_json::from_str(text).map_err(|e| usage(format!("config: {e}")))?;
    let mut obj = as_object(value, "config")?;
    let output_path = take_output_path(&mut obj)?;
    let base = match obj.remove("base") {
        None => Map::new(),
        Some(v) => as_object(v, "base")?,
    };
    let runs = match obj.remove("runs") {
        Some(Value::Array(runs)) if !runs.is_empty() => runs,
        _ => return Err(usage("runs must be a non-empty array")),
    };
    let target_ratio = match obj.remove("target_ratio") {
        None => 1e-2,
        Some(v) => match v.as_f64() {
            Some(r) if r > 0.0 && r < 1.0 => r,
            _ => return Err(usage("target_ratio must be a number in (0, 1)")),
        },
    };
    let stop_at_target = match obj.remove("stop_at_target") {
        None => true,
        Some(Value::Bool(b)) => b,
        Some(_) => return Err(usage("stop_at_target must be a boolean")),
    };
    if let Some(key) = obj.keys().next() {
        return Err(usage(format!("config: unknown key `{key}`")));
    }

    let mut parsed = Vec::with_capacity(runs.len());
    for (i, run) in runs.into_iter().enumerate() {
        let mut run = as_object(run, "run")?;
        let name = match run.remove("name") {
            None => i.to_string(),
            Some(Value::String(s)) => s,
            Some(_) => return Err(usage("run name must be a string")),
        };
        let mut merged = base.clone();
        merged.extend(run);
        parsed.push((name.clone(), strict_train_config(merged, &format!("run `{name}`"))?));
    }
    Ok(CompareConfig {
        runs: parsed,
        target_ratio,
        stop_at_target,
        output_path,
    })
}

pub(super) fn read_config(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}
