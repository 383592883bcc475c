use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{FlopConvention, Matrix};
use crate::whitening::{cholqr_whiten, mud_whiten, muon_ns, polar_exact, WhitenConfig, WhitenReport};

use super::{random_with_spectrum, SpectrumSpec};

pub const BENCH_CSV_HEADER: [&str; 6] = ["op", "k", "d", "flops", "wall_seconds", "flops_per_second"];

/// A whitening operator with its iteration count, written `mud<p>`,
/// `muon<s>`, `polar` or `cholqr`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchOp {
    Mud { passes: usize },
    Muon { iters: usize },
    Polar,
    CholQr,
}

impl BenchOp {
    pub fn run(self, m: &Matrix) -> Result<WhitenReport> {
        match self {
            BenchOp::Mud { passes } => mud_whiten(m, &WhitenConfig::with_passes(passes)),
            BenchOp::Muon { iters } => muon_ns(m, &WhitenConfig::with_ns_iters(iters)),
            BenchOp::Polar => polar_exact(m),
            BenchOp::CholQr => cholqr_whiten(m),
        }
    }
}

impl fmt::Display for BenchOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchOp::Mud { passes } => write!(f, "mud{passes}"),
            BenchOp::Muon { iters } => write!(f, "muon{iters}"),
            BenchOp::Polar => f.write_str("polar"),
            BenchOp::CholQr => f.write_str("cholqr"),
        }
    }
}

impl FromStr for BenchOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let count = |rest: &str, default: usize| -> Result<usize> {
            if rest.is_empty() {
                return Ok(default);
            }
            match rest.parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(Error::invalid(format!("bad iteration count in `{s}`"))),
            }
        };
        match s {
            "polar" => Ok(BenchOp::Polar),
            "cholqr" => Ok(BenchOp::CholQr),
            _ if s.starts_with("muon") => Ok(BenchOp::Muon { iters: count(&s[4..], 5)? }),
            _ if s.starts_with("mud") => Ok(BenchOp::Mud { passes: count(&s[3..], 1)? }),
            _ => Err(Error::invalid(format!(
                "unknown operator `{s}` (expected mudP, muonS, polar or cholqr)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub op: String,
    pub k: usize,
    pub d: usize,
    pub flops: u64,
    pub wall_seconds: f64,
    pub flops_per_second: f64,
}

/// Median operator time over `repeats` calls on one generated instance,
/// after one discarded warmup call. FLOPs come from the warmup call's
/// ledger under the table convention.
pub fn bench(op: BenchOp, spec: &SpectrumSpec, seed: u64, repeats: usize) -> Result<BenchRow> {
    if repeats < 3 {
        return Err(Error::invalid(format!("repeats must be >= 3, got {repeats}")));
    }
    let m = random_with_spectrum(spec, seed)?;
    let flops = op.run(&m)?.ledger.total(FlopConvention::Table);
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        times.push(op.run(&m)?.wall_seconds);
    }
    times.sort_by(f64::total_cmp);
    let wall_seconds = if repeats % 2 == 1 {
        times[repeats / 2]
    } else {
        0.5 * (times[repeats / 2 - 1] + times[repeats / 2])
    };
    Ok(BenchRow {
        op: op.to_string(),
        k: spec.k,
        d: spec.d,
        flops,
        wall_seconds,
        flops_per_second: flops as f64 / wall_seconds,
    })
}
