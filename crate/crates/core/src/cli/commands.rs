use serde::Serialize;
use serde_json::json;

use crate::analysis::{
    self, fit_slope, random_unit_diag_spd, random_with_spectrum, trace_convergence, BenchOp,
    SpectrumSpec, BENCH_CSV_HEADER,
};
use crate::harness::{records_to_csv, train_with, TrainRecord, TrainStatus};
use crate::linalg::FlopConvention;
use crate::whitening::{sgs_preconditioned_spectrum, DeviationNorm};

use super::config::{parse_compare_config, parse_run_config, read_config, OutputFormat};
use super::{
    resolve_seed, write_output, BenchArgs, CliError, ConfigArgs, SgsArgs, TraceArgs, WhitenArgs,
    WhitenOp,
};

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new())
}

fn csv_finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

fn dims(rows: u64, cols: u64) -> (usize, usize) {
    let (r, c) = (rows as usize, cols as usize);
    (r.min(c), r.max(c))
}

pub(super) fn whiten(a: &WhitenArgs) -> Result<(), CliError> {
    let (k, d) = dims(a.rows, a.cols);
    let seed = resolve_seed(a.seed)?;
    let mut m = random_with_spectrum(&SpectrumSpec::with_condition(k, d, a.cond), seed)?;
    if a.rows > a.cols {
        m = m.transpose();
    }
    let op = match a.op {
        WhitenOp::Mud => BenchOp::Mud { passes: a.passes as usize },
        WhitenOp::Muon => BenchOp::Muon { iters: a.ns_iters as usize },
        WhitenOp::Polar => BenchOp::Polar,
        WhitenOp::Cholqr => BenchOp::CholQr,
    };
    let report = op.run(&m)?;
    let conv = FlopConvention::from(a.flop_convention);
    let out = json!({
        "op": op.to_string(),
        "k": k,
        "d": d,
        "ortho_residual": report.ortho_residual,
        "flops": report.ledger.total(conv),
        "wall_seconds": report.wall_seconds,
        "flop_convention": conv.as_str(),
    });
    write_output(a.out.as_ref(), &pretty(&out))
}

pub(super) fn trace(a: &TraceArgs) -> Result<(), CliError> {
    let seed = resolve_seed(a.seed)?;
    let g0 = random_unit_diag_spd(a.dim as usize, a.eps0, seed)?;
    let t = trace_convergence(&g0, a.passes as usize)?;
    let mut w = csv_writer();
    let io = |e: csv::Error| CliError::Usage(e.to_string());
    w.write_record(["pass", "linf", "l1", "fro"]).map_err(io)?;
    for p in &t.points {
        w.serialize((p.pass, p.linf, p.l1, p.fro)).map_err(io)?;
    }
    let slope = |n| fit_slope(&t, n).map(|q| q.to_string()).unwrap_or_default();
    w.write_record([
        "slope".to_string(),
        slope(DeviationNorm::Linf),
        slope(DeviationNorm::L1),
        slope(DeviationNorm::Fro),
    ])
    .map_err(io)?;
    write_output(a.out.as_ref(), &csv_finish(w))
}

pub(super) fn sgs_check(a: &SgsArgs) -> Result<(), CliError> {
    let k = a.dim as usize;
    let eps0 = a.eps0.unwrap_or(if k > 1 { 0.5 / (k - 1) as f64 } else { 0.0 });
    let seed = resolve_seed(a.seed)?;
    let g = random_unit_diag_spd(k, eps0, seed)?;
    let (inner, sgs) = sgs_preconditioned_spectrum(&g)?;
    let out = json!({
        "k": k,
        "eps0": eps0,
        "seed": seed,
        "discrepancy": inner.max_discrepancy(&sgs),
        "min_eigenvalue": sgs.min(),
        "max_eigenvalue": sgs.max(),
    });
    write_output(a.out.as_ref(), &pretty(&out))
}

pub(super) fn bench(a: &BenchArgs) -> Result<(), CliError> {
    let ops = a
        .ops
        .iter()
        .map(|s| s.trim().parse::<BenchOp>())
        .collect::<Result<Vec<_>, _>>()?;
    let (k, d) = dims(a.rows, a.cols);
    let spec = SpectrumSpec::with_condition(k, d, a.cond);
    let seed = resolve_seed(a.seed)?;
    let mut w = csv_writer();
    let io = |e: csv::Error| CliError::Usage(e.to_string());
    w.write_record(BENCH_CSV_HEADER).map_err(io)?;
    for op in ops {
        let row = analysis::bench(op, &spec, seed, a.repeats as usize)?;
        w.serialize(&row).map_err(io)?;
    }
    write_output(a.out.as_ref(), &csv_finish(w))
}

#[derive(Serialize)]
struct TrainJson<'a> {
    status: TrainStatus,
    records: &'a [TrainRecord],
}

pub(super) fn train(a: &ConfigArgs) -> Result<(), CliError> {
    let run = parse_run_config(&read_config(&a.config)?)?;
    let out_path = a.out.clone().or(run.output_path.clone());
    let outcome = train_with(&run.train, |_| true)?;
    let text = match run.format {
        OutputFormat::Csv => records_to_csv(&outcome.records),
        OutputFormat::Json => pretty(&TrainJson {
            status: outcome.status,
            records: &outcome.records,
        }),
    };
    write_output(out_path.as_ref(), &text)?;
    outcome.completed()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct CompareRow {
    name: String,
    optimizer: &'static str,
    mud_passes: usize,
    status: TrainStatus,
    steps_run: usize,
    initial_loss: Option<f64>,
    final_loss: Option<f64>,
    target_loss: Option<f64>,
    steps_to_target: Option<usize>,
    seconds_to_target: Option<f64>,
}

pub(super) fn compare(a: &ConfigArgs) -> Result<(), CliError> {
    let cfg = parse_compare_config(&read_config(&a.config)?)?;
    let out_path = a.out.clone().or(cfg.output_path.clone());
    let mut rows = Vec::with_capacity(cfg.runs.len());
    let mut diverged = None;
    for (name, train_cfg) in &cfg.runs {
        let mut target = None;
        let mut hit: Option<usize> = None;
        let outcome = train_with(train_cfg, |r| {
            let t = *target.get_or_insert(cfg.target_ratio * r.loss);
            if hit.is_none() && r.loss <= t {
                hit = Some(r.step);
            }
            !(cfg.stop_at_target && hit.is_some())
        })?;
        let recs = &outcome.records;
        // the loss at step s is measured after s updates, so the target was
        // reached when update s-1 finished
        let seconds_to_target = hit.map(|s| if s == 0 { 0.0 } else { recs[s - 1].elapsed_seconds });
        if let (TrainStatus::Diverged { step, loss }, None) = (outcome.status, diverged) {
            diverged = Some((step, loss));
        }
        rows.push(CompareRow {
            name: name.clone(),
            optimizer: train_cfg.optimizer.as_str(),
            mud_passes: train_cfg.mud_passes,
            status: outcome.status,
            steps_run: recs.len(),
            initial_loss: recs.first().map(|r| r.loss),
            final_loss: recs.last().map(|r| r.loss),
            target_loss: target,
            steps_to_target: hit,
            seconds_to_target,
        });
    }
    let out = json!({
        "target_ratio": cfg.target_ratio,
        "stop_at_target": cfg.stop_at_target,
        "runs": rows,
    });
    write_output(out_path.as_ref(), &pretty(&out))?;
    match diverged {
        Some((step, loss)) => Err(CliError::Diverged { step, loss }),
        None => Ok(()),
    }
}
