//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each, and exits nonzero if any failed.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use mudkit::analysis::{
    bench, fit_slope, quadratic_constant, random_row_orthonormal, random_unit_diag_spd, random_with_spectrum,
    trace_convergence, BenchOp, SpectrumSpec,
};
use mudkit::harness::{check_task_gradient, records_to_csv, train, MatReg, Mlp, Task, Timing, TrainConfig};
use mudkit::linalg::{jacobi_eig_sym, svd_thin};
use mudkit::optim::{adamw_update, GroupHyper, NamedTensor, OptimizerKind, ParamState, Tensor};
use mudkit::whitening::{
    cholqr_whiten, gram_map, mud_whiten, muon_ns, polar_exact, sgs_preconditioned_spectrum, DeviationNorm,
    WhitenConfig,
};
use mudkit::{FlopConvention, Matrix, SplitMix64};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn diff_fro(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).expect("same shape").frob_norm()
}

fn fixed_point() -> Outcome {
    let start = Instant::now();
    let shapes = [(4, 8), (32, 128), (128, 512)];
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let (k, d) = shapes[i as usize % 3];
        let q = ok(random_row_orthonormal(k, d, 100 + i))?;
        for p in 1..=3 {
            let out = ok(mud_whiten(&q, &WhitenConfig::with_passes(p)))?.output;
            let rel = diff_fro(&out, &q) / (k as f64).sqrt();
            worst = worst.max(rel);
            ensure!(rel <= 1e-10, "instance {i} ({k}x{d}) p={p}: {rel:e} * sqrt(k)");
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.1} s");
    Ok(format!("worst {worst:.2e}*sqrt(k), {secs:.2} s"))
}

/// Unit-diagonal SPD matrix with `‖G - I‖∞` equal to `target`.
fn scaled_gram(k: usize, target: f64, seed: u64) -> Result<Matrix, String> {
    let g = ok(random_unit_diag_spd(k, 0.5 / (k - 1) as f64, seed))?;
    let e = ok(g.sub(&Matrix::identity(k)))?.norm_inf();
    Ok(Matrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { g[(i, j)] * target / e }))
}

fn convergence_instances() -> Result<Vec<(Matrix, f64)>, String> {
    let mut rng = SplitMix64::new(2024);
    let ks = [8, 16, 32, 64];
    (0..100)
        .map(|i| {
            let target = rng.uniform(1e-4f64.ln(), 0.05f64.ln()).exp();
            let g = scaled_gram(ks[i % 4], target, 500 + i as u64)?;
            Ok((g, target))
        })
        .collect()
}

fn quadratic_convergence() -> Outcome {
    let start = Instant::now();
    let mut worst_c = 0.0f64;
    let (mut qmin, mut qmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, (g, _)) in convergence_instances()?.iter().enumerate() {
        let trace = ok(trace_convergence(g, 10))?;
        let e = trace.series(DeviationNorm::Linf);
        for (t, w) in e.windows(2).enumerate() {
            ensure!(w[1] <= 6.0 * w[0] * w[0], "instance {i} pass {t}: {:e} > 6*{:e}^2", w[1], w[0]);
        }
        worst_c = worst_c.max(ok(quadratic_constant(&trace, DeviationNorm::Linf))?);
        let q = fit_slope(&trace, DeviationNorm::Linf).ok_or(format!("instance {i}: too few points to fit"))?;
        ensure!((q - 2.0).abs() <= 0.3, "instance {i}: slope {q}");
        qmin = qmin.min(q);
        qmax = qmax.max(q);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 30.0, "took {secs:.1} s");
    Ok(format!("max C {worst_c:.3}, slopes [{qmin:.3}, {qmax:.3}], {secs:.2} s"))
}

fn two_by_two() -> Outcome {
    let mut worst = 0.0f64;
    for rho in [0.1, -0.1, 0.5, -0.5, 0.9, -0.9] {
        let g = Matrix::from_rows(&[[1.0, rho], [rho, 1.0]]);
        let err = ok(gram_map(&g))?.max_abs_diff(&Matrix::identity(2));
        worst = worst.max(err);
        ensure!(err <= 1e-12, "rho {rho}: {err:e}");
    }
    Ok(format!("max deviation {worst:e}"))
}

fn sgs_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = SplitMix64::new(77);
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let k = [4, 16, 64][i as usize % 3];
        let eps0 = rng.uniform(0.05, 0.95) / (k - 1) as f64;
        let g = ok(random_unit_diag_spd(k, eps0, 900 + i))?;
        let (inner, sgs) = ok(sgs_preconditioned_spectrum(&g))?;
        let d = inner.max_discrepancy(&sgs);
        worst = worst.max(d);
        ensure!(d <= 1e-8, "instance {i} (k={k}): {d:e}");
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("max discrepancy {worst:.2e}, {secs:.2} s"))
}

fn eigenvalue_clustering() -> Outcome {
    let mut worst_ratio = 0.0f64;
    for (i, (g, e0)) in convergence_instances()?.iter().enumerate() {
        let k = g.rows();
        let h = ok(gram_map(g))?;
        let dev = ok(h.sub(&Matrix::identity(k)))?;
        let r = ok(svd_thin(&dev, 1e-15))?.sigma[0];
        // eigenvalues of h - I rather than of h keep full relative precision;
        // r comes from a different algorithm, so allow relative rounding
        let spec = ok(jacobi_eig_sym(&dev, 1e-14))?;
        for &mu in &spec.eigenvalues {
            ensure!(mu.abs() <= r * (1.0 + 1e-12), "instance {i}: eigenvalue 1 + {mu:e} outside 1 ± {r:e}");
        }
        let bound = 6.0 * e0 * e0 * k as f64;
        ensure!(r <= bound, "instance {i}: r = {r:e} > {bound:e}");
        worst_ratio = worst_ratio.max(r / bound);
    }
    Ok(format!("enclosure holds, max r/(6 E0^2 k) = {worst_ratio:.3}"))
}

fn flop_model() -> Outcome {
    let mut parts = Vec::new();
    for (k, d) in [(256, 1024), (512, 2048)] {
        let m = ok(random_with_spectrum(&SpectrumSpec::with_condition(k, d, 10.0), 6))?;
        let flops = |op: BenchOp| ok(op.run(&m)).map(|r| r.ledger.total(FlopConvention::Table) as f64);
        let mud1 = flops(BenchOp::Mud { passes: 1 })?;
        let mud2 = flops(BenchOp::Mud { passes: 2 })?;
        let muon5 = flops(BenchOp::Muon { iters: 5 })?;
        let (r1, r2) = (muon5 / mud1, mud2 / mud1);
        ensure!((r1 - 12.0).abs() <= 1.2, "({k},{d}): Muon5/MUD1 = {r1}");
        ensure!((r2 - 2.0).abs() <= 0.1, "({k},{d}): MUD2/MUD1 = {r2}");
        parts.push(format!("({k},{d}) {r1:.2}/{r2:.2}"));
    }
    Ok(parts.join(", "))
}

fn throughput_ordering() -> Outcome {
    let spec = SpectrumSpec::with_condition(256, 1024, 10.0);
    let mud = ok(bench(BenchOp::Mud { passes: 1 }, &spec, 8, 5))?;
    let muon = ok(bench(BenchOp::Muon { iters: 5 }, &spec, 8, 5))?;
    ensure!(
        mud.wall_seconds < muon.wall_seconds,
        "mud1 {:.4} s >= muon5 {:.4} s",
        mud.wall_seconds,
        muon.wall_seconds
    );
    Ok(format!(
        "(256,1024) median mud1 {:.4} s, muon5 {:.4} s",
        mud.wall_seconds, muon.wall_seconds
    ))
}

fn phi5(x: f64) -> f64 {
    let (a, b, c) = (3.4445, -4.7750, 2.0315);
    (0..5).fold(x, |y, _| a * y + b * y.powi(3) + c * y.powi(5))
}

fn singular_vector_transport() -> Outcome {
    let mut rng = SplitMix64::new(31);
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let k = [3, 8, 16, 24][i as usize % 4];
        let d = k + 5 * (1 + i as usize % 3);
        let u = ok(random_row_orthonormal(k, k, 1000 + i))?;
        let v = ok(random_row_orthonormal(k, d, 2000 + i))?;
        let sigma: Vec<f64> = (0..k).map(|_| rng.uniform(1e-2f64.ln(), 1f64.ln()).exp() * 3.0).collect();
        let m = ok(ok(u.matmul(&Matrix::diag(&sigma)))?.matmul(&v))?;
        let fro = sigma.iter().map(|s| s * s).sum::<f64>().sqrt();
        let mapped: Vec<f64> = sigma.iter().map(|s| phi5(s / (fro + 1e-8))).collect();
        let expected = ok(ok(u.matmul(&Matrix::diag(&mapped)))?.matmul(&v))?;
        let got = ok(muon_ns(&m, &WhitenConfig::default()))?.output;
        let err = got.max_abs_diff(&expected);
        worst = worst.max(err);
        ensure!(err <= 1e-8, "instance {i} ({k}x{d}): {err:e}");
    }
    Ok(format!("max entry error {worst:.2e}"))
}

fn polar_optimality() -> Outcome {
    let mut min_gap = f64::INFINITY;
    for i in 0..20u64 {
        let k = [4, 8, 12, 20][i as usize % 4];
        let d = 2 * k + i as usize;
        let m = ok(random_with_spectrum(&SpectrumSpec::with_condition(k, d, 50.0), 3000 + i))?;
        let m = m.scale(0.5 + i as f64 / 10.0);
        let p = diff_fro(&m, &ok(polar_exact(&m))?.output);
        let c = diff_fro(&m, &ok(cholqr_whiten(&m))?.output);
        ensure!(p <= c, "instance {i}: polar {p} > cholqr {c}");
        for j in 0..20u64 {
            let r = diff_fro(&m, &ok(random_row_orthonormal(k, d, 4000 + 20 * i + j))?);
            ensure!(p <= r, "instance {i}, R {j}: polar {p} > {r}");
            min_gap = min_gap.min(r - p);
        }
        min_gap = min_gap.min(c - p);
    }
    Ok(format!("smallest margin {min_gap:.3e}"))
}

fn gradient_checks() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    for seed in 0..5u64 {
        let mut t = ok(MatReg::new(seed, 12, 9, 32))?;
        let batch = t.sample_batch();
        let mut rng = SplitMix64::new(seed + 50);
        let params = vec![NamedTensor::new("w", Matrix::gaussian(12, 9, &mut rng))];
        let err = ok(check_task_gradient(&t, &params, &batch, 1e-5, seed))?;
        ensure!(err <= 1e-6, "matreg seed {seed}: {err:e}");
        worst.0 = worst.0.max(err);

        let mut t = ok(Mlp::new(seed, 6, 10, 4, 16))?;
        let batch = t.sample_batch();
        let params = t.init_params();
        let err = ok(check_task_gradient(&t, &params, &batch, 1e-5, seed))?;
        ensure!(err <= 1e-4, "mlp seed {seed}: {err:e}");
        worst.1 = worst.1.max(err);
    }
    Ok(format!("max relative error matreg {:.2e}, mlp {:.2e}", worst.0, worst.1))
}

fn training_sanity() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for kind in [OptimizerKind::AdamW, OptimizerKind::Muon, OptimizerKind::Mud] {
        let cfg = TrainConfig {
            optimizer: kind,
            timing: Timing::Off,
            ..TrainConfig::default()
        };
        ensure!((cfg.rows, cfg.cols, cfg.steps, cfg.mud_passes) == (32, 32, 2000, 1), "unexpected defaults");
        let a = ok(train(&cfg))?;
        ok(a.completed())?;
        let initial = a.records[0].loss;
        let hit = a.records.iter().position(|r| r.loss <= 1e-2 * initial);
        let Some(hit) = hit else {
            return Err(format!("{}: never reached 1e-2 of initial loss", kind.as_str()));
        };
        let b = ok(train(&cfg))?;
        ensure!(
            records_to_csv(&a.records) == records_to_csv(&b.records),
            "{}: CSVs differ between identical runs",
            kind.as_str()
        );
        parts.push(format!("{} step {hit}", kind.as_str()));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 120.0, "took {secs:.1} s");
    Ok(format!("1e-2 target reached: {}; CSVs identical; {secs:.1} s", parts.join(", ")))
}

fn adamw_semantics() -> Outcome {
    let hp = GroupHyper {
        lr_scale: 1.0,
        weight_decay: 0.1,
        beta_momentum: 0.95,
        adam_betas: (0.8, 0.99),
        eps: 1e-6,
    };
    let grads = [0.3, -1.2, 0.05];
    let lrs = [0.01, 0.02, 0.015];
    let mut param = Tensor::Vector(vec![0.7]);
    let mut state = ParamState::zeros_like(&param);

    let (b1, b2, lambda, eps) = (0.8f64, 0.99f64, 0.1, 1e-6);
    let (mut theta, mut m, mut v) = (0.7f64, 0.0f64, 0.0f64);
    let mut worst = 0.0f64;
    for t in 1..=3 {
        let (g, eta) = (grads[t - 1], lrs[t - 1]);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t as i32));
        let v_hat = v / (1.0 - b2.powi(t as i32));
        theta = (1.0 - eta * lambda) * theta - eta * m_hat / (v_hat.sqrt() + eps);

        ok(adamw_update(&mut param, &Tensor::Vector(vec![g]), &mut state, &hp, eta))?;
        let got = param.as_slice()[0];
        let err = (got - theta).abs();
        worst = worst.max(err);
        ensure!(err <= 1e-14, "step {t}: {got} vs {theta}");
        ensure!((state.m.as_slice()[0] - m).abs() <= 1e-14, "step {t}: first moment");
        ensure!((state.v.as_slice()[0] - v).abs() <= 1e-14, "step {t}: second moment");
    }
    Ok(format!("max deviation {worst:e}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("fixed point of row-orthonormal matrices", fixed_point),
        ("quadratic convergence of the Gram map", quadratic_convergence),
        ("2x2 Gram map is exact", two_by_two),
        ("SGS spectral equivalence", sgs_equivalence),
        ("eigenvalue clustering after one pass", eigenvalue_clustering),
        ("FLOP model ratios", flop_model),
        ("MUD1 faster than Muon5", throughput_ordering),
        ("Newton-Schulz singular-vector transport", singular_vector_transport),
        ("polar factor is the closest orthonormal matrix", polar_optimality),
        ("analytic gradients match finite differences", gradient_checks),
        ("training sanity and reproducibility", training_sanity),
        ("AdamW scalar semantics", adamw_semantics),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} [{secs:.2} s]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} [{secs:.2} s]: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
