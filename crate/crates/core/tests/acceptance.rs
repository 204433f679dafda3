//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails or exceeds its time budget.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use freqlora::adapters::{forward_freq_lora, forward_frozen, param_count};
use freqlora::experiment::{
    emit_report, oracle_for_rank, read_report, run_arm, run_sweep, run_sweep_with, Arm, Axis,
    Checkpoint, ExperimentConfig, ReportFormat, RunReport, SweepSpec,
};
use freqlora::grad_check::{run_suite, SUITE_CASES};
use freqlora::lowrank::{svd, truncate};
use freqlora::numerics::{matmul, matvec};
use freqlora::training::{add_gaussian_noise, Dataset, TrainConfig};
use freqlora::{
    dft_real, idft_real, Adapter, AdapterConfig, AdapterParams, Matrix, Mode, Rng, SpectralPlans,
    SpectrumPlan, Vector,
};

type Outcome = Result<String, String>;

/// Name, time budget in seconds, check.
type Criterion = (&'static str, u64, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Packed orthonormal DFT computed directly from cos/sin sums.
fn naive_packed_dft(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let scale = 1.0 / (n as f64).sqrt();
    let bin = |m: usize| {
        let (mut re, mut im) = (0.0, 0.0);
        for (t, v) in x.iter().enumerate() {
            let ang = 2.0 * PI * (m * t % n) as f64 / n as f64;
            re += v * ang.cos();
            im -= v * ang.sin();
        }
        (re * scale, im * scale)
    };
    let mut out = vec![bin(0).0];
    for m in 1..n.div_ceil(2) {
        let (re, im) = bin(m);
        out.push(2f64.sqrt() * re);
        out.push(2f64.sqrt() * im);
    }
    if n.is_multiple_of(2) {
        out.push(bin(n / 2).0);
    }
    out
}

fn spectral() -> Outcome {
    let mut rng = Rng::new(101);
    let (mut worst_dft, mut worst_rt, mut worst_parseval) = (0.0f64, 0.0f64, 0.0f64);
    for n in 2..=32 {
        let plan = SpectrumPlan::new(n).map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let x = Vector::gaussian(n, &mut rng);
            let packed = dft_real(&x, &plan).map_err(|e| e.to_string())?;
            worst_dft = worst_dft.max(max_abs_diff(packed.data(), &naive_packed_dft(&x)));
            let back = idft_real(&packed, &plan).map_err(|e| e.to_string())?;
            worst_rt = worst_rt.max(max_abs_diff(&back, &x));
            worst_parseval = worst_parseval.max((packed.data().norm() - x.norm()).abs());
        }
    }
    ensure(worst_dft <= 1e-10, || {
        format!("dft vs naive oracle off by {worst_dft:.3e}")
    })?;
    ensure(worst_rt <= 1e-10, || {
        format!("round trip off by {worst_rt:.3e}")
    })?;
    ensure(worst_parseval <= 1e-10, || {
        format!("Parseval off by {worst_parseval:.3e}")
    })?;
    Ok(format!(
        "n=2..32: dft err {worst_dft:.1e}, round trip {worst_rt:.1e}, norm {worst_parseval:.1e}"
    ))
}

/// Orthonormal basis of a random `rows x k` Gaussian matrix.
fn random_orthonormal(rows: usize, k: usize, rng: &mut Rng) -> Vec<Vector> {
    let mut basis: Vec<Vector> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v = Vector::gaussian(rows, rng);
        for b in &basis {
            let c = freqlora::numerics::dot(&v, b);
            v = v.sub(&b.scale(c));
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v.scale(1.0 / norm));
        }
    }
    basis
}

fn eckart_young() -> Outcome {
    let mut rng = Rng::new(202);
    let mut worst = 0.0f64;
    let mut checks = 0usize;
    for _ in 0..50 {
        let rows = 1 + rng.index(16);
        let cols = 1 + rng.index(16);
        let m = Matrix::gaussian(rows, cols, 1.0, &mut rng);
        let s = svd(&m).map_err(|e| e.to_string())?;
        let reference =
            nalgebra::DMatrix::from_row_slice(rows, cols, m.as_slice()).singular_values();
        let mut sv: Vec<f64> = reference.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        for k in 1..=rows.min(cols) {
            let approx = truncate(&s, k).map_err(|e| e.to_string())?.product();
            let resid = m
                .sub(&approx)
                .map_err(|e| e.to_string())?
                .frobenius_norm()
                .powi(2);
            let tail: f64 = sv[k..].iter().map(|v| v * v).sum();
            worst = worst.max((resid - tail).abs());
            ensure((resid - tail).abs() <= 1e-8, || {
                format!("{rows}x{cols} k={k}: residual {resid:.12e} vs tail energy {tail:.12e}")
            })?;
            for c in 0..100 {
                let q = random_orthonormal(rows, k, &mut rng);
                let mut cand = Matrix::zeros(rows, cols);
                for b in &q {
                    let coeffs =
                        freqlora::numerics::matvec_transposed(&m, b).map_err(|e| e.to_string())?;
                    cand.add_outer(1.0, b, &coeffs);
                }
                let cand_resid = m
                    .sub(&cand)
                    .map_err(|e| e.to_string())?
                    .frobenius_norm()
                    .powi(2);
                ensure(resid <= cand_resid + 1e-10, || {
                    format!("{rows}x{cols} k={k}: candidate {c} beats truncation ({cand_resid:.6e} < {resid:.6e})")
                })?;
            }
            checks += 1;
        }
    }
    Ok(format!(
        "50 matrices, {checks} ranks, 100 candidates each; worst |residual - tail| {worst:.1e}"
    ))
}

fn random_params(out: usize, inp: usize, k: usize, rng: &mut Rng) -> AdapterParams {
    AdapterParams {
        w: Matrix::gaussian(out, inp, 1.0, rng),
        up: Matrix::gaussian(out, k, 1.0, rng),
        down: Matrix::gaussian(k, inp, 1.0, rng),
    }
}

fn lora_identities() -> Outcome {
    let mut rng = Rng::new(303);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (out, inp) = (1 + rng.index(20), 1 + rng.index(20));
        let k = 1 + rng.index(out.min(inp));
        let cfg = AdapterConfig::new(inp, out, k, Mode::SpatialLora);
        let p = random_params(out, inp, k, &mut rng);
        let x = Vector::gaussian(inp, &mut rng);
        let dense =
            p.w.add(&matmul(&p.up, &p.down).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
        let expected = matvec(&dense, &x).map_err(|e| e.to_string())?;
        let layer = Adapter::from_params(cfg.clone(), p.clone()).map_err(|e| e.to_string())?;
        let got = layer.forward(&x).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&got, &expected));

        for mode in [Mode::SpatialLora, Mode::FreqLora] {
            let cfg = AdapterConfig {
                init_seed: rng.next_u64(),
                ..AdapterConfig::new(inp, out, k, mode)
            };
            let fresh = Adapter::new(cfg.clone(), p.w.clone()).map_err(|e| e.to_string())?;
            let frozen = forward_frozen(&p, &x).map_err(|e| e.to_string())?;
            let h = fresh.forward(&x).map_err(|e| e.to_string())?;
            ensure(bits(&h) == bits(&frozen), || {
                format!("{mode:?} {out}x{inp}: zero-init forward differs from frozen")
            })?;
            let (trainable, _) = param_count(&cfg);
            ensure(trainable == k * (out + inp), || {
                format!("param_count {trainable} != {}", k * (out + inp))
            })?;
        }
    }
    ensure(worst <= 1e-10, || {
        format!("factorized vs dense off by {worst:.3e}")
    })?;
    Ok(format!(
        "50 shapes: factorized vs dense {worst:.1e}; zero-init exact; param_count = k(u1+u2)"
    ))
}

fn freq_semantics() -> Outcome {
    let mut rng = Rng::new(404);
    let (mut worst_lin, mut worst_mat, mut worst_rank) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..40 {
        let (out, inp) = (2 + rng.index(18), 2 + rng.index(18));
        let k = 1 + rng.index(out.min(inp));
        let plans = SpectralPlans::new(inp, out).map_err(|e| e.to_string())?;
        let p = random_params(out, inp, k, &mut rng);
        let x = Vector::gaussian(inp, &mut rng);
        let wx = matvec(&p.w, &x).map_err(|e| e.to_string())?;

        let h0 = forward_freq_lora(&p, 0.0, &x, &plans).map_err(|e| e.to_string())?;
        ensure(bits(&h0) == bits(&wx), || {
            "alpha=0 does not reduce to W x exactly".into()
        })?;
        let zero_up = AdapterParams {
            up: Matrix::zeros(out, k),
            ..p.clone()
        };
        let hu = forward_freq_lora(&zero_up, 1.3, &x, &plans).map_err(|e| e.to_string())?;
        ensure(bits(&hu) == bits(&wx), || {
            "up=0 does not reduce to W x exactly".into()
        })?;

        let layer = |alpha: f64| {
            Adapter::from_params(
                AdapterConfig {
                    alpha,
                    ..AdapterConfig::new(inp, out, k, Mode::FreqLora)
                },
                p.clone(),
            )
        };
        let unit = layer(1.0).map_err(|e| e.to_string())?;
        let c = 0.25 + 3.0 * rng.uniform();
        let scaled = layer(c).map_err(|e| e.to_string())?;
        let b1 = unit.branch(&x).map_err(|e| e.to_string())?;
        let bc = scaled.branch(&x).map_err(|e| e.to_string())?;
        worst_lin = worst_lin.max(max_abs_diff(&bc, &b1.scale(c)));

        let delta = scaled.materialize_delta().map_err(|e| e.to_string())?;
        let via_delta = matvec(&delta, &x).map_err(|e| e.to_string())?;
        worst_mat = worst_mat.max(max_abs_diff(&via_delta, &bc));
        if k < out.min(inp) {
            let s = svd(&delta).map_err(|e| e.to_string())?;
            let ratio = s.sigma[k] / s.sigma[0];
            worst_rank = worst_rank.max(ratio);
            ensure(ratio <= 1e-9, || {
                format!("{out}x{inp} k={k}: sigma_(k+1)/sigma_1 = {ratio:.3e}")
            })?;
        }
    }
    ensure(worst_lin <= 1e-12, || {
        format!("alpha-linearity off by {worst_lin:.3e}")
    })?;
    ensure(worst_mat <= 1e-9, || {
        format!("materialized delta off by {worst_mat:.3e}")
    })?;
    Ok(format!(
        "40 shapes: alpha=0 and up=0 exact; linearity {worst_lin:.1e}; materialized {worst_mat:.1e}; sigma ratio {worst_rank:.1e}"
    ))
}

fn gradients() -> Outcome {
    let results = run_suite(10, 505).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for r in &results {
        worst = worst.max(r.report.max_rel_err);
        ensure(r.report.passed, || {
            format!("{} #{} ({}): {}", r.case, r.instance, r.shape, r.report)
        })?;
    }
    Ok(format!(
        "{} cases x 10 instances at h=1e-5; worst relative error {worst:.2e}",
        SUITE_CASES.len()
    ))
}

fn rank_config(target_noise_std: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_for(Axis::Rank);
    cfg.task.target_noise_std = target_noise_std;
    cfg.adapter.rank = 4;
    cfg.train.steps = 3000;
    cfg
}

fn oracle_matched() -> Outcome {
    let mut notes = Vec::new();
    for noise in [0.1, 0.0] {
        let cfg = rank_config(noise);
        let data = Dataset::generate(&cfg.task).map_err(|e| e.to_string())?;
        let oracle = oracle_for_rank(&data, 4).map_err(|e| e.to_string())?;
        let mut mean = 0.0;
        for seed in 0..5 {
            let run = run_arm(&cfg, Arm::FreqLora, seed, &data).map_err(|e| e.to_string())?;
            let m = &run.metrics;
            ensure(m.final_train_loss >= oracle.train_loss - 1e-9, || {
                format!(
                    "seed {seed}: train loss {:.6e} below the oracle {:.6e}",
                    m.final_train_loss, oracle.train_loss
                )
            })?;
            mean += m.final_test_loss / 5.0;
        }
        if noise > 0.0 {
            let ratio = mean / oracle.test_loss;
            ensure(ratio <= 1.05, || {
                format!("target noise {noise}: mean test MSE {mean:.6e} is {ratio:.4}x the oracle {:.6e}", oracle.test_loss)
            })?;
            notes.push(format!(
                "target noise {noise}: {mean:.4e} = {ratio:.4}x oracle"
            ));
        } else {
            ensure(oracle.test_loss <= 1e-8 && mean <= 1e-8, || {
                format!(
                    "noiseless targets: oracle {:.3e}, trained {mean:.3e}",
                    oracle.test_loss
                )
            })?;
            notes.push(format!(
                "noiseless: oracle {:.1e}, trained {mean:.1e}",
                oracle.test_loss
            ));
        }
    }
    Ok(notes.join("; "))
}

fn noise_trend() -> Outcome {
    let spec = SweepSpec::default_for(Axis::Noise);
    let outcome = run_sweep(&spec).map_err(|e| e.to_string())?;
    ensure(outcome.failures.is_empty(), || outcome.failures.join("; "))?;
    let report = &outcome.report;
    let mut notes = Vec::new();
    for arm in Arm::ALL {
        let acc = |v: f64| {
            report
                .aggregate(arm, v)
                .and_then(|a| a.accuracy_mean)
                .ok_or(format!("no accuracy for {}", arm.name()))
        };
        let (clean, noisy) = (acc(0.0)?, acc(0.2)?);
        ensure(noisy <= clean, || {
            format!(
                "{}: accuracy {noisy:.4} at 0.2 exceeds {clean:.4} at 0",
                arm.name()
            )
        })?;
        notes.push(format!("{} {clean:.3}->{noisy:.3}", arm.name()));
    }
    let nominal = 0.2;
    let mut rng = Rng::new(707);
    let noisy =
        add_gaussian_noise(&vec![0.0; 100_000], nominal, &mut rng).map_err(|e| e.to_string())?;
    let mean = noisy.iter().sum::<f64>() / noisy.len() as f64;
    let var = noisy.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (noisy.len() - 1) as f64;
    ensure((var / nominal - 1.0).abs() <= 0.05, || {
        format!("empirical variance {var:.5} vs nominal {nominal}")
    })?;
    Ok(format!(
        "{}; noise variance {var:.4} (nominal 0.2)",
        notes.join(", ")
    ))
}

fn rank_trend() -> Outcome {
    let sweep_task = SweepSpec::default_for(Axis::Rank).base.task;
    let data = Dataset::generate(&sweep_task).map_err(|e| e.to_string())?;
    let mut prev = f64::INFINITY;
    for k in 0..=16 {
        let loss = oracle_for_rank(&data, k)
            .map_err(|e| e.to_string())?
            .test_loss;
        ensure(loss <= prev + 1e-12, || {
            format!("oracle test loss rises at k={k}: {loss:.6e} > {prev:.6e}")
        })?;
        prev = loss;
    }
    // With noisy targets only the training objective is guaranteed monotone;
    // extra rank can fit noise and raise the held-out loss.
    let noisy = Dataset::generate(&rank_config(0.1).task).map_err(|e| e.to_string())?;
    let (mut prev_train, mut test_rises) = (f64::INFINITY, 0);
    let mut prev_test = f64::INFINITY;
    for k in 0..=16 {
        let r = oracle_for_rank(&noisy, k).map_err(|e| e.to_string())?;
        ensure(r.train_loss <= prev_train + 1e-12, || {
            format!(
                "noisy oracle train loss rises at k={k}: {:.6e} > {prev_train:.6e}",
                r.train_loss
            )
        })?;
        test_rises += usize::from(r.test_loss > prev_test);
        prev_train = r.train_loss;
        prev_test = r.test_loss;
    }
    let mut spec = SweepSpec::default_for(Axis::Rank);
    spec.values = vec![1.0, 8.0];
    spec.arms = vec![Arm::FreqLora];
    let outcome = run_sweep(&spec).map_err(|e| e.to_string())?;
    ensure(outcome.failures.is_empty(), || outcome.failures.join("; "))?;
    let mean = |v: f64| {
        outcome
            .report
            .aggregate(Arm::FreqLora, v)
            .and_then(|a| a.test_loss_mean)
            .unwrap_or(f64::NAN)
    };
    let (one, eight) = (mean(1.0), mean(8.0));
    ensure(eight <= one, || {
        format!("rank 8 mean loss {eight:.6e} exceeds rank 1 {one:.6e}")
    })?;
    Ok(format!(
        "oracle nonincreasing for k=0..16 (noisy targets: train loss monotone, test loss rose at {test_rises} ranks); \
         trained freq_lora rank 1 {one:.3e}, rank 8 {eight:.3e}"
    ))
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut spec = SweepSpec::default_for(Axis::Noise);
    spec.base.train = TrainConfig {
        steps: 300,
        eval_interval: 100,
        ..spec.base.train.clone()
    };
    spec.seeds = vec![0, 1];
    let first = run_sweep(&spec).map_err(|e| e.to_string())?.report;
    let second = run_sweep(&spec).map_err(|e| e.to_string())?.report;
    let serial = run_sweep_with(&spec, false)
        .map_err(|e| e.to_string())?
        .report;
    let csv = first.csv_without_timing().map_err(|e| e.to_string())?;
    ensure(
        csv == second.csv_without_timing().map_err(|e| e.to_string())?,
        || "repeated sweeps differ".into(),
    )?;
    ensure(
        csv == serial.csv_without_timing().map_err(|e| e.to_string())?,
        || "serial and parallel sweeps differ".into(),
    )?;

    let csv_path = dir.path().join("report.csv");
    let json_path = dir.path().join("report.json");
    emit_report(&first, &csv_path, ReportFormat::Csv).map_err(|e| e.to_string())?;
    emit_report(&first, &json_path, ReportFormat::Json).map_err(|e| e.to_string())?;
    let from_csv = read_report(&csv_path, ReportFormat::Csv).map_err(|e| e.to_string())?;
    let from_json = read_report(&json_path, ReportFormat::Json).map_err(|e| e.to_string())?;
    ensure(from_csv == first && from_json == first, || {
        "report files do not round-trip".into()
    })?;
    let recomputed = RunReport::from_rows(from_csv.rows.clone());
    for (a, b) in recomputed.aggregates.iter().zip(&from_json.aggregates) {
        for (x, y) in [
            (a.test_loss_mean, b.test_loss_mean),
            (a.test_loss_std, b.test_loss_std),
            (a.accuracy_mean, b.accuracy_mean),
            (a.accuracy_std, b.accuracy_std),
        ] {
            let (x, y) = (x.unwrap_or(0.0), y.unwrap_or(0.0));
            ensure((x - y).abs() <= 1e-12, || {
                format!("aggregate mismatch {x} vs {y}")
            })?;
        }
    }

    let cfg = ExperimentConfig::default_for(Axis::Rank);
    let cfg = ExperimentConfig {
        train: TrainConfig {
            steps: 200,
            ..cfg.train.clone()
        },
        ..cfg
    };
    let data = Dataset::generate(&cfg.task).map_err(|e| e.to_string())?;
    for arm in [Arm::Lora, Arm::FreqLora] {
        let run = run_arm(&cfg, arm, 3, &data).map_err(|e| e.to_string())?;
        ensure(
            bits(run.params.w.as_slice()) == bits(data.w0.as_slice()),
            || format!("{}: frozen W changed during training", arm.name()),
        )?;
        let ck = Checkpoint {
            mode: cfg.adapter_config(arm, 3).mode,
            alpha: cfg.adapter.alpha,
            params: run.params.clone(),
        };
        let path = dir.path().join(format!("{}.fql", arm.name()));
        ck.save(&path).map_err(|e| e.to_string())?;
        let loaded = Checkpoint::load(&path).map_err(|e| e.to_string())?;
        ensure(loaded == ck, || "checkpoint does not round-trip".into())?;
        ensure(
            std::fs::read(&path).map_err(|e| e.to_string())?
                == loaded.to_bytes().map_err(|e| e.to_string())?,
            || "checkpoint bytes differ after reload".into(),
        )?;
    }
    Ok(format!(
        "{} rows identical across 3 sweeps; csv/json/checkpoint round-trip; W bit-identical",
        first.rows.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("spectral correctness", 1, spectral),
        ("truncated SVD optimality", 10, eckart_young),
        ("LoRA identities", 1, lora_identities),
        ("frequency adapter semantics", 5, freq_semantics),
        ("gradient suite", 30, gradients),
        ("oracle-matched training", 60, oracle_matched),
        ("noise trend", 120, noise_trend),
        ("rank trend", 120, rank_trend),
        ("reproducibility and formats", 60, reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let within = elapsed <= Duration::from_secs(*budget);
        let (status, detail) = match (&result, within) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("over the {budget} s budget; {d}")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "{status} criterion {} {name} [{:.2} s / {budget} s]: {detail}",
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
