//! `freqlora` command-line tool.
//!
//! Exit status: 0 on success, 1 when a check or run fails, 2 on usage errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use freqlora::experiment::{
    closed_form_oracle, emit_report, read_matrix_file, run_arm, run_sweep, write_matrix_file, Axis,
    Checkpoint, ExperimentConfig, ReportFormat, SweepSpec,
};
use freqlora::grad_check::run_suite;
use freqlora::lowrank::{svd, truncate};
use freqlora::training::Dataset;

#[derive(Parser)]
#[command(
    name = "freqlora",
    version,
    about = "Frequency-domain and spatial LoRA experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Noise,
    Rank,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run the finite-difference gradient suite over every layer and loss.
    Gradcheck {
        /// Random instances per layer/loss combination.
        #[arg(long, default_value_t = 10)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a single arm from a JSON config and print its metrics.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Training and adapter-init seed (default: the config's train.seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Write the metrics JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Save the trained parameters as an FQL1 checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run every arm x value x seed combination along one axis.
    Sweep {
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// JSON config; without it the built-in default for the axis is used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// First seed; the sweep keeps its seed count and uses consecutive seeds from here.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the closed-form rank-constrained optimum for a linreg_circulant config.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Truncated SVD of a matrix file (u32 rows, u32 cols, row-major f64, little-endian).
    SvdCompress {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        rank: usize,
        /// Write the rank-k approximation here, in the same format.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the header of an FQL1 checkpoint.
    CheckpointDump { file: PathBuf },
}

type CmdResult = Result<bool, String>;

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    let result = match cli.command {
        Command::Gradcheck { instances, seed } => gradcheck(instances, seed),
        Command::Train {
            config,
            seed,
            out,
            checkpoint,
        } => train(&config, seed, out.as_deref(), checkpoint.as_deref()),
        Command::Sweep {
            axis,
            config,
            out,
            format,
            seed,
        } => sweep(axis, config.as_deref(), out.as_deref(), format, seed),
        Command::Oracle { config } => oracle(&config),
        Command::SvdCompress { input, rank, out } => svd_compress(&input, rank, out.as_deref()),
        Command::CheckpointDump { file } => checkpoint_dump(&file),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| e.to_string()),
    }
}

fn to_json(value: &impl serde::Serialize) -> Result<String, String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| e.to_string())
}

fn gradcheck(instances: usize, seed: u64) -> CmdResult {
    if instances == 0 {
        return Err("--instances must be at least 1".into());
    }
    let results = run_suite(instances, seed).map_err(|e| e.to_string())?;
    let failed = results.iter().filter(|r| !r.report.passed).count();
    for r in &results {
        println!(
            "{:<40} #{:<3} {:<28} {}",
            r.case, r.instance, r.shape, r.report
        );
    }
    println!(
        "{} of {} checks passed",
        results.len() - failed,
        results.len()
    );
    Ok(failed == 0)
}

fn train(
    config: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
    checkpoint: Option<&Path>,
) -> CmdResult {
    let cfg = ExperimentConfig::load(config).map_err(|e| e.to_string())?;
    let seed = seed.unwrap_or(cfg.train.seed);
    let data = Dataset::generate(&cfg.task).map_err(|e| e.to_string())?;
    let run = run_arm(&cfg, cfg.arm, seed, &data).map_err(|e| e.to_string())?;
    if let Some(path) = checkpoint {
        let acfg = cfg.adapter_config(cfg.arm, seed);
        Checkpoint {
            mode: acfg.mode,
            alpha: acfg.alpha,
            params: run.params,
        }
        .save(path)
        .map_err(|e| e.to_string())?;
    }
    write_output(out, &to_json(&run.metrics)?)?;
    Ok(true)
}

fn sweep(
    axis: AxisArg,
    config: Option<&Path>,
    out: Option<&Path>,
    format: FormatArg,
    seed: Option<u64>,
) -> CmdResult {
    let axis = match axis {
        AxisArg::Noise => Axis::Noise,
        AxisArg::Rank => Axis::Rank,
    };
    let base = match config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| e.to_string())?,
        None => ExperimentConfig::default_for(axis),
    };
    let mut spec = SweepSpec::new(axis, base);
    if let Some(first) = seed {
        spec.seeds = (0..spec.seeds.len() as u64).map(|i| first + i).collect();
    }
    let outcome = run_sweep(&spec).map_err(|e| e.to_string())?;
    let format = match format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Json => ReportFormat::Json,
    };
    match out {
        Some(path) => emit_report(&outcome.report, path, format).map_err(|e| e.to_string())?,
        None => match format {
            ReportFormat::Csv => outcome
                .report
                .write_csv(std::io::stdout().lock())
                .map_err(|e| e.to_string())?,
            ReportFormat::Json => write_output(
                None,
                &(outcome.report.to_json().map_err(|e| e.to_string())? + "\n"),
            )?,
        },
    }
    for failure in &outcome.failures {
        eprintln!("failed run: {failure}");
    }
    Ok(outcome.failures.is_empty())
}

fn oracle(config: &Path) -> CmdResult {
    let cfg = ExperimentConfig::load(config).map_err(|e| e.to_string())?;
    let report = closed_form_oracle(&cfg.task, &cfg.adapter_config(cfg.arm, 0))
        .map_err(|e| e.to_string())?;
    write_output(None, &to_json(&report)?)?;
    Ok(true)
}

fn svd_compress(input: &Path, rank: usize, out: Option<&Path>) -> CmdResult {
    let m = read_matrix_file(input).map_err(|e| e.to_string())?;
    let s = svd(&m).map_err(|e| e.to_string())?;
    let factors = truncate(&s, rank).map_err(|e| e.to_string())?;
    let approx = factors.product();
    let residual = m.sub(&approx).map_err(|e| e.to_string())?.frobenius_norm();
    if let Some(path) = out {
        write_matrix_file(path, &approx).map_err(|e| e.to_string())?;
    }
    let (rows, cols) = m.shape();
    let summary = serde_json::json!({
        "rows": rows,
        "cols": cols,
        "rank": rank,
        "singular_values": s.sigma,
        "tail_energy": s.tail_energy(rank),
        "residual_frobenius": residual,
        "stored_values": rank * (rows + cols),
        "dense_values": rows * cols,
    });
    write_output(None, &to_json(&summary)?)?;
    Ok(true)
}

fn checkpoint_dump(file: &Path) -> CmdResult {
    let ck = Checkpoint::load(file).map_err(|e| e.to_string())?;
    let h = ck.header();
    let summary = serde_json::json!({
        "magic": "FQL1",
        "version": h.version,
        "mode": h.mode.name(),
        "out_dim": h.out_dim,
        "in_dim": h.in_dim,
        "rank": h.rank,
        "alpha": h.alpha,
    });
    write_output(None, &to_json(&summary)?)?;
    Ok(true)
}
