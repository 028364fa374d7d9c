use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use bartint_cli::config::ExperimentConfig;
use bartint_cli::{bench, experiment, report, synth, HarnessError};

/// Benchmark harness for Bayesian numerical integration with tree
/// ensembles, a GP quadrature baseline, and plain Monte Carlo.
#[derive(Parser)]
#[command(name = "bartint", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment described by a TOML config and persist results.
    Run {
        config: PathBuf,
        /// Override the repetition seed base.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the repetition count.
        #[arg(long)]
        reps: Option<usize>,
        /// Apply the config's [paper_scale] overrides.
        #[arg(long)]
        paper_scale: bool,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate persisted results into a CSV table and SVG plots.
    Report { dir: PathBuf },
    /// Time BART-Int and GP-BQ fits over the config's size grid.
    BenchRuntime {
        config: PathBuf,
        #[arg(long)]
        paper_scale: bool,
    },
    /// Generate a synthetic survey pool CSV.
    SynthPool {
        #[arg(long)]
        rows: usize,
        #[arg(long, default_value_t = 7)]
        schema_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and validate a config without running anything.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) =>
        {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load(
    path: &PathBuf,
    seed: Option<u64>,
    reps: Option<usize>,
    paper_scale: bool,
    out: Option<PathBuf>,
) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if paper_scale {
        cfg.apply_paper_scale();
    }
    if let Some(s) = seed {
        cfg.repetitions.seed_base = s;
        cfg.repetitions.seeds = None;
    }
    if let Some(r) = reps {
        cfg.repetitions.count = r;
        if let Some(list) = &cfg.repetitions.seeds {
            if list.len() < r {
                cfg.repetitions.seeds = None;
            }
        }
    }
    if let Some(dir) = out {
        cfg.output_dir = dir.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.cmd {
        Cmd::Run { config, seed, reps, paper_scale, out } => {
            let cfg = load(&config, seed, reps, paper_scale, out)?;
            let out_dir = cfg.resolved_output_dir();
            if cfg.kind == bartint_cli::config::ExperimentKind::Runtime {
                let table = bench::runtime_benchmark(&cfg)?;
                let path = bench::persist_timing(&table, &out_dir)?;
                println!("wrote {}", path.display());
                return Ok(());
            }
            let records = experiment::run_experiment(&cfg, &out_dir)?;
            let paths = experiment::persist_records(&records, &out_dir)?;
            for (record, path) in records.iter().zip(&paths) {
                println!(
                    "{} {} {}: mape {} (se {}) -> {}",
                    record.experiment,
                    record.family.as_deref().unwrap_or("-"),
                    record.method,
                    record.mape.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "n/a".into()),
                    record
                        .mape_std_err
                        .map(|v| format!("{v:.2e}"))
                        .unwrap_or_else(|| "n/a".into()),
                    path.display()
                );
            }
            Ok(())
        }
        Cmd::Report { dir } => {
            let records = experiment::load_records(&dir)?;
            if records.is_empty() {
                return Err(HarnessError::Config(format!(
                    "no result records found in {}",
                    dir.display()
                )));
            }
            let paths = report::emit_report(&records, &dir)?;
            for p in paths {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Cmd::BenchRuntime { config, paper_scale } => {
            let cfg = load(&config, None, None, paper_scale, None)?;
            let table = bench::runtime_benchmark(&cfg)?;
            let path = bench::persist_timing(&table, &cfg.resolved_output_dir())?;
            for row in &table.rows {
                println!("{} n={}: {:.3}s", row.method, row.n, row.seconds);
            }
            println!("wrote {}", path.display());
            Ok(())
        }
        Cmd::SynthPool { rows, schema_seed, out } => {
            synth::synth_survey_pool(rows, schema_seed, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Cmd::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("ok: {} ({} methods, hash {})", cfg.kind.name(), cfg.methods.len(), cfg.hash());
            Ok(())
        }
    }
}
