use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wsmil::checkpoint::Checkpoint;
use wsmil::config::{RunConfig, SimulateConfig};
use wsmil::features::{GroundTruth, SlideFeatures};
use wsmil::heatmap::{write_scores_csv, Graymap};
use wsmil::{pipeline, Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "wsmil",
    version,
    about = "Weakly supervised MIL training from slide-level labels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Shared {
    /// JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort (manifest + feature CSVs)
    Simulate {
        #[command(flatten)]
        shared: Shared,
    },
    /// Train one framework configuration
    Train {
        #[command(flatten)]
        shared: Shared,
    },
    /// Evaluate a checkpoint on the annotated test split
    Eval {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and evaluate every configuration of the feasible grid
    Benchmark {
        #[command(flatten)]
        shared: Shared,
        /// Grid increment for alpha and beta
        #[arg(long, default_value_t = 0.2)]
        step: f64,
    },
    /// Render an unfiltered tumor map for one slide
    Heatmap {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Slide feature CSV
        #[arg(long)]
        slide: PathBuf,
    },
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

fn run_config(shared: &Shared) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(required(&shared.config, "config")?)?;
    if let Some(seed) = shared.seed {
        cfg.train.seed = seed;
    }
    if !cfg.manifest.exists() {
        return Err(Error::io(
            &cfg.manifest,
            std::io::Error::new(std::io::ErrorKind::NotFound, "manifest not found"),
        ));
    }
    Ok(cfg)
}

fn out_dir(shared: &Shared, cfg: Option<&RunConfig>) -> Result<PathBuf> {
    let dir = shared
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.out_dir.clone()))
        .ok_or_else(|| Error::Config("--out is required".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { shared } => {
            let mut cfg = SimulateConfig::load(required(&shared.config, "config")?)?;
            if let Some(seed) = shared.seed {
                cfg.simulator.seed = seed;
            }
            let out = out_dir(&shared, None)?;
            let m = pipeline::simulate(&cfg, &out)?;
            println!("wrote {} slides to {}", m.records.len(), out.display());
        }
        Command::Train { shared } => {
            let cfg = run_config(&shared)?;
            let out = out_dir(&shared, Some(&cfg))?;
            let (ck, log) = pipeline::train(&cfg)?;
            ck.save(&out.join("checkpoint.json"))?;
            pipeline::write_json(&log, &out.join("train_log.json"))?;
            println!("wrote {}", out.join("checkpoint.json").display());
        }
        Command::Eval { shared, checkpoint } => {
            let cfg = run_config(&shared)?;
            let out = out_dir(&shared, Some(&cfg))?;
            let ck = Checkpoint::load(&checkpoint)?;
            let cohort = pipeline::load_cohort(&cfg)?;
            let report = pipeline::evaluate_model(&ck.model, &cohort)?;
            pipeline::write_json(&report, &out.join("eval_report.json"))?;
            println!(
                "auc {:.4} precision {:.4} recall {:.4}",
                report.auc, report.precision, report.recall
            );
        }
        Command::Benchmark { shared, step } => {
            let cfg = run_config(&shared)?;
            let out = out_dir(&shared, Some(&cfg))?;
            let rows = pipeline::benchmark(&cfg, step)?;
            pipeline::write_benchmark_csv(&rows, &out.join("benchmark.csv"))?;
            println!(
                "wrote {} configurations to {}",
                rows.len(),
                out.join("benchmark.csv").display()
            );
        }
        Command::Heatmap {
            shared,
            checkpoint,
            slide,
        } => {
            let out = out_dir(&shared, None)?;
            let ck = Checkpoint::load(&checkpoint)?;
            let features = SlideFeatures::read(&slide, GroundTruth::Ignore)?;
            let scores = pipeline::predict_slide(&ck.model, &features)?;
            let map = Graymap::from_scores(&scores)?;
            let stem = slide
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("slide");
            map.write_pgm(&out.join(format!("{stem}.pgm")))?;
            write_scores_csv(&scores, &out.join(format!("{stem}_scores.csv")))?;
            println!(
                "wrote {}x{} map for {} patches",
                map.width,
                map.height,
                scores.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
