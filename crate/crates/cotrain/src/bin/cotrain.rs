//! Command-line harness: dataset generation, training runs, checkpoint
//! evaluation, and collapse diagnosis.
//!
//! Exit codes: 0 success, 1 runtime/IO failure, 2 usage or configuration
//! error, 3 numerical divergence. Verbosity comes from `COTRAIN_LOG`
//! (`quiet`, `info`, `debug`; default `info`).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cotrain::config::{
    load_views, run_diagnose, run_train, DataSource, ExperimentConfig, GeneratorSpec,
};
use cotrain::data::save_csv;
use cotrain::error::Error;
use cotrain::metrics::MetricsRecord;
use cotrain::trainer::evaluate;

#[derive(Parser)]
#[command(
    name = "cotrain",
    about = "Semi-supervised co-training of MLP views",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset CSV.
    GenData {
        /// Which generator to use.
        #[arg(value_enum)]
        generator: Generator,
        /// Number of points.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Gaussian jitter (two-moons only).
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        /// Number of classes (gaussian-blobs only).
        #[arg(long, default_value_t = 3)]
        classes: usize,
        /// Cluster center spread (gaussian-blobs only).
        #[arg(long, default_value_t = 4.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment from a JSON config.
    Train { config: PathBuf },
    /// Evaluate checkpoints against a labeled test CSV.
    Eval {
        checkpoint_dir: PathBuf,
        test_csv: PathBuf,
        /// Print a machine-readable JSON object instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Run the agreement-only ablation and the full objective
    /// back-to-back with shared seeds and compare collapse.
    Diagnose { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    TwoMoons,
    GaussianBlobs,
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Verbosity {
    Quiet = 0,
    Info = 1,
    Debug = 2,
}

fn verbosity() -> Verbosity {
    match std::env::var("COTRAIN_LOG").as_deref() {
        Ok("quiet") => Verbosity::Quiet,
        Ok("debug") => Verbosity::Debug,
        Ok("info") | Err(_) => Verbosity::Info,
        Ok(other) => {
            eprintln!("warning: unknown COTRAIN_LOG value {other:?}, using info");
            Verbosity::Info
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Divergence { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let verbosity = verbosity();
    match cli.command {
        Command::GenData {
            generator,
            n,
            noise,
            classes,
            separation,
            seed,
            out,
        } => {
            let source = match generator {
                Generator::TwoMoons => GeneratorSpec::TwoMoons { n, noise, seed },
                Generator::GaussianBlobs => GeneratorSpec::GaussianBlobs {
                    n,
                    classes,
                    separation,
                    seed,
                },
            };
            let dataset = DataSource::Generator(source).materialize()?;
            save_csv(&dataset, &out)?;
            let mut histogram = vec![0usize; dataset.num_classes];
            for label in dataset.labels.iter().flatten() {
                histogram[*label] += 1;
            }
            if verbosity >= Verbosity::Info {
                println!("wrote {} rows to {}", dataset.len(), out.display());
                for (c, count) in histogram.iter().enumerate() {
                    println!("class {c}: {count}");
                }
            }
            Ok(())
        }
        Command::Train { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let total = cfg.hyperparams.total_epochs;
            let stride = (total / 10).max(1);
            let mut log = |rec: &MetricsRecord| {
                let every = verbosity >= Verbosity::Debug;
                let milestone = rec.epoch == 0 || rec.epoch == total || rec.epoch.is_multiple_of(stride);
                if verbosity >= Verbosity::Info && (every || milestone) {
                    println!(
                        "epoch {:>4}  err {:.4}  l_sup {:.4}  l_cot {:.4}  l_dif {:.4}  collapse {:.4}",
                        rec.epoch,
                        rec.mean_err,
                        rec.l_sup,
                        rec.l_cot,
                        rec.l_dif,
                        rec.collapse()
                    );
                }
            };
            let summary = run_train(&cfg, &mut log)?;
            if verbosity >= Verbosity::Info {
                let last = summary.rows.last().expect("epoch 0 always recorded");
                println!("final mean error {:.4}", last.mean_err);
                println!("metrics: {}", summary.metrics_path.display());
                println!("checkpoints: {}", summary.checkpoint_dir.display());
            }
            Ok(())
        }
        Command::Eval {
            checkpoint_dir,
            test_csv,
            json,
        } => {
            let views = load_views(&checkpoint_dir)?;
            let test = cotrain::data::load_csv(&test_csv)?;
            if test.num_classes > views[0].num_classes() {
                return Err(Error::Config(format!(
                    "test set has {} classes but the checkpoints classify {}",
                    test.num_classes,
                    views[0].num_classes()
                )));
            }
            let (per_view, mean) = evaluate(&views, &test)?;
            if json {
                println!(
                    "{}",
                    serde_json::json!({ "per_view": per_view, "mean": mean })
                );
            } else {
                for (i, err) in per_view.iter().enumerate() {
                    println!("view {i}: error {err:.6}");
                }
                println!("mean error {mean:.6}");
            }
            Ok(())
        }
        Command::Diagnose { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let mut log = |name: &str, rec: &MetricsRecord| {
                if verbosity >= Verbosity::Debug {
                    println!(
                        "[{name}] epoch {:>4}  err {:.4}  l_dif {:.4}  collapse {:.4}",
                        rec.epoch,
                        rec.mean_err,
                        rec.l_dif,
                        rec.collapse()
                    );
                }
            };
            let summary = run_diagnose(&cfg, &mut log)?;
            println!(
                "cot_only: final mean error {:.4}, collapse {:.4}, l_dif {:.4}",
                summary.cot_only.final_mean_err,
                summary.cot_only.final_collapse,
                summary.cot_only.final_l_dif
            );
            println!(
                "dct:      final mean error {:.4}, collapse {:.4}, l_dif {:.4}",
                summary.dct.final_mean_err, summary.dct.final_collapse, summary.dct.final_l_dif
            );
            let relation = if summary.cot_only.final_collapse > summary.dct.final_collapse {
                "agreement-only training collapsed harder than the full objective"
            } else {
                "no extra collapse without the view-difference loss in this run"
            };
            println!("{relation}");
            Ok(())
        }
    }
}
