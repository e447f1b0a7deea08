use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use feddist::runner::{self, RunManifest};
use feddist::{fabric, Algorithm, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "feddist",
    version,
    about = "Federated learning experiments: FedAvg, FedProx, FedDist"
)]
struct Cli {
    /// Worker threads for client updates (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its reports and final model.
    Run {
        #[arg(
            long,
            conflicts_with = "manifest",
            required_unless_present = "manifest"
        )]
        config: Option<PathBuf>,
        /// Rerun the experiment recorded in this run directory.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run FedAvg with the final shape of this finished run.
        #[arg(long)]
        final_shape_from: Option<PathBuf>,
    },
    /// Print one summary row per finished run.
    Compare {
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
    },
    /// Parse and check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the shape dump of a model container.
    Shape { model: PathBuf },
}

fn load(config: Option<PathBuf>, manifest: Option<PathBuf>) -> Result<ExperimentConfig> {
    match (config, manifest) {
        (Some(path), _) => {
            runner::parse_config(&path).with_context(|| format!("loading {}", path.display()))
        }
        (None, Some(dir)) => Ok(RunManifest::read(&dir)
            .with_context(|| format!("reading manifest in {}", dir.display()))?
            .config),
        (None, None) => bail!("either --config or --manifest is required"),
    }
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring threads")?;
    }
    match cli.command {
        Command::Run {
            config,
            manifest,
            out,
            seed,
            final_shape_from,
        } => {
            let mut cfg = load(config, manifest)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(dir) = final_shape_from {
                cfg.final_shape = Some(runner::read_final_shape(&dir)?);
                cfg.algorithm = Algorithm::FedAvg;
            }
            let summary = runner::run(&cfg, &out)?;
            if let Some(last) = summary.reports.last() {
                let f1 = |v: Option<f64>| v.map_or("-".to_string(), |f| format!("{:.4}", f));
                println!(
                    "{} round {}: global {} pers {} gen {} shape {:?}",
                    cfg.algorithm,
                    last.round,
                    f1(last.global.map(|g| g.macro_f1)),
                    f1(last.personalization.as_ref().map(|p| p.mean)),
                    f1(last.generalization.as_ref().map(|g| g.mean)),
                    summary.final_shape
                );
            }
            log::info!("outputs in {}", out.display());
        }
        Command::Compare { runs } => {
            print!("{}", runner::render_table(&runner::compare(&runs)?));
        }
        Command::Validate { config } => {
            let cfg = runner::parse_config(&config)?;
            println!(
                "ok: {} over {} clients, {} rounds, shape {:?}",
                cfg.algorithm,
                cfg.clients(),
                cfg.rounds,
                cfg.architecture()?.shape_signature()
            );
        }
        Command::Shape { model } => {
            let weights = fabric::read_file::<f64>(&model)?;
            print!("{}", fabric::shape_dump(&weights));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
