use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use poroscale::balancing::Strategy;
use poroscale::config::ExperimentConfig;
use poroscale::dataset::write_dataset;
use poroscale::experiment::{region_fields, run_noise_study, run_reconstruction};
use poroscale::reports::{describe_trace, emit_noise_study, emit_reports, xi_table};
use poroscale::trainer::StopReason;

/// Multiscale poroelastic property reconstruction.
#[derive(Parser)]
#[command(name = "poroscale", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the configured regions and write them as datasets.
    Simulate(Common),
    /// Train the property network and write trace, weights and summary.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Loss balancing strategy (overrides the config).
        #[arg(long, value_enum)]
        balance: Option<Strategy>,
    },
    /// Reconstruct from ensemble-averaged noisy data for each ensemble size.
    NoiseStudy {
        #[command(flatten)]
        common: Common,
        /// Comma-separated ensemble sizes (overrides the config).
        #[arg(long, value_delimiter = ',')]
        ensembles: Option<Vec<usize>>,
        /// Noise level relative to the field peak (overrides the config).
        #[arg(long)]
        level: Option<f64>,
        /// Also write every averaged field as a dataset.
        #[arg(long)]
        write_datasets: bool,
    },
    /// Summarize a finished run from its trace.csv.
    Report {
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            cfg.training.epochs = epochs;
        }
        if let Some(lr) = self.learning_rate {
            cfg.training.learning_rate = lr;
        }
        Ok(cfg)
    }
}

fn config_echo(cfg: &ExperimentConfig) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(cfg)?)
}

fn dataset_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.csv"))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(common) => {
            let cfg = common.load()?;
            cfg.validate()?;
            for r in region_fields(&cfg)? {
                let path = dataset_path(&cfg.output_dir, &r.name);
                write_dataset(&path, &r.field, &r.meta)?;
                println!("wrote {}", path.display());
            }
        }
        Command::Reconstruct { common, balance } => {
            let mut cfg = common.load()?;
            if let Some(b) = balance {
                cfg.balance.strategy = b;
            }
            let trace = run_reconstruction(&cfg)?;
            let files = emit_reports(&trace, config_echo(&cfg)?, &cfg.output_dir)?;
            println!("strategy {} seed {} epochs {}", trace.strategy.name(), trace.seed, trace.records.len());
            print!("{}", xi_table(&trace.region_names, &trace.xi));
            for f in files {
                println!("wrote {}", f.display());
            }
            if let StopReason::Diverged { epoch, loss } = trace.stop {
                anyhow::bail!("training diverged at epoch {epoch} (total loss {loss:e}); diagnostic trace written");
            }
        }
        Command::NoiseStudy { common, ensembles, level, write_datasets } => {
            let mut cfg = common.load()?;
            if let Some(e) = ensembles {
                cfg.noise.ensembles = e;
            }
            if let Some(l) = level {
                cfg.noise.level = l;
            }
            let out = cfg.output_dir.clone();
            let study = run_noise_study(&cfg, |ensemble, index, region, field| {
                if write_datasets {
                    let mut meta = region.meta.clone();
                    meta.noise = Some(poroscale::experiment::region_noise(&cfg, index, ensemble));
                    let path = dataset_path(&out, &format!("{}_nt{ensemble}", region.name));
                    write_dataset(&path, field, &meta)?;
                }
                Ok(())
            })?;
            let names: Vec<String> = cfg.regions.iter().map(|r| r.name.clone()).collect();
            for row in &study.rows {
                println!("N_T = {} ({} epochs, stop {:?})", row.ensemble, row.epochs_run, row.stop);
                print!("{}", xi_table(&names, &row.xi));
            }
            let path = emit_noise_study(&study, config_echo(&cfg)?, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Report { trace } => {
            print!("{}", describe_trace(&trace)?);
        }
    }
    Ok(())
}
