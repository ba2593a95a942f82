use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spinboson::run::{self, SweepAxis};
use spinboson::RunConfig;

/// Finite-temperature spin-boson dynamics with multi-Davydov trial states.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory (overrides `output.directory`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the ensemble (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a thermal ensemble and write results.tsv and manifest.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Master seed (overrides `sampling.master_seed`).
        #[arg(long, value_parser = seed_parser())]
        seed: Option<u64>,
        /// Add an exact reference column.
        #[arg(long)]
        oracle: bool,
    },
    /// Repeat a run from its manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Convergence sweep over one axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// One of M, n_s, n_b, dt.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Convergence threshold on max_t |delta P_z| between the last two values.
        #[arg(long, default_value_t = 1e-2)]
        threshold: f64,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = seed_parser())]
        seed: Option<u64>,
    },
    /// Print the configuration with all defaults filled in.
    Normalize {
        #[arg(long)]
        config: PathBuf,
    },
}

fn seed_parser() -> clap::builder::RangedU64ValueParser<u64> {
    clap::value_parser!(u64).range(..=spinboson::config::MAX_SEED)
}

fn load(path: &Path, common: Option<&Common>, seed: Option<u64>) -> spinboson::Result<RunConfig> {
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(dir) = common.and_then(|c| c.out.clone()) {
        cfg.output.directory = dir;
    }
    if let Some(seed) = seed {
        cfg.sampling.master_seed = seed;
    }
    Ok(cfg)
}

fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, String>
where
    T: Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| e.to_string())?;
    Ok(pool.install(f))
}

fn main_inner(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run {
            config,
            common,
            seed,
            oracle,
        } => {
            let mut cfg = load(&config, Some(&common), seed).map_err(|e| e.to_string())?;
            cfg.output.oracle |= oracle;
            let out = with_threads(common.threads, || run::run(&cfg))?.map_err(|e| e.to_string())?;
            eprintln!(
                "wrote {} ({} of {} trajectories)",
                cfg.output.directory.display(),
                out.ensemble.n_effective,
                out.manifest.n_s
            );
        }
        Command::Replay { manifest, common } => {
            let out = with_threads(common.threads, || run::replay(&manifest, common.out.clone()))?
                .map_err(|e| e.to_string())?;
            eprintln!("replayed into {}", out.manifest.config.output.directory.display());
        }
        Command::Sweep {
            config,
            axis,
            values,
            threshold,
            common,
            seed,
        } => {
            let cfg = load(&config, Some(&common), seed).map_err(|e| e.to_string())?;
            let report =
                with_threads(common.threads, || run::sweep(&cfg, axis, &values, threshold))?.map_err(|e| e.to_string())?;
            let dir = &cfg.output.directory;
            std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
            std::fs::write(dir.join("sweep.tsv"), run::sweep_table(&report)).map_err(|e| e.to_string())?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
            std::fs::write(dir.join("sweep.json"), json + "\n").map_err(|e| e.to_string())?;
            println!("axis\tfrom\tto\tmax_dev\tmax_dev_over_stderr");
            for (k, d) in report.deviations.iter().enumerate() {
                println!(
                    "{}\t{}\t{}\t{:.3e}\t{:.3}",
                    axis,
                    report.points[k].value,
                    report.points[k + 1].value,
                    d,
                    report.deviation_in_stderr[k]
                );
            }
            println!("converged\t{}", report.converged);
        }
        Command::Normalize { config } => {
            let cfg = load(&config, None, None).map_err(|e| e.to_string())?;
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
