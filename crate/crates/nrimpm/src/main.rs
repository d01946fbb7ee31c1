use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use nri_core::config::TrainConfig;
use nri_core::sim::{Family, SplitCounts, SystemSpec};
use nrimpm::config::RunConfig;
use nrimpm::RunError;

#[derive(Parser)]
#[command(name = "nrimpm", version, about = "Relational inference with relation interactions and spatio-temporal message passing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate train/val/test splits into a dataset directory.
    Simulate {
        /// springs, charged or kuramoto.
        #[arg(long, value_parser = parse_family)]
        family: Family,
        #[arg(long, default_value_t = 5)]
        n: usize,
        /// Sample counts as train,val,test.
        #[arg(long, default_value = "2000,500,500", value_parser = parse_counts)]
        samples: SplitCounts,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Observed time steps per trajectory.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model described by a run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from `<out>/last.nrim` when it exists.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Dataset directory; defaults to the one in the checkpoint's configuration.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate evaluated runs into tables, curves and plots.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a default run configuration.
    Config {
        #[arg(long)]
        data: PathBuf,
    },
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|()| format!("unknown family {s:?}; expected springs, charged or kuramoto"))
}

fn parse_counts(s: &str) -> Result<SplitCounts, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [train, val, test] => Ok(SplitCounts { train, val, test }),
        _ => Err("expected three comma-separated counts".into()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            family,
            n,
            samples,
            seed,
            steps,
            out,
        } => {
            let mut spec = SystemSpec::new(family, n, seed);
            if let Some(t) = steps {
                spec.t = t;
            }
            let threads = nrimpm::worker_threads();
            nrimpm::simulate::simulate_to_dir(&spec, samples, &out, threads)
                .with_context(|| format!("simulating into {}", out.display()))?;
            eprintln!(
                "wrote {} / {} / {} {} samples to {}",
                samples.train,
                samples.val,
                samples.test,
                family.name(),
                out.display()
            );
        }
        Command::Train { config, out, resume } => {
            let cfg = RunConfig::load(&config)?;
            let summary = nrimpm::run::train_run(&cfg, &out, resume, |epoch, tr, va| {
                let acc = |s: &nri_core::train::EpochStats| s.acc.map_or("-".into(), |a| format!("{a:.4}"));
                eprintln!(
                    "epoch {epoch:4}  train {:.4e} acc {}  val {:.4e} acc {}",
                    tr.loss.total,
                    acc(tr),
                    va.loss.total,
                    acc(va)
                );
            })?;
            eprintln!("done: {} epochs, best after epoch {:?}", summary.epochs, summary.best_epoch);
        }
        Command::Eval { ckpt, data, out } => {
            let report = nrimpm::evaluate::eval_run(&ckpt, data.as_deref(), &out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Report { runs, out } => {
            let loaded = nrimpm::report::write_report(&runs, &out)?;
            eprintln!("aggregated {} runs into {}", loaded.len(), out.display());
        }
        Command::Config { data } => {
            let mut cfg = RunConfig::new(data);
            if let Ok(sidecar) = nrimpm::simulate::load_sidecar(&cfg.data) {
                cfg.train.lambda = TrainConfig::default_lambda(sidecar.spec.family, sidecar.spec.n);
            }
            println!("{}", cfg.to_json());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    nrimpm::tune_allocator();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.chain().find_map(|c| c.downcast_ref::<RunError>()).map_or(1, RunError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
