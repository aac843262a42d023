//! `hybeam`: command-line front end for the hybrid beamforming simulator.
//!
//! Every subcommand reads a TOML experiment file and writes CSV. On failure
//! the process prints one machine-readable line
//! `error category=<config|domain|numerical|io> message=<text>` to stderr and
//! exits with the category's code.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use hybeam::digital::ClarabelSolver;
use hybeam::framework::parse_algorithms;
use hybeam::harness::{
    load_experiment, run_ber, run_convergence, run_experiment, run_sweep_to, trial_channel,
    write_atomic, Experiment, SweepSpec,
};
use hybeam::{Error, ErrorCategory};
use log::info;

#[derive(Parser, Debug)]
#[command(name = "hybeam", version, about = "Hybrid analog/digital beamforming simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw the channel of one trial and store it (.bin or .csv by extension).
    GenChannel {
        #[command(flatten)]
        common: Common,
        /// Trial whose channel is written.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Monte-Carlo run of the configured scenario into an output directory.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Parameter sweep described by the [sweep] table.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// 16-QAM bit-error-rate experiment described by the [ber] table.
    Ber {
        #[command(flatten)]
        common: Common,
    },
    /// Outer-iteration traces from CMDD and random initializations.
    Converge {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of the experiment file.
    #[arg(long, env = "HYBEAM_SEED")]
    seed: Option<u64>,
    /// Comma-separated algorithms: fd, laohb, aohb, cmdd.
    #[arg(long)]
    algos: Option<String>,
    /// Output file, or directory for `run`.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn experiment(&self) -> Result<Experiment, Error> {
        let mut exp = load_experiment(&self.config)?;
        if let Some(seed) = self.seed {
            exp.system.seed = seed;
        }
        if let Some(list) = &self.algos {
            exp.algorithms = parse_algorithms(list)?;
        }
        Ok(exp)
    }

    fn init_workers(&self) -> Result<(), Error> {
        if let Some(n) = self.workers {
            if n == 0 {
                return Err(Error::Config("--workers must be at least 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        }
        Ok(())
    }
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Config => 2,
        ErrorCategory::Domain => 3,
        ErrorCategory::Numerical => 4,
        ErrorCategory::Io => 5,
    }
}

fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".config.toml");
    out.with_file_name(name)
}

fn write_with_echo(out: &Path, csv: &str, exp: &Experiment) -> Result<(), Error> {
    write_atomic(out, csv.as_bytes())?;
    write_atomic(&sidecar(out), exp.echo().as_bytes())
}

fn execute(command: Command) -> Result<(), Error> {
    let solver = ClarabelSolver::default();
    match command {
        Command::GenChannel { common, trial } => {
            common.init_workers()?;
            let exp = common.experiment()?;
            let h = trial_channel(&exp.system, trial)?;
            match common.out.extension().and_then(|e| e.to_str()) {
                Some("csv") => h.write_csv(&common.out)?,
                _ => h.write_binary(&common.out)?,
            }
            info!("wrote channel of trial {trial} to {}", common.out.display());
        }
        Command::Run { common } => {
            common.init_workers()?;
            let exp = common.experiment()?;
            run_experiment(&exp, &solver, &common.out)?;
            info!("wrote results to {}", common.out.display());
        }
        Command::Sweep { common } => {
            common.init_workers()?;
            let exp = common.experiment()?;
            let spec = SweepSpec::from_experiment(&exp)?;
            let outcome = run_sweep_to(&spec, &solver, &common.out)?;
            write_atomic(&sidecar(&common.out), exp.echo().as_bytes())?;
            for (value, report) in &outcome.points {
                for &alg in &spec.algorithms {
                    if let Some(mean) = report.mean_weighted_sum_rate(alg) {
                        info!("{:?} = {value}: {alg} mean weighted sum rate {mean:.4}", spec.parameter);
                    }
                }
            }
        }
        Command::Ber { common } => {
            common.init_workers()?;
            let exp = common.experiment()?;
            let spec = exp
                .ber
                .clone()
                .ok_or_else(|| Error::Config("the experiment has no [ber] table".into()))?;
            let table = run_ber(&exp.system, &spec, &exp.algorithms, exp.trials, &exp.scenario, &solver)?;
            write_with_echo(&common.out, &table.csv, &exp)?;
            for p in &table.points {
                for (alg, counts) in &p.counts {
                    info!("{} dB: {alg} BER {:.3e}", p.theta_db, counts.aggregate());
                }
            }
        }
        Command::Converge { common } => {
            common.init_workers()?;
            let exp = common.experiment()?;
            let out = run_convergence(&exp.system, &exp.algorithms, exp.trials, &exp.scenario, &solver)?;
            write_with_echo(&common.out, &out.csv, &exp)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let start = Instant::now();
    match execute(cli.command) {
        Ok(()) => {
            info!("done in {:.2?}", start.elapsed());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let category = e.category();
            let message = e.to_string().replace('\n', " ");
            eprintln!("error category={} message={message}", category.as_str());
            ExitCode::from(exit_code(category))
        }
    }
}
