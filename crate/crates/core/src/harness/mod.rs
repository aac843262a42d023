//! Experiment plumbing: configuration files, Monte-Carlo runs, sweeps, BER
//! simulation and convergence traces, all rendered as CSV.
//!
//! Every output byte is a function of the experiment file and its seed:
//! trials draw from per-trial random streams and rows are assembled in a
//! fixed order after the parallel work finishes.

pub mod ber;
pub mod config_file;
pub mod sweep;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::ChannelSet;
use crate::config::SystemConfig;
use crate::digital::ConicSolver;
use crate::framework::{run_algorithm, run_scenario, Algorithm, InitStrategy, RunSummary, ScenarioOptions};
use crate::metrics::METRICS_CSV_HEADER;
use crate::rng::{stream, Stream};
use crate::{Error, Result};

pub use ber::{run_ber, simulate_ber, BerCounts, BerSpec, BerTable};
pub use config_file::{load_experiment, parse_experiment, Experiment};
pub use sweep::{run_sweep, run_sweep_to, SweepOutcome, SweepParameter, SweepSpec, SweepValue, SWEEP_CSV_HEADER};

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Channel realization of trial `trial`, as used by every command.
pub fn trial_channel(cfg: &SystemConfig, trial: usize) -> Result<ChannelSet> {
    cfg.validate()?;
    ChannelSet::generate(cfg, &mut stream(cfg.seed, trial as u64, Stream::Channel))
}

#[derive(Debug, Serialize)]
struct AlgorithmResult {
    algorithm: Algorithm,
    mean_weighted_sum_rate: Option<f64>,
    mean_user_rates: Option<Vec<f64>>,
    failed_trials: Vec<usize>,
    runs: Vec<RunSummary>,
}

#[derive(Debug, Serialize)]
struct ResultFile<'a> {
    experiment: &'a Experiment,
    results: Vec<AlgorithmResult>,
}

/// Runs the experiment's scenario and writes, into `out_dir`,
/// `<algorithm>.metrics.csv` per algorithm, `result.json` and the resolved
/// configuration `config.toml`.
pub fn run_experiment(exp: &Experiment, solver: &dyn ConicSolver, out_dir: &Path) -> Result<()> {
    let report = run_scenario(&exp.system, &exp.algorithms, exp.trials, &exp.scenario, solver)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut results = Vec::new();
    for &alg in &exp.algorithms {
        let mut csv = String::new();
        csv.push_str(METRICS_CSV_HEADER);
        csv.push('\n');
        let mut buf = Vec::new();
        let mut runs = Vec::new();
        let mut failed = Vec::new();
        for t in &report.trials {
            match t.get(alg) {
                Some(r) => {
                    r.metrics
                        .write_csv_rows(t.trial, &mut buf)
                        .map_err(|e| Error::io(out_dir, e))?;
                    runs.push(r.run.summary(r.metrics.clone()));
                }
                None => failed.push(t.trial),
            }
        }
        csv.push_str(&String::from_utf8(buf).expect("CSV rows are UTF-8"));
        write_atomic(&out_dir.join(format!("{alg}.metrics.csv")), csv.as_bytes())?;
        results.push(AlgorithmResult {
            algorithm: alg,
            mean_weighted_sum_rate: report.mean_weighted_sum_rate(alg),
            mean_user_rates: report.mean_user_rates(alg),
            failed_trials: failed,
            runs,
        });
    }
    let json = serde_json::to_string_pretty(&ResultFile {
        experiment: exp,
        results,
    })
    .map_err(|e| Error::Config(format!("cannot serialize results: {e}")))?;
    write_atomic(&out_dir.join("result.json"), json.as_bytes())?;
    write_atomic(&out_dir.join("config.toml"), exp.echo().as_bytes())
}

pub const CONVERGENCE_CSV_HEADER: &str = "trial,init,algorithm,iteration,weighted_sum_rate";

/// Outer-iteration traces of the alternating algorithms from both the CMDD
/// and a random initialization.
#[derive(Debug, Clone)]
pub struct ConvergenceRecord {
    pub trial: usize,
    pub init: InitStrategy,
    pub algorithm: Algorithm,
    pub trace: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergenceOutcome {
    pub records: Vec<ConvergenceRecord>,
    pub csv: String,
}

impl ConvergenceOutcome {
    /// Median outer-iteration count of `algorithm` started from `init`.
    pub fn median_iterations(&self, algorithm: Algorithm, init: InitStrategy) -> Option<f64> {
        let mut v: Vec<usize> = self
            .records
            .iter()
            .filter(|r| r.algorithm == algorithm && r.init == init)
            .map(|r| r.iterations)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_unstable();
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2] as f64
        } else {
            (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
        })
    }
}

pub fn run_convergence(
    cfg: &SystemConfig,
    algorithms: &[Algorithm],
    trials: usize,
    scenario: &ScenarioOptions,
    solver: &dyn ConicSolver,
) -> Result<ConvergenceOutcome> {
    cfg.validate()?;
    let algos: Vec<Algorithm> = algorithms
        .iter()
        .copied()
        .filter(|a| matches!(a, Algorithm::Aohb | Algorithm::Laohb))
        .collect();
    if algos.is_empty() || trials == 0 {
        return Err(Error::Config(
            "convergence traces need aohb or laohb and at least one trial".into(),
        ));
    }
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<ConvergenceRecord>> {
            let h = trial_channel(cfg, t)?;
            let mut out = Vec::new();
            for init in [InitStrategy::Cmdd, InitStrategy::Random] {
                let mut opts = scenario.framework;
                opts.init = init;
                for &alg in &algos {
                    let run = run_algorithm(alg, &h, cfg, &opts, solver, t as u64)?;
                    out.push(ConvergenceRecord {
                        trial: t,
                        init,
                        algorithm: alg,
                        iterations: run.iterations,
                        trace: run.trace,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<ConvergenceRecord> = per_trial.into_iter().flatten().collect();
    let mut csv = String::new();
    csv.push_str(CONVERGENCE_CSV_HEADER);
    csv.push('\n');
    for r in &records {
        let init = match r.init {
            InitStrategy::Cmdd => "cmdd",
            InitStrategy::Random => "random",
        };
        for (i, v) in r.trace.iter().enumerate() {
            let _ = writeln!(csv, "{},{init},{},{i},{v}", r.trial, r.algorithm);
        }
    }
    Ok(ConvergenceOutcome { records, csv })
}
