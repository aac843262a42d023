//! Parameter sweeps written as long-format CSV.
//!
//! Columns: `point,trial,algorithm,metric,user,subcarrier,value`. For every
//! point, trial and algorithm there is one `rate` row per user and
//! subcarrier and one `weighted_sum_rate` summary row with
//! `user = subcarrier = -1`. A failed trial yields a single `failed` row.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::digital::ConicSolver;
use crate::framework::{run_scenario, Algorithm, ScenarioOptions, ScenarioReport};
use crate::linalg::db_to_linear;
use crate::{Error, Result};

use super::config_file::{Experiment, SweepSection};
use super::write_atomic;

pub const SWEEP_CSV_HEADER: &str = "point,trial,algorithm,metric,user,subcarrier,value";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    ThetaDb,
    Users,
    VarsigmaHSq,
    Weights,
    Nrf,
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theta_db" => Ok(SweepParameter::ThetaDb),
            "users" => Ok(SweepParameter::Users),
            "varsigma_h_sq" => Ok(SweepParameter::VarsigmaHSq),
            "weights" => Ok(SweepParameter::Weights),
            "nrf" => Ok(SweepParameter::Nrf),
            other => Err(Error::Config(format!(
                "unknown sweep parameter '{other}' (expected theta_db, users, varsigma_h_sq, weights or nrf)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl fmt::Display for SweepValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepValue::Scalar(v) => write!(f, "{v}"),
            SweepValue::Vector(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "{}", parts.join(";"))
            }
        }
    }
}

/// A sweep ready to run.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: SystemConfig,
    pub scenario: ScenarioOptions,
    pub parameter: SweepParameter,
    pub values: Vec<SweepValue>,
    pub trials: usize,
    pub algorithms: Vec<Algorithm>,
}

impl SweepSpec {
    pub fn from_experiment(exp: &Experiment) -> Result<Self> {
        let section = exp
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Config("the experiment has no [sweep] section".into()))?;
        Ok(SweepSpec {
            base: exp.system.clone(),
            scenario: exp.scenario,
            parameter: section.parameter,
            values: section.values.clone(),
            trials: exp.trials,
            algorithms: exp.algorithms.clone(),
        })
    }

    /// Scenario of one sweep point.
    pub fn point(&self, value: &SweepValue) -> Result<(SystemConfig, ScenarioOptions)> {
        let mut cfg = self.base.clone();
        let mut scenario = self.scenario;
        let integer = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{v} is not a positive integer")))
            }
        };
        match (self.parameter, value) {
            (SweepParameter::ThetaDb, SweepValue::Scalar(v)) => cfg.theta = db_to_linear(*v),
            (SweepParameter::Users, SweepValue::Scalar(v)) => {
                let u = integer(*v)?;
                cfg.users = u;
                cfg.weights = vec![1.0 / u as f64; u];
                let c = cfg.clusters.first().copied().unwrap_or(crate::config::DEFAULT_CLUSTERS);
                cfg.clusters = vec![c; u];
                cfg.stream_allocation = crate::config::StreamAllocation::Auto;
            }
            (SweepParameter::Nrf, SweepValue::Scalar(v)) => {
                cfg.rf_chains = integer(*v)?;
                cfg.stream_allocation = crate::config::StreamAllocation::Auto;
            }
            (SweepParameter::VarsigmaHSq, SweepValue::Scalar(v)) => {
                if !(0.0..=1.0).contains(v) {
                    return Err(Error::Config(format!("varsigma_h_sq {v} outside [0, 1]")));
                }
                scenario.csi.varsigma_h = v.sqrt();
            }
            (SweepParameter::Weights, SweepValue::Vector(z)) => cfg.weights = z.clone(),
            (p, v) => {
                return Err(Error::Config(format!("value {v} does not fit sweep parameter {p:?}")))
            }
        }
        cfg.validate()?;
        Ok((cfg, scenario))
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms selected".into()));
        }
        for v in &self.values {
            self.point(v)?;
        }
        Ok(())
    }
}

pub(crate) fn check_values(exp: &Experiment, section: &SweepSection) -> Result<()> {
    let spec = SweepSpec {
        base: exp.system.clone(),
        scenario: exp.scenario,
        parameter: section.parameter,
        values: section.values.clone(),
        trials: exp.trials,
        algorithms: exp.algorithms.clone(),
    };
    spec.validate()
}

/// Appends the rows of one sweep point.
pub fn write_point_rows(point: &str, report: &ScenarioReport, out: &mut String) {
    for t in &report.trials {
        for (alg, record) in &t.results {
            match record {
                Ok(r) => {
                    let m = &r.metrics;
                    for u in 0..m.users() {
                        for k in 0..m.subcarriers() {
                            let _ = writeln!(out, "{point},{},{alg},rate,{u},{k},{}", t.trial, m.rate[u][k]);
                        }
                    }
                    let _ = writeln!(
                        out,
                        "{point},{},{alg},weighted_sum_rate,-1,-1,{}",
                        t.trial, m.weighted_sum_rate
                    );
                }
                Err(_) => {
                    let _ = writeln!(out, "{point},{},{alg},failed,-1,-1,1", t.trial);
                }
            }
        }
    }
}

/// Result of a sweep: one scenario report per point.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub points: Vec<(SweepValue, ScenarioReport)>,
    pub csv: String,
}

/// Runs every point (all sharing the channel draws of `base.seed`) and
/// renders the CSV. Validation happens before any computation.
pub fn run_sweep(spec: &SweepSpec, solver: &dyn ConicSolver) -> Result<SweepOutcome> {
    spec.validate()?;
    let mut csv = String::new();
    csv.push_str(SWEEP_CSV_HEADER);
    csv.push('\n');
    let mut points = Vec::with_capacity(spec.values.len());
    for value in &spec.values {
        let (cfg, scenario) = spec.point(value)?;
        let report = run_scenario(&cfg, &spec.algorithms, spec.trials, &scenario, solver)?;
        write_point_rows(&value.to_string(), &report, &mut csv);
        points.push((value.clone(), report));
    }
    Ok(SweepOutcome { points, csv })
}

/// [`run_sweep`] followed by an atomic write of the CSV to `path`.
pub fn run_sweep_to(spec: &SweepSpec, solver: &dyn ConicSolver, path: &Path) -> Result<SweepOutcome> {
    let outcome = run_sweep(spec, solver)?;
    write_atomic(path, outcome.csv.as_bytes())?;
    Ok(outcome)
}
