//! TOML experiment files.
//!
//! A minimal file names only the dimensions:
//!
//! ```toml
//! M = 16
//! N_RF = 4
//! K = 16
//! U = 2
//! ```
//!
//! Optional scenario keys: `theta_db`, `weights` (final, must sum to one) or
//! `raw_weights` (any positive values, normalized), `delay_taps`, `clusters`
//! (one count or a list per user), `scatterers_per_cluster`,
//! `angular_spread_deg`, `element_spacing`, `seed`, `stream_allocation`
//! (`"auto"`, `"fixed:[3,1]"` or a list), `trials`, `algorithms`, `init`
//! (`"cmdd"` or `"random"`), `varsigma_h_sq`, `varsigma_g_sq`.
//!
//! Solver keys: `outer_omega`, `max_outer`, `cg_omega`, `cg_max_iters`,
//! `digital_omega`, `socp_max_iters`, `wmmse_max_iters`.
//!
//! Tables `[sweep]` (`parameter`, `values`) and `[ber]` (`theta_db`,
//! `symbols_per_trial`) configure the corresponding commands. Unknown keys
//! are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{validate_weights, StreamAllocation, SystemConfig};
use crate::framework::{parse_algorithms, Algorithm, CsiModel, InitStrategy, ScenarioOptions};
use crate::linalg::db_to_linear;
use crate::metrics::renormalize_weights;
use crate::{Error, Result};

use super::ber::BerSpec;
use super::sweep::{SweepParameter, SweepValue};

pub const DEFAULT_TRIALS: usize = 100;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CountSpec {
    One(usize),
    PerUser(Vec<usize>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum AllocationSpec {
    Text(String),
    Counts(Vec<usize>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: String,
    values: Vec<RawValue>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBer {
    theta_db: Vec<f64>,
    symbols_per_trial: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(rename = "M")]
    m: Option<usize>,
    #[serde(rename = "N_RF")]
    n_rf: Option<usize>,
    #[serde(rename = "K")]
    k: Option<usize>,
    #[serde(rename = "U")]
    u: Option<usize>,
    theta_db: Option<f64>,
    weights: Option<Vec<f64>>,
    raw_weights: Option<Vec<f64>>,
    delay_taps: Option<usize>,
    clusters: Option<CountSpec>,
    scatterers_per_cluster: Option<usize>,
    angular_spread_deg: Option<f64>,
    element_spacing: Option<f64>,
    seed: Option<u64>,
    stream_allocation: Option<AllocationSpec>,
    trials: Option<usize>,
    algorithms: Option<Vec<String>>,
    init: Option<String>,
    varsigma_h_sq: Option<f64>,
    varsigma_g_sq: Option<f64>,
    outer_omega: Option<f64>,
    max_outer: Option<usize>,
    cg_omega: Option<f64>,
    cg_max_iters: Option<usize>,
    digital_omega: Option<f64>,
    socp_max_iters: Option<usize>,
    wmmse_max_iters: Option<usize>,
    sweep: Option<RawSweep>,
    ber: Option<RawBer>,
}

/// A fully resolved experiment: every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub system: SystemConfig,
    pub theta_db: f64,
    /// `sum(raw_weights)` when the weights were given unnormalized, else 1.
    pub weight_scale: f64,
    pub trials: usize,
    pub algorithms: Vec<Algorithm>,
    pub scenario: ScenarioOptions,
    pub sweep: Option<SweepSection>,
    pub ber: Option<BerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<SweepValue>,
}

impl Experiment {
    /// Defaults for the given dimensions.
    pub fn new(system: SystemConfig) -> Self {
        Experiment {
            theta_db: crate::linalg::linear_to_db(system.theta),
            system,
            weight_scale: 1.0,
            trials: DEFAULT_TRIALS,
            algorithms: Algorithm::ALL.to_vec(),
            scenario: ScenarioOptions::default(),
            sweep: None,
            ber: None,
        }
    }

    /// TOML rendering of the resolved experiment, for provenance.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("experiment serializes to TOML")
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line on which `key` is assigned, if it appears at the start of a line.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key)
            .map(|rest| rest.trim_start().starts_with('='))
            .unwrap_or(false)
    })
    .map(|i| i + 1)
}

struct Diagnostics<'a> {
    path: &'a str,
    text: &'a str,
}

impl Diagnostics<'_> {
    fn at(&self, key: &str, message: impl std::fmt::Display) -> Error {
        let location = match key_line(self.text, key) {
            Some(line) => format!("line {line}"),
            None => "top level".to_string(),
        };
        Error::Parse {
            path: self.path.to_string(),
            message: format!("key '{key}' ({location}): {message}"),
        }
    }

    fn missing(&self, key: &str) -> Error {
        Error::Parse {
            path: self.path.to_string(),
            message: format!("missing required key '{key}'"),
        }
    }
}

pub fn load_experiment(path: impl AsRef<Path>) -> Result<Experiment> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_experiment(&text, &path.display().to_string())
}

/// Parses experiment text; `origin` names the source in diagnostics.
pub fn parse_experiment(text: &str, origin: &str) -> Result<Experiment> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| format!("line {}: ", line_of(text, s.start)))
            .unwrap_or_default();
        Error::Parse {
            path: origin.to_string(),
            message: format!("{line}{}", e.message()),
        }
    })?;
    let d = Diagnostics { path: origin, text };

    let m = raw.m.ok_or_else(|| d.missing("M"))?;
    let n_rf = raw.n_rf.ok_or_else(|| d.missing("N_RF"))?;
    let k = raw.k.ok_or_else(|| d.missing("K"))?;
    let u = raw.u.ok_or_else(|| d.missing("U"))?;
    let mut cfg = SystemConfig::new(m, n_rf, k, u);

    let theta_db = raw.theta_db.unwrap_or(crate::config::DEFAULT_THETA_DB);
    if !theta_db.is_finite() {
        return Err(d.at("theta_db", "must be finite"));
    }
    cfg.theta = db_to_linear(theta_db);

    let mut weight_scale = 1.0;
    match (raw.weights, raw.raw_weights) {
        (Some(_), Some(_)) => {
            return Err(d.at("raw_weights", "give either 'weights' or 'raw_weights', not both"))
        }
        (Some(z), None) => {
            validate_weights(&z, u).map_err(|e| d.at("weights", e))?;
            cfg.weights = z;
        }
        (None, Some(l)) => {
            if l.len() != u {
                return Err(d.at("raw_weights", format!("expected {u} values, got {}", l.len())));
            }
            let (z, scale) = renormalize_weights(&l).map_err(|e| d.at("raw_weights", e))?;
            cfg.weights = z;
            weight_scale = scale;
        }
        (None, None) => {}
    }
    if let Some(v) = raw.delay_taps {
        cfg.delay_taps = v;
    }
    match raw.clusters {
        Some(CountSpec::One(c)) => cfg.clusters = vec![c; u],
        Some(CountSpec::PerUser(c)) => cfg.clusters = c,
        None => {}
    }
    if let Some(v) = raw.scatterers_per_cluster {
        cfg.scatterers_per_cluster = v;
    }
    if let Some(v) = raw.angular_spread_deg {
        cfg.angular_spread_deg = v;
    }
    if let Some(v) = raw.element_spacing {
        cfg.element_spacing = v;
    }
    if let Some(v) = raw.seed {
        cfg.seed = v;
    }
    if let Some(a) = raw.stream_allocation {
        cfg.stream_allocation = parse_allocation(a).map_err(|e| d.at("stream_allocation", e))?;
    }
    cfg.validate().map_err(|e| Error::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })?;

    let mut exp = Experiment::new(cfg);
    exp.theta_db = theta_db;
    exp.weight_scale = weight_scale;
    if let Some(t) = raw.trials {
        if t == 0 {
            return Err(d.at("trials", "must be at least 1"));
        }
        exp.trials = t;
    }
    if let Some(a) = raw.algorithms {
        exp.algorithms = parse_algorithms(&a.join(",")).map_err(|e| d.at("algorithms", e))?;
    }
    let fw = &mut exp.scenario.framework;
    if let Some(init) = raw.init {
        fw.init = match init.as_str() {
            "cmdd" => InitStrategy::Cmdd,
            "random" => InitStrategy::Random,
            other => return Err(d.at("init", format!("expected \"cmdd\" or \"random\", got \"{other}\""))),
        };
    }
    let positive = |key: &str, v: f64| -> Result<f64> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(d.at(key, format!("{v} is not positive")))
        }
    };
    let nonzero = |key: &str, v: usize| -> Result<usize> {
        if v > 0 {
            Ok(v)
        } else {
            Err(d.at(key, "must be at least 1"))
        }
    };
    if let Some(v) = raw.outer_omega {
        fw.omega = positive("outer_omega", v)?;
    }
    if let Some(v) = raw.max_outer {
        fw.max_outer = nonzero("max_outer", v)?;
    }
    if let Some(v) = raw.cg_omega {
        fw.cg.omega = positive("cg_omega", v)?;
    }
    if let Some(v) = raw.cg_max_iters {
        fw.cg.max_iters = nonzero("cg_max_iters", v)?;
    }
    if let Some(v) = raw.digital_omega {
        let v = positive("digital_omega", v)?;
        fw.locally_optimal.omega = v;
        fw.wmmse.omega = v;
    }
    if let Some(v) = raw.socp_max_iters {
        fw.locally_optimal.max_iters = nonzero("socp_max_iters", v)?;
    }
    if let Some(v) = raw.wmmse_max_iters {
        fw.wmmse.max_iters = nonzero("wmmse_max_iters", v)?;
    }
    let accuracy = |key: &str, v: f64| -> Result<f64> {
        if (0.0..=1.0).contains(&v) {
            Ok(v.sqrt())
        } else {
            Err(d.at(key, format!("{v} outside [0, 1]")))
        }
    };
    exp.scenario.csi = CsiModel {
        varsigma_h: accuracy("varsigma_h_sq", raw.varsigma_h_sq.unwrap_or(1.0))?,
        varsigma_g: accuracy("varsigma_g_sq", raw.varsigma_g_sq.unwrap_or(1.0))?,
    };

    if let Some(s) = raw.sweep {
        let parameter: SweepParameter = s.parameter.parse().map_err(|e| d.at("parameter", e))?;
        if s.values.is_empty() {
            return Err(d.at("values", "sweep needs at least one value"));
        }
        let values = s
            .values
            .into_iter()
            .map(|v| match v {
                RawValue::Scalar(x) => SweepValue::Scalar(x),
                RawValue::Vector(x) => SweepValue::Vector(x),
            })
            .collect();
        let section = SweepSection { parameter, values };
        super::sweep::check_values(&exp, &section).map_err(|e| d.at("values", e))?;
        exp.sweep = Some(section);
    }
    if let Some(b) = raw.ber {
        let spec = BerSpec {
            theta_db: b.theta_db,
            symbols_per_trial: b.symbols_per_trial.unwrap_or(super::ber::DEFAULT_SYMBOLS),
        };
        spec.validate().map_err(|e| d.at("symbols_per_trial", e))?;
        exp.ber = Some(spec);
    }
    Ok(exp)
}

fn parse_allocation(a: AllocationSpec) -> Result<StreamAllocation> {
    match a {
        AllocationSpec::Counts(c) => Ok(StreamAllocation::Fixed(c)),
        AllocationSpec::Text(t) => {
            let t = t.trim();
            if t == "auto" {
                return Ok(StreamAllocation::Auto);
            }
            let list = t
                .strip_prefix("fixed:")
                .map(str::trim)
                .and_then(|l| l.strip_prefix('['))
                .and_then(|l| l.strip_suffix(']'))
                .ok_or_else(|| Error::Config(format!("expected \"auto\" or \"fixed:[..]\", got \"{t}\"")))?;
            let counts = list
                .split(',')
                .map(|v| v.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(format!("bad stream count: {e}")))?;
            Ok(StreamAllocation::Fixed(counts))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "M = 16\nN_RF = 4\nK = 16\nU = 2\n";

    #[test]
    fn minimal_file_gets_defaults() {
        let e = parse_experiment(MINIMAL, "mem").unwrap();
        assert_eq!(e.system, SystemConfig::new(16, 4, 16, 2));
        assert_eq!(e.trials, DEFAULT_TRIALS);
        assert_eq!(e.theta_db, 10.0);
        let echo = e.echo();
        assert!(echo.contains("delay_taps = 8"), "{echo}");
        let back: Experiment = toml::from_str(&echo).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn raw_weights_are_normalized() {
        let e = parse_experiment(&format!("{MINIMAL}raw_weights = [3.0, 1.0]\n"), "mem").unwrap();
        assert_eq!(e.system.weights, vec![0.75, 0.25]);
        assert_eq!(e.weight_scale, 4.0);
    }

    #[test]
    fn unnormalized_final_weights_rejected_with_line() {
        let err = parse_experiment(&format!("{MINIMAL}weights = [0.6, 0.3]\n"), "exp.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("'weights'") && msg.contains("line 5"), "{msg}");
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_experiment(&format!("{MINIMAL}antenas = 3\n"), "exp.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("antenas") && msg.contains("line 5"), "{msg}");
    }

    #[test]
    fn missing_dimension_rejected() {
        let err = parse_experiment("M = 16\nN_RF = 4\nK = 16\n", "exp.toml").unwrap_err();
        assert!(err.to_string().contains("'U'"));
    }

    #[test]
    fn allocation_forms() {
        for (text, expect) in [
            ("\"auto\"", StreamAllocation::Auto),
            ("\"fixed:[3,1]\"", StreamAllocation::Fixed(vec![3, 1])),
            ("[2, 2]", StreamAllocation::Fixed(vec![2, 2])),
        ] {
            let e = parse_experiment(&format!("{MINIMAL}stream_allocation = {text}\n"), "mem").unwrap();
            assert_eq!(e.system.stream_allocation, expect);
        }
        assert!(parse_experiment(&format!("{MINIMAL}stream_allocation = [4, 1]\n"), "mem").is_err());
    }

    #[test]
    fn sections_parse() {
        let text = format!(
            "{MINIMAL}algorithms = [\"cmdd\", \"aohb\"]\nvarsigma_g_sq = 0.95\n\
             [sweep]\nparameter = \"theta_db\"\nvalues = [0, 5, 10]\n\
             [ber]\ntheta_db = [6.0, 10.0]\nsymbols_per_trial = 2000\n"
        );
        let e = parse_experiment(&text, "mem").unwrap();
        assert_eq!(e.algorithms, vec![Algorithm::Cmdd, Algorithm::Aohb]);
        assert!((e.scenario.csi.varsigma_g - 0.95f64.sqrt()).abs() < 1e-15);
        let s = e.sweep.unwrap();
        assert_eq!(s.parameter, SweepParameter::ThetaDb);
        assert_eq!(s.values.len(), 3);
        assert_eq!(e.ber.unwrap().symbols_per_trial, 2000);
    }

    #[test]
    fn too_few_ber_symbols_rejected() {
        let text = format!("{MINIMAL}[ber]\ntheta_db = [6.0]\nsymbols_per_trial = 10\n");
        assert!(parse_experiment(&text, "mem").is_err());
    }
}
