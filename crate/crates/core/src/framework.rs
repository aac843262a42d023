//! Alternating maximization of the weighted sum rate, the fully digital
//! benchmark and Monte-Carlo scenarios over several algorithms.
//!
//! One outer iteration of [`alternate_maximize`] improves the analog
//! precoder by Riemannian conjugate gradient with the digital precoders held
//! fixed, then recomputes the digital precoders on the new effective channel.
//! LAOHB uses the locally optimal (SOCP) digital design and is monotone in
//! the weighted sum rate; AOHB uses the weighted-MMSE design, which minimizes
//! an upper bound and may occasionally lose rate. The best iterate is
//! returned in both cases.

use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{corrupt_effective_csi, corrupt_physical_csi, ChannelSet, EffectiveChannel};
use crate::cmdd::{cmdd_precode, mmse_digital_cmdd};
use crate::config::SystemConfig;
use crate::digital::{
    design_digital, normalize_digital, random_digital_set, ClarabelSolver, ConicSolver,
    DigitalMethod, DigitalOptions,
};
use crate::linalg::CMatrix;
use crate::manifold::{optimize_analog, CgOptions, ManifoldPoint};
use crate::metrics::{evaluate, weighted_sum_rate, AnalogPrecoder, DigitalPrecoderSet, MetricsReport};
use crate::rng::{stream, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Fully digital weighted-MMSE precoding, one RF chain per antenna.
    FullDigital,
    /// Closed-form eigenvector-based hybrid design.
    Cmdd,
    /// Alternating maximization with the weighted-MMSE digital block.
    Aohb,
    /// Alternating maximization with the locally optimal digital block.
    Laohb,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::FullDigital,
        Algorithm::Laohb,
        Algorithm::Aohb,
        Algorithm::Cmdd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FullDigital => "fd",
            Algorithm::Cmdd => "cmdd",
            Algorithm::Aohb => "aohb",
            Algorithm::Laohb => "laohb",
        }
    }

    fn digital_method(self) -> Option<DigitalMethod> {
        match self {
            Algorithm::Aohb => Some(DigitalMethod::Wmmse),
            Algorithm::Laohb => Some(DigitalMethod::LocallyOptimal),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fd" | "full_digital" | "fulldigital" => Ok(Algorithm::FullDigital),
            "cmdd" => Ok(Algorithm::Cmdd),
            "aohb" => Ok(Algorithm::Aohb),
            "laohb" => Ok(Algorithm::Laohb),
            other => Err(Error::Config(format!(
                "unknown algorithm '{other}' (expected fd, cmdd, aohb or laohb)"
            ))),
        }
    }
}

/// Parses a comma-separated algorithm list such as `"fd,laohb,cmdd"`.
pub fn parse_algorithms(list: &str) -> Result<Vec<Algorithm>> {
    let algos: Vec<Algorithm> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if algos.is_empty() {
        return Err(Error::Config("empty algorithm list".into()));
    }
    Ok(algos)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    #[default]
    Cmdd,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameworkOptions {
    /// Relative weighted-sum-rate change that ends the outer loop.
    pub omega: f64,
    pub max_outer: usize,
    pub cg: CgOptions,
    pub locally_optimal: DigitalOptions,
    pub wmmse: DigitalOptions,
    pub init: InitStrategy,
}

impl Default for FrameworkOptions {
    fn default() -> Self {
        FrameworkOptions {
            omega: 1e-3,
            max_outer: 50,
            cg: CgOptions::default(),
            locally_optimal: DigitalOptions::locally_optimal(),
            wmmse: DigitalOptions::wmmse(),
            init: InitStrategy::Cmdd,
        }
    }
}

impl FrameworkOptions {
    fn digital(&self, method: DigitalMethod) -> &DigitalOptions {
        match method {
            DigitalMethod::LocallyOptimal => &self.locally_optimal,
            DigitalMethod::Wmmse => &self.wmmse,
        }
    }
}

/// Output of one algorithm on one channel.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub algorithm: Algorithm,
    /// Constant-modulus analog precoder; `None` for the fully digital design.
    pub analog: Option<AnalogPrecoder>,
    pub digital: DigitalPrecoderSet,
    /// Weighted sum rate before the first and after every outer iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl RunResult {
    /// Physical analog precoder; the identity for the fully digital design.
    pub fn analog_matrix(&self) -> CMatrix {
        match &self.analog {
            Some(a) => a.matrix().clone(),
            None => {
                let m = self.digital.subcarrier(0).nrows();
                CMatrix::identity(m, m)
            }
        }
    }

    pub fn summary(&self, metrics: MetricsReport) -> RunSummary {
        RunSummary {
            algorithm: self.algorithm,
            iterations: self.iterations,
            converged: self.converged,
            trace: self.trace.clone(),
            weighted_sum_rate: metrics.weighted_sum_rate,
            metrics,
        }
    }
}

/// Serializable record of a run: mode, iteration count, outer trace and the
/// final link metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
    pub weighted_sum_rate: f64,
    pub metrics: MetricsReport,
}

fn normalize_set(w: &DigitalPrecoderSet, f: &CMatrix) -> Result<DigitalPrecoderSet> {
    DigitalPrecoderSet::new(
        w.matrices()
            .iter()
            .map(|w_k| normalize_digital(w_k, f))
            .collect::<Result<_>>()?,
    )
}

/// Alternating maximization from a feasible start `(analog, digital)`.
///
/// Each outer iteration optimizes `F` for fixed `W`, then redesigns `W` on
/// the new effective channel starting from the renormalized previous `W`.
/// When that pair has a lower weighted sum rate than the current one, the
/// analog update is discarded and only the digital block runs on the old
/// `F`.
pub fn alternate_maximize(
    h: &ChannelSet,
    cfg: &SystemConfig,
    algorithm: Algorithm,
    init: (AnalogPrecoder, DigitalPrecoderSet),
    opts: &FrameworkOptions,
    solver: &dyn ConicSolver,
) -> Result<RunResult> {
    let method = algorithm.digital_method().ok_or_else(|| {
        Error::Config(format!("{algorithm} is not an alternating-maximization mode"))
    })?;
    let dopts = opts.digital(method);
    let (z, theta) = (&cfg.weights[..], cfg.theta);
    let (mut analog, w0) = init;
    let mut digital = normalize_set(&w0, analog.matrix())?;
    let mut value = weighted_sum_rate(h, analog.matrix(), &digital, z, theta);
    let mut trace = vec![value];
    let mut best = (analog.clone(), digital.clone(), value);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_outer {
        iterations += 1;
        let cg = optimize_analog(
            &ManifoldPoint::from_analog(&analog),
            h,
            &digital,
            z,
            theta,
            &opts.cg,
        )?;
        let candidate = cg.point.to_analog();
        let mut next = None;
        if let Ok(start) = normalize_set(&digital, candidate.matrix()) {
            let eff = EffectiveChannel::from_analog(h, candidate.matrix())?;
            let design = design_digital(method, candidate.matrix(), &eff, z, theta, &start, dopts, solver)?;
            let v = weighted_sum_rate(h, candidate.matrix(), &design.w, z, theta);
            if v >= value {
                next = Some((candidate, design.w, v));
            }
        }
        let (a, w, v) = match next {
            Some(n) => n,
            None => {
                debug!("{algorithm}: analog update rejected at outer iteration {iterations}");
                let eff = EffectiveChannel::from_analog(h, analog.matrix())?;
                let design =
                    design_digital(method, analog.matrix(), &eff, z, theta, &digital, dopts, solver)?;
                let v = weighted_sum_rate(h, analog.matrix(), &design.w, z, theta);
                (analog.clone(), design.w, v)
            }
        };
        let rel = (v - value).abs() / value.abs().max(f64::MIN_POSITIVE);
        analog = a;
        digital = w;
        value = v;
        trace.push(value);
        if value > best.2 {
            best = (analog.clone(), digital.clone(), value);
        }
        if rel < opts.omega {
            converged = true;
            break;
        }
    }
    Ok(RunResult {
        algorithm,
        analog: Some(best.0),
        digital: best.1,
        trace,
        iterations,
        converged,
    })
}

/// Fully digital benchmark: per subcarrier
/// `V = (H Z^2 H^H + I/theta)^{-1} H Z`, columns scaled to unit norm.
pub fn full_digital_baseline(h: &ChannelSet, cfg: &SystemConfig) -> Result<DigitalPrecoderSet> {
    let eye = CMatrix::identity(h.antennas(), h.antennas());
    let w = h
        .matrices()
        .par_iter()
        .map(|h_k| normalize_digital(&mmse_digital_cmdd(h_k, &cfg.weights, cfg.theta)?, &eye))
        .collect::<Result<Vec<_>>>()?;
    DigitalPrecoderSet::new(w)
}

/// Runs one algorithm on a (possibly estimated) channel. `trial` selects the
/// random stream of the random initialization.
pub fn run_algorithm(
    algorithm: Algorithm,
    h: &ChannelSet,
    cfg: &SystemConfig,
    opts: &FrameworkOptions,
    solver: &dyn ConicSolver,
    trial: u64,
) -> Result<RunResult> {
    match algorithm {
        Algorithm::FullDigital => {
            let w = full_digital_baseline(h, cfg)?;
            let eye = CMatrix::identity(h.antennas(), h.antennas());
            let v = weighted_sum_rate(h, &eye, &w, &cfg.weights, cfg.theta);
            Ok(RunResult {
                algorithm,
                analog: None,
                digital: w,
                trace: vec![v],
                iterations: 0,
                converged: true,
            })
        }
        Algorithm::Cmdd => {
            let (a, w) = cmdd_precode(h, cfg)?;
            let v = weighted_sum_rate(h, a.matrix(), &w, &cfg.weights, cfg.theta);
            Ok(RunResult {
                algorithm,
                analog: Some(a),
                digital: w,
                trace: vec![v],
                iterations: 0,
                converged: true,
            })
        }
        Algorithm::Aohb | Algorithm::Laohb => {
            let init = match opts.init {
                InitStrategy::Cmdd => cmdd_precode(h, cfg)?,
                InitStrategy::Random => {
                    let mut rng = stream(cfg.seed, trial, Stream::Init);
                    let a = AnalogPrecoder::random(cfg.antennas, cfg.rf_chains, &mut rng);
                    let w = random_digital_set(a.matrix(), cfg.users, cfg.subcarriers, &mut rng);
                    (a, w)
                }
            };
            alternate_maximize(h, cfg, algorithm, init, opts, solver)
        }
    }
}

/// Accuracy of the channel knowledge at the transmitter.
///
/// The design sees `h_hat = s_h h + sqrt(1 - s_h^2) e`. Hybrid designs then
/// recompute their digital precoders on a separately estimated effective
/// channel with accuracy `s_g`. Rates are always evaluated on the true
/// channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsiModel {
    pub varsigma_h: f64,
    pub varsigma_g: f64,
}

impl Default for CsiModel {
    fn default() -> Self {
        CsiModel {
            varsigma_h: 1.0,
            varsigma_g: 1.0,
        }
    }
}

impl CsiModel {
    pub fn is_perfect(&self) -> bool {
        self.varsigma_h == 1.0 && self.varsigma_g == 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioOptions {
    pub framework: FrameworkOptions,
    pub csi: CsiModel,
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub run: RunResult,
    pub metrics: MetricsReport,
}

/// Per-algorithm results of one trial; failures are kept as messages.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trial: usize,
    pub results: Vec<(Algorithm, std::result::Result<TrialRecord, String>)>,
}

impl TrialOutcome {
    pub fn get(&self, algorithm: Algorithm) -> Option<&TrialRecord> {
        self.results
            .iter()
            .find(|(a, _)| *a == algorithm)
            .and_then(|(_, r)| r.as_ref().ok())
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub algorithms: Vec<Algorithm>,
    pub trials: Vec<TrialOutcome>,
}

impl ScenarioReport {
    /// Mean weighted sum rate (bits/s/Hz summed over subcarriers) over the
    /// successful trials, `None` if every trial failed.
    pub fn mean_weighted_sum_rate(&self, algorithm: Algorithm) -> Option<f64> {
        let v: Vec<f64> = self
            .trials
            .iter()
            .filter_map(|t| t.get(algorithm))
            .map(|r| r.metrics.weighted_sum_rate)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Mean per-user rate averaged over subcarriers and successful trials.
    pub fn mean_user_rates(&self, algorithm: Algorithm) -> Option<Vec<f64>> {
        let rates: Vec<Vec<f64>> = self
            .trials
            .iter()
            .filter_map(|t| t.get(algorithm))
            .map(|r| r.metrics.mean_user_rates())
            .collect();
        let n = rates.len();
        let first = rates.first()?;
        Some(
            (0..first.len())
                .map(|u| rates.iter().map(|r| r[u]).sum::<f64>() / n as f64)
                .collect(),
        )
    }

    pub fn failures(&self) -> Vec<(usize, Algorithm, &str)> {
        self.trials
            .iter()
            .flat_map(|t| {
                t.results.iter().filter_map(move |(a, r)| match r {
                    Err(e) => Some((t.trial, *a, e.as_str())),
                    Ok(_) => None,
                })
            })
            .collect()
    }
}

fn redesign_digital(
    run: &RunResult,
    h: &ChannelSet,
    cfg: &SystemConfig,
    varsigma_g: f64,
    csi_rng: &mut crate::rng::StreamRng,
    opts: &FrameworkOptions,
    solver: &dyn ConicSolver,
) -> Result<DigitalPrecoderSet> {
    let f = run.analog_matrix();
    let eff = EffectiveChannel::from_analog(h, &f)?;
    let est = corrupt_effective_csi(&eff, varsigma_g, csi_rng)?;
    let (z, theta) = (&cfg.weights[..], cfg.theta);
    match run.algorithm.digital_method() {
        Some(method) => Ok(design_digital(
            method,
            &f,
            &est,
            z,
            theta,
            &run.digital,
            opts.digital(method),
            solver,
        )?
        .w),
        None => DigitalPrecoderSet::new(
            est.matrices()
                .iter()
                .map(|g| normalize_digital(&mmse_digital_cmdd(g, z, theta)?, &f))
                .collect::<Result<_>>()?,
        ),
    }
}

/// Runs every algorithm of `algorithms` on the channel of one trial.
pub fn run_trial(
    cfg: &SystemConfig,
    algorithms: &[Algorithm],
    trial: usize,
    opts: &ScenarioOptions,
    solver: &dyn ConicSolver,
) -> Result<TrialOutcome> {
    let t = trial as u64;
    let h = ChannelSet::generate(cfg, &mut stream(cfg.seed, t, Stream::Channel))?;
    let mut csi_rng = stream(cfg.seed, t, Stream::Csi);
    let design_channel = if opts.csi.is_perfect() {
        h.clone()
    } else {
        corrupt_physical_csi(&h, opts.csi.varsigma_h, &mut csi_rng)?
    };
    let results = algorithms
        .iter()
        .map(|&alg| {
            let record = (|| -> Result<TrialRecord> {
                let mut run = run_algorithm(alg, &design_channel, cfg, &opts.framework, solver, t)?;
                if !opts.csi.is_perfect() && alg != Algorithm::FullDigital {
                    let mut rng = csi_rng.clone();
                    run.digital = redesign_digital(
                        &run,
                        &design_channel,
                        cfg,
                        opts.csi.varsigma_g,
                        &mut rng,
                        &opts.framework,
                        solver,
                    )?;
                }
                let metrics = evaluate(&h, &run.analog_matrix(), &run.digital, &cfg.weights, cfg.theta)?;
                Ok(TrialRecord { run, metrics })
            })();
            if let Err(e) = &record {
                warn!("trial {trial}, {alg}: {e}");
            }
            (alg, record.map_err(|e| e.to_string()))
        })
        .collect();
    Ok(TrialOutcome { trial, results })
}

/// Monte-Carlo evaluation of several algorithms on `trials` channel draws.
///
/// Trial `t` draws its channel from `(cfg.seed, t)` only, so all algorithms
/// see the same channels and results do not depend on scheduling. A failing
/// algorithm is recorded for its trial without aborting the others.
pub fn run_scenario(
    cfg: &SystemConfig,
    algorithms: &[Algorithm],
    trials: usize,
    opts: &ScenarioOptions,
    solver: &dyn ConicSolver,
) -> Result<ScenarioReport> {
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let trials = (0..trials)
        .into_par_iter()
        .map(|t| {
            run_trial(cfg, algorithms, t, opts, solver).unwrap_or_else(|e| TrialOutcome {
                trial: t,
                results: algorithms.iter().map(|&a| (a, Err(e.to_string()))).collect(),
            })
        })
        .collect();
    Ok(ScenarioReport {
        algorithms: algorithms.to_vec(),
        trials,
    })
}

/// Default conic backend.
pub fn default_solver() -> ClarabelSolver {
    ClarabelSolver::default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SystemConfig {
        SystemConfig::new(8, 2, 4, 2).with_delay_taps(4).with_seed(3)
    }

    #[test]
    fn algorithm_names_roundtrip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!(parse_algorithms("fd, laohb").is_ok());
        assert!(matches!(parse_algorithms("fd,xyz"), Err(Error::Config(_))));
    }

    #[test]
    fn laohb_trace_non_decreasing_and_feasible() {
        let cfg = tiny();
        let h = ChannelSet::generate(&cfg, &mut stream(3, 0, Stream::Channel)).unwrap();
        let run = run_algorithm(Algorithm::Laohb, &h, &cfg, &FrameworkOptions::default(), &ClarabelSolver::default(), 0)
            .unwrap();
        assert_eq!(run.trace.len(), run.iterations + 1);
        for t in run.trace.windows(2) {
            assert!(t[1] >= t[0] - 1e-6, "{:?}", run.trace);
        }
        let f = run.analog_matrix();
        assert!(run.digital.max_power_error(&f) < 1e-12);
        assert!(f.iter().all(|v| (v.norm() - 1.0 / 8f64.sqrt()).abs() < 1e-12));
    }

    #[test]
    fn restart_at_fixed_point_stops_after_one_iteration() {
        let cfg = tiny();
        let h = ChannelSet::generate(&cfg, &mut stream(3, 1, Stream::Channel)).unwrap();
        let opts = FrameworkOptions::default();
        let solver = ClarabelSolver::default();
        let first = run_algorithm(Algorithm::Laohb, &h, &cfg, &opts, &solver, 1).unwrap();
        let again = alternate_maximize(
            &h,
            &cfg,
            Algorithm::Laohb,
            (first.analog.clone().unwrap(), first.digital.clone()),
            &opts,
            &solver,
        )
        .unwrap();
        assert!(again.iterations <= 2, "{}", again.iterations);
        let (a, b) = (first.trace.last().unwrap(), again.trace.last().unwrap());
        assert!((b - a) / a < 2e-3 && b >= a);
    }

    #[test]
    fn full_digital_is_unit_norm_and_matches_scalar_formula() {
        let h = ChannelSet::new(vec![CMatrix::from_element(1, 1, crate::Complex64::new(2.0, 0.0))]).unwrap();
        let cfg = SystemConfig::new(1, 1, 1, 1).with_delay_taps(1).with_theta_db(0.0);
        let w = full_digital_baseline(&h, &cfg).unwrap();
        // v = 2 / (4 + 1) > 0, normalized to 1
        assert!((w.subcarrier(0)[(0, 0)] - crate::Complex64::new(1.0, 0.0)).norm() < 1e-12);

        let cfg = tiny();
        let h = ChannelSet::generate(&cfg, &mut stream(3, 2, Stream::Channel)).unwrap();
        let w = full_digital_baseline(&h, &cfg).unwrap();
        assert!(w.max_power_error(&CMatrix::identity(8, 8)) < 1e-12);
    }

    #[test]
    fn scenario_is_deterministic_and_shares_channels() {
        let cfg = tiny();
        let opts = ScenarioOptions::default();
        let solver = ClarabelSolver::default();
        let algos = [Algorithm::Cmdd, Algorithm::Aohb];
        let a = run_scenario(&cfg, &algos, 2, &opts, &solver).unwrap();
        let b = run_scenario(&cfg, &algos, 2, &opts, &solver).unwrap();
        for (ta, tb) in a.trials.iter().zip(&b.trials) {
            for alg in algos {
                assert_eq!(ta.get(alg).unwrap().metrics, tb.get(alg).unwrap().metrics);
            }
        }
        assert!(a.failures().is_empty());
        // AOHB starts from the CMDD design on the same channel
        for t in &a.trials {
            let c = t.get(Algorithm::Cmdd).unwrap();
            let o = t.get(Algorithm::Aohb).unwrap();
            assert!((o.run.trace[0] - c.metrics.weighted_sum_rate).abs() < 1e-9);
        }
    }

    #[test]
    fn imperfect_csi_runs_and_evaluates_on_true_channel() {
        let cfg = tiny();
        let opts = ScenarioOptions {
            csi: CsiModel { varsigma_h: 0.9f64.sqrt(), varsigma_g: 0.95f64.sqrt() },
            ..ScenarioOptions::default()
        };
        let r = run_scenario(&cfg, &[Algorithm::Cmdd, Algorithm::FullDigital], 2, &opts, &ClarabelSolver::default())
            .unwrap();
        assert!(r.failures().is_empty());
        assert!(r.mean_weighted_sum_rate(Algorithm::Cmdd).unwrap() > 0.0);
    }
}
