//! Uncoded 16-QAM bit-error-rate simulation over designed precoders.
//!
//! Symbols are Gray-mapped with unit average energy. User `u` on subcarrier
//! `k` receives `y = g_u^H sum_j w_j s_j + n` with `n ~ CN(0, 1/theta)` and
//! detects `b^* y / (b^* g_u^H w_u)`, the MMSE receiver output with its
//! signal gain removed, by nearest-point decision.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::config::SystemConfig;
use crate::digital::ConicSolver;
use crate::framework::{run_trial, Algorithm, ScenarioOptions};
use crate::linalg::{crandn, db_to_linear, CMatrix, Complex64};
use crate::metrics::{column, mmse_receiver, DigitalPrecoderSet};
use crate::rng::{stream, Stream};
use crate::{Error, Result};

use super::sweep::SWEEP_CSV_HEADER;

pub const MIN_SYMBOLS: usize = 1000;
pub const DEFAULT_SYMBOLS: usize = 10_000;

/// Distance between adjacent constellation levels is `2 / sqrt(10)`.
const SCALE: f64 = 0.316_227_766_016_837_94;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerSpec {
    pub theta_db: Vec<f64>,
    /// 16-QAM symbols per user and trial.
    pub symbols_per_trial: usize,
}

impl BerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.theta_db.is_empty() || self.theta_db.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("BER needs a non-empty list of finite SNRs".into()));
        }
        if self.symbols_per_trial < MIN_SYMBOLS {
            return Err(Error::Config(format!(
                "symbols_per_trial = {} is below the minimum of {MIN_SYMBOLS}",
                self.symbols_per_trial
            )));
        }
        Ok(())
    }
}

/// Gray code on one axis: 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3.
fn axis_level(bits: u8) -> f64 {
    match bits & 3 {
        0b00 => -3.0,
        0b01 => -1.0,
        0b11 => 1.0,
        _ => 3.0,
    }
}

fn axis_bits(x: f64) -> u8 {
    let x = x / SCALE;
    if x < -2.0 {
        0b00
    } else if x < 0.0 {
        0b01
    } else if x < 2.0 {
        0b11
    } else {
        0b10
    }
}

/// Maps four bits (high pair in-phase, low pair quadrature) to a point.
pub fn qam16_map(bits: u8) -> Complex64 {
    Complex64::new(axis_level(bits >> 2), axis_level(bits)) * SCALE
}

/// Nearest-point decision back to four bits.
pub fn qam16_demap(y: Complex64) -> u8 {
    (axis_bits(y.re) << 2) | axis_bits(y.im)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BerCounts {
    pub errors: Vec<u64>,
    pub bits: Vec<u64>,
}

impl BerCounts {
    pub fn new(users: usize) -> Self {
        BerCounts {
            errors: vec![0; users],
            bits: vec![0; users],
        }
    }

    pub fn per_user(&self) -> Vec<f64> {
        self.errors
            .iter()
            .zip(&self.bits)
            .map(|(e, b)| if *b == 0 { 0.0 } else { *e as f64 / *b as f64 })
            .collect()
    }

    pub fn aggregate(&self) -> f64 {
        let b: u64 = self.bits.iter().sum();
        if b == 0 {
            0.0
        } else {
            self.errors.iter().sum::<u64>() as f64 / b as f64
        }
    }

    pub fn merge(&mut self, other: &BerCounts) {
        for (a, b) in self.errors.iter_mut().zip(&other.errors) {
            *a += b;
        }
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a += b;
        }
    }
}

/// Simulates `symbols` 16-QAM symbols per user, cycling through the
/// subcarriers. `theta` may be infinite (noise-free).
pub fn simulate_ber<R: Rng + ?Sized>(
    h: &ChannelSet,
    f: &CMatrix,
    w: &DigitalPrecoderSet,
    theta: f64,
    symbols: usize,
    rng: &mut R,
) -> Result<BerCounts> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("theta {theta} is not positive")));
    }
    let (users, subcarriers) = (h.users(), h.subcarriers());
    if w.subcarriers() != subcarriers {
        return Err(Error::Dimension("precoders do not match the channel".into()));
    }
    // gains[k][u][j] = g_u^H w_j, receivers[k][u]
    let mut gains = Vec::with_capacity(subcarriers);
    let mut rx = Vec::with_capacity(subcarriers);
    for k in 0..subcarriers {
        let g = f.adjoint() * h.subcarrier(k);
        let a = g.adjoint() * w.subcarrier(k);
        gains.push(a);
        rx.push(
            (0..users)
                .map(|u| mmse_receiver(column(&g, u), w.subcarrier(k), u, theta))
                .collect::<Vec<_>>(),
        );
    }
    let sigma = (1.0 / theta).sqrt();
    let mut counts = BerCounts::new(users);
    let mut bits = vec![0u8; users];
    let mut s = vec![Complex64::new(0.0, 0.0); users];
    for n in 0..symbols {
        let k = n % subcarriers;
        for u in 0..users {
            bits[u] = rng.gen::<u8>() & 0x0f;
            s[u] = qam16_map(bits[u]);
        }
        for u in 0..users {
            let noise = crandn(rng) * sigma;
            let y: Complex64 = (0..users).map(|j| gains[k][(u, j)] * s[j]).sum::<Complex64>() + noise;
            let b = rx[k][u];
            let gain = b.conj() * gains[k][(u, u)];
            let estimate = if gain == Complex64::new(0.0, 0.0) {
                Complex64::new(0.0, 0.0)
            } else {
                b.conj() * y / gain
            };
            counts.errors[u] += (qam16_demap(estimate) ^ bits[u]).count_ones() as u64;
            counts.bits[u] += 4;
        }
    }
    Ok(counts)
}

/// BER of every algorithm at one SNR, summed over trials.
#[derive(Debug, Clone)]
pub struct BerPoint {
    pub theta_db: f64,
    pub counts: Vec<(Algorithm, BerCounts)>,
}

impl BerPoint {
    pub fn get(&self, algorithm: Algorithm) -> Option<&BerCounts> {
        self.counts.iter().find(|(a, _)| *a == algorithm).map(|(_, c)| c)
    }
}

#[derive(Debug, Clone)]
pub struct BerTable {
    pub points: Vec<BerPoint>,
    pub csv: String,
}

/// Full-system BER experiment: for every SNR and trial the precoders are
/// designed at that SNR and the same symbol/noise stream is replayed for
/// every algorithm and SNR. CSV rows use metric `ber`, one per user
/// (`subcarrier = -1`) plus an aggregate with `user = -1`.
pub fn run_ber(
    base: &SystemConfig,
    spec: &BerSpec,
    algorithms: &[Algorithm],
    trials: usize,
    scenario: &ScenarioOptions,
    solver: &dyn ConicSolver,
) -> Result<BerTable> {
    spec.validate()?;
    base.validate()?;
    if trials == 0 || algorithms.is_empty() {
        return Err(Error::Config("BER needs at least one trial and one algorithm".into()));
    }
    let mut csv = String::new();
    csv.push_str(SWEEP_CSV_HEADER);
    csv.push('\n');
    let mut points = Vec::new();
    for &theta_db in &spec.theta_db {
        let mut cfg = base.clone();
        cfg.theta = db_to_linear(theta_db);
        let per_trial: Vec<Vec<(Algorithm, Option<BerCounts>)>> = (0..trials)
            .into_par_iter()
            .map(|t| -> Vec<(Algorithm, Option<BerCounts>)> {
                let outcome = run_trial(&cfg, algorithms, t, scenario, solver);
                let h = ChannelSet::generate(&cfg, &mut stream(cfg.seed, t as u64, Stream::Channel));
                algorithms
                    .iter()
                    .map(|&alg| {
                        let counts = match (&outcome, &h) {
                            (Ok(o), Ok(h)) => o.get(alg).and_then(|r| {
                                let mut rng = stream(cfg.seed, t as u64, Stream::Symbols);
                                simulate_ber(
                                    h,
                                    &r.run.analog_matrix(),
                                    &r.run.digital,
                                    cfg.theta,
                                    spec.symbols_per_trial,
                                    &mut rng,
                                )
                                .ok()
                            }),
                            _ => None,
                        };
                        (alg, counts)
                    })
                    .collect()
            })
            .collect();
        let mut totals: Vec<(Algorithm, BerCounts)> =
            algorithms.iter().map(|&a| (a, BerCounts::new(cfg.users))).collect();
        for (t, row) in per_trial.iter().enumerate() {
            for (i, (alg, counts)) in row.iter().enumerate() {
                match counts {
                    Some(c) => {
                        totals[i].1.merge(c);
                        for (u, v) in c.per_user().iter().enumerate() {
                            let _ = writeln!(csv, "{theta_db},{t},{alg},ber,{u},-1,{v}");
                        }
                        let _ = writeln!(csv, "{theta_db},{t},{alg},ber,-1,-1,{}", c.aggregate());
                    }
                    None => {
                        let _ = writeln!(csv, "{theta_db},{t},{alg},failed,-1,-1,1");
                    }
                }
            }
        }
        points.push(BerPoint {
            theta_db,
            counts: totals,
        });
    }
    Ok(BerTable { points, csv })
}
