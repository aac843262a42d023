//! Scenario dimensions, weights and channel statistics.

use serde::{Deserialize, Serialize};

use crate::linalg::db_to_linear;
use crate::{Error, Result};

/// How CMDD distributes the RF chains among users.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StreamAllocation {
    /// One dominant eigenvector per user, the rest to the globally largest
    /// remaining eigenvalues.
    #[default]
    Auto,
    /// Explicit per-user stream counts; must sum to `N_RF`, each `>= 1`.
    Fixed(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Transmit antennas `M`.
    pub antennas: usize,
    /// RF chains `N_RF`.
    pub rf_chains: usize,
    /// OFDM subcarriers `K`.
    pub subcarriers: usize,
    /// Single-antenna users `U`.
    pub users: usize,
    /// Transmit SNR, linear.
    pub theta: f64,
    /// Spectral-efficiency weights `z_u`, summing to one.
    pub weights: Vec<f64>,
    /// Delay taps `D`.
    pub delay_taps: usize,
    /// Clusters per user, `C_u`.
    pub clusters: Vec<usize>,
    pub scatterers_per_cluster: usize,
    pub angular_spread_deg: f64,
    /// Element spacing over wavelength.
    pub element_spacing: f64,
    pub seed: u64,
    pub stream_allocation: StreamAllocation,
}

pub const DEFAULT_THETA_DB: f64 = 10.0;
pub const DEFAULT_DELAY_TAPS: usize = 8;
pub const DEFAULT_CLUSTERS: usize = 5;
pub const DEFAULT_SCATTERERS: usize = 10;
pub const DEFAULT_ANGULAR_SPREAD_DEG: f64 = 10.0;
pub const DEFAULT_ELEMENT_SPACING: f64 = 0.5;

const WEIGHT_SUM_TOL: f64 = 1e-12;

impl SystemConfig {
    /// Scenario with the default channel statistics, equal weights and a
    /// transmit SNR of 10 dB. `D` defaults to `min(8, K)`.
    pub fn new(antennas: usize, rf_chains: usize, subcarriers: usize, users: usize) -> Self {
        let weights = vec![1.0 / users.max(1) as f64; users];
        SystemConfig {
            antennas,
            rf_chains,
            subcarriers,
            users,
            theta: db_to_linear(DEFAULT_THETA_DB),
            weights,
            delay_taps: DEFAULT_DELAY_TAPS.min(subcarriers.max(1)),
            clusters: vec![DEFAULT_CLUSTERS; users],
            scatterers_per_cluster: DEFAULT_SCATTERERS,
            angular_spread_deg: DEFAULT_ANGULAR_SPREAD_DEG,
            element_spacing: DEFAULT_ELEMENT_SPACING,
            seed: 0,
            stream_allocation: StreamAllocation::Auto,
        }
    }

    /// The desk-scale preset: `M = 16, K = 16, U = 2, N_RF = 4`.
    pub fn desk() -> Self {
        SystemConfig::new(16, 4, 16, 2)
    }

    /// The large preset `M = 64, K = 64, U = 8, N_RF = 8`.
    pub fn full_scale() -> Self {
        SystemConfig::new(64, 8, 64, 8)
    }

    pub fn with_theta_db(mut self, db: f64) -> Self {
        self.theta = db_to_linear(db);
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_delay_taps(mut self, d: usize) -> Self {
        self.delay_taps = d;
        self
    }

    pub fn with_clusters(mut self, clusters: usize, scatterers: usize) -> Self {
        self.clusters = vec![clusters; self.users];
        self.scatterers_per_cluster = scatterers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.antennas == 0 {
            return bad("M must be positive".into());
        }
        if self.rf_chains == 0 || self.rf_chains > self.antennas {
            return bad(format!(
                "N_RF = {} must satisfy 1 <= N_RF <= M = {}",
                self.rf_chains, self.antennas
            ));
        }
        if self.users == 0 || self.users > self.rf_chains {
            return bad(format!(
                "U = {} must satisfy 1 <= U <= N_RF = {}",
                self.users, self.rf_chains
            ));
        }
        if self.subcarriers == 0 {
            return bad("K must be positive".into());
        }
        if self.delay_taps == 0 || self.delay_taps > self.subcarriers {
            return bad(format!(
                "D = {} must satisfy 1 <= D <= K = {}",
                self.delay_taps, self.subcarriers
            ));
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return bad(format!("theta must be positive and finite, got {}", self.theta));
        }
        validate_weights(&self.weights, self.users)?;
        if self.clusters.len() != self.users || self.clusters.iter().any(|&c| c == 0) {
            return bad("clusters must list a positive count for every user".into());
        }
        if self.scatterers_per_cluster == 0 {
            return bad("scatterers_per_cluster must be positive".into());
        }
        if !(self.angular_spread_deg >= 0.0 && self.angular_spread_deg.is_finite()) {
            return bad("angular_spread_deg must be non-negative".into());
        }
        if !(self.element_spacing > 0.0 && self.element_spacing.is_finite()) {
            return bad("element_spacing must be positive".into());
        }
        if let StreamAllocation::Fixed(n) = &self.stream_allocation {
            if n.len() != self.users
                || n.iter().any(|&v| v == 0 || v > self.antennas)
                || n.iter().sum::<usize>() != self.rf_chains
            {
                return bad(format!(
                    "fixed stream allocation {n:?} must give every user 1..=M streams summing to N_RF = {}",
                    self.rf_chains
                ));
            }
        }
        Ok(())
    }
}

/// Weights must lie in (0, 1) and sum to one. A single user carries weight 1.
pub fn validate_weights(weights: &[f64], users: usize) -> Result<()> {
    if weights.len() != users {
        return Err(Error::Config(format!(
            "expected {users} weights, got {}",
            weights.len()
        )));
    }
    if users == 1 {
        if (weights[0] - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Config("a single user must have weight 1".into()));
        }
        return Ok(());
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && **w < 1.0)) {
        return Err(Error::Config(format!("weight {w} outside (0, 1)")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::Config(format!("weights sum to {sum}, expected 1")));
    }
    Ok(())
}
