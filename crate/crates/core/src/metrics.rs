//! Rates, MMSE receivers, MSEs and the AM/GM gap of the per-user MSEs.
//!
//! All functions take the *physical* analog precoder `F` (entries of modulus
//! `1/sqrt(M)` for hybrid designs, the identity for fully digital ones).

use std::f64::consts::LN_2;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::linalg::{max_modulus_error, CMatrix, Complex64};
use crate::{Error, Result};

/// Unit-modulus entries closer than this to 1 are accepted as on the manifold.
pub const MODULUS_TOL: f64 = 1e-12;

/// Constant-modulus analog precoder.
///
/// Stored as a unit-modulus matrix `X`; the physical precoder is
/// `F = X / sqrt(M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogPrecoder {
    x: CMatrix,
    f: CMatrix,
}

impl AnalogPrecoder {
    pub fn from_unit_modulus(x: CMatrix) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Dimension("empty analog precoder".into()));
        }
        let err = max_modulus_error(x.iter());
        if err > MODULUS_TOL {
            return Err(Error::Contract(format!(
                "analog precoder entries deviate from unit modulus by {err:e}"
            )));
        }
        let f = &x / Complex64::from((x.nrows() as f64).sqrt());
        Ok(AnalogPrecoder { x, f })
    }

    /// Entry `(i, n)` becomes `exp(j phases[(i, n)])`.
    pub fn from_phases(phases: &nalgebra::DMatrix<f64>) -> Result<Self> {
        Self::from_unit_modulus(phases.map(|p| Complex64::from_polar(1.0, p)))
    }

    /// Independent uniform phases.
    pub fn random<R: Rng + ?Sized>(antennas: usize, rf_chains: usize, rng: &mut R) -> Self {
        let phases =
            nalgebra::DMatrix::from_fn(antennas, rf_chains, |_, _| rng.gen::<f64>() * std::f64::consts::TAU);
        Self::from_phases(&phases).expect("unit modulus by construction")
    }

    pub fn unit_modulus(&self) -> &CMatrix {
        &self.x
    }

    /// Physical precoder `F`.
    pub fn matrix(&self) -> &CMatrix {
        &self.f
    }

    pub fn antennas(&self) -> usize {
        self.x.nrows()
    }

    pub fn rf_chains(&self) -> usize {
        self.x.ncols()
    }
}

/// Per-subcarrier digital precoders `W[k]` (`N_RF x U`).
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalPrecoderSet {
    w: Vec<CMatrix>,
}

impl DigitalPrecoderSet {
    pub fn new(w: Vec<CMatrix>) -> Result<Self> {
        let shape = w
            .first()
            .map(|m| m.shape())
            .ok_or_else(|| Error::Dimension("digital precoder set needs a subcarrier".into()))?;
        if w.iter().any(|m| m.shape() != shape) {
            return Err(Error::Dimension("digital precoders differ in shape".into()));
        }
        Ok(DigitalPrecoderSet { w })
    }

    pub fn subcarrier(&self, k: usize) -> &CMatrix {
        &self.w[k]
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.w
    }

    pub fn into_matrices(self) -> Vec<CMatrix> {
        self.w
    }

    pub fn subcarriers(&self) -> usize {
        self.w.len()
    }

    /// `max_{u,k} | ||F w_u[k]|| - 1 |`.
    pub fn max_power_error(&self, f: &CMatrix) -> f64 {
        self.w
            .iter()
            .flat_map(|w| {
                let fw = f * w;
                (0..fw.ncols()).map(move |u| (fw.column(u).norm() - 1.0).abs())
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn column(m: &CMatrix, u: usize) -> &[Complex64] {
    let n = m.nrows();
    &m.as_slice()[u * n..(u + 1) * n]
}

/// `a_j = g^H w_j` for every column of `W`.
fn combine(g: &[Complex64], w: &CMatrix) -> Vec<Complex64> {
    (0..w.ncols())
        .map(|j| {
            column(w, j)
                .iter()
                .zip(g)
                .map(|(wv, gv)| gv.conj() * wv)
                .sum()
        })
        .collect()
}

/// Signal power `|a_u|^2` and interference-plus-noise `sum_{j != u} |a_j|^2 + 1/theta`.
fn signal_and_interference(a: &[Complex64], u: usize, theta: f64) -> (f64, f64) {
    let signal = a[u].norm_sqr();
    let interference: f64 = a
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != u)
        .map(|(_, v)| v.norm_sqr())
        .sum();
    (signal, interference + 1.0 / theta)
}

/// `G[k] = F^H H[k]`.
pub fn effective_channel(h_k: &CMatrix, f: &CMatrix) -> Result<CMatrix> {
    if h_k.nrows() != f.nrows() {
        return Err(Error::Dimension(format!(
            "channel has {} antennas, precoder {}",
            h_k.nrows(),
            f.nrows()
        )));
    }
    Ok(f.adjoint() * h_k)
}

/// Spectral efficiency of user `u` on one subcarrier, bits/s/Hz.
pub fn user_rate(h_k: &CMatrix, f: &CMatrix, w_k: &CMatrix, u: usize, theta: f64) -> f64 {
    let g = f.adjoint() * h_k.column(u);
    rate_from_effective(g.as_slice(), w_k, u, theta)
}

pub(crate) fn rate_from_effective(g_u: &[Complex64], w_k: &CMatrix, u: usize, theta: f64) -> f64 {
    let a = combine(g_u, w_k);
    let (s, i) = signal_and_interference(&a, u, theta);
    if s == 0.0 {
        return 0.0;
    }
    (s / i).ln_1p() / LN_2
}

/// `sum_u z_u R_u[k]` on one subcarrier.
pub fn weighted_rate_at(h_k: &CMatrix, f: &CMatrix, w_k: &CMatrix, z: &[f64], theta: f64) -> f64 {
    let g = f.adjoint() * h_k;
    (0..z.len())
        .map(|u| z[u] * rate_from_effective(column(&g, u), w_k, u, theta))
        .sum()
}

/// `sum_k sum_u z_u R_u[k]`.
pub fn weighted_sum_rate(
    h: &ChannelSet,
    f: &CMatrix,
    w: &DigitalPrecoderSet,
    z: &[f64],
    theta: f64,
) -> f64 {
    h.matrices()
        .iter()
        .zip(w.matrices())
        .map(|(h_k, w_k)| weighted_rate_at(h_k, f, w_k, z, theta))
        .sum()
}

/// Normalizes arbitrary positive weights `l` into `z = l / sum(l)`; also
/// returns `sum(l)`, the factor that maps the normalized objective back.
pub fn renormalize_weights(l: &[f64]) -> Result<(Vec<f64>, f64)> {
    if l.is_empty() {
        return Err(Error::Domain("no weights given".into()));
    }
    if let Some(v) = l.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("weight {v} is not strictly positive")));
    }
    let scale: f64 = l.iter().sum();
    Ok((l.iter().map(|v| v / scale).collect(), scale))
}

/// Scalar MMSE receiver `b_u = (g^H W W^H g + 1/theta)^{-1} g^H w_u`.
pub fn mmse_receiver(g_u: &[Complex64], w_k: &CMatrix, u: usize, theta: f64) -> Complex64 {
    let a = combine(g_u, w_k);
    let total: f64 = a.iter().map(|v| v.norm_sqr()).sum::<f64>() + 1.0 / theta;
    if total == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    a[u] / total
}

/// MMSE of user `u` with the MMSE receiver,
/// `1 - w_u^H g (g^H W W^H g + 1/theta)^{-1} g^H w_u`.
///
/// Evaluated as `(interference + noise) / (total)` to avoid cancellation when
/// the MSE is small.
pub fn user_mse(g_u: &[Complex64], w_k: &CMatrix, u: usize, theta: f64) -> f64 {
    let a = combine(g_u, w_k);
    let (s, i) = signal_and_interference(&a, u, theta);
    if s + i == 0.0 {
        return 1.0;
    }
    i / (s + i)
}

/// MSE of user `u` for an arbitrary (not necessarily MMSE) receiver `b`:
/// `E|b^* y - s|^2`.
pub fn user_mse_with_receiver(
    g_u: &[Complex64],
    w_k: &CMatrix,
    u: usize,
    b: Complex64,
    theta: f64,
) -> f64 {
    let a = combine(g_u, w_k);
    let mut mse = b.norm_sqr() / theta;
    for (j, aj) in a.iter().enumerate() {
        let target = if j == u { 1.0 } else { 0.0 };
        mse += (b.conj() * aj - target).norm_sqr();
    }
    mse
}

pub fn sinr_from_mse(xi: f64) -> Result<f64> {
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(Error::Domain(format!("MSE {xi} outside (0, 1]")));
    }
    Ok(1.0 / xi - 1.0)
}

/// Weighted geometric mean `prod xi_u^{z_u}`.
pub fn weighted_geometric_mean(xi: &[f64], z: &[f64]) -> f64 {
    xi.iter()
        .zip(z)
        .map(|(x, w)| w * x.ln())
        .sum::<f64>()
        .exp()
}

pub fn weighted_arithmetic_mean(xi: &[f64], z: &[f64]) -> f64 {
    xi.iter().zip(z).map(|(x, w)| w * x).sum()
}

/// Relative gap `(AM - GM) / GM` between the weighted arithmetic and
/// geometric means of the MSEs.
pub fn amgm_gap(xi: &[f64], z: &[f64]) -> Result<f64> {
    if xi.len() != z.len() || xi.is_empty() {
        return Err(Error::Dimension(format!(
            "{} MSEs against {} weights",
            xi.len(),
            z.len()
        )));
    }
    if let Some(x) = xi.iter().find(|x| !(**x > 0.0)) {
        return Err(Error::Domain(format!("MSE {x} is not positive")));
    }
    let gm = weighted_geometric_mean(xi, z);
    let am = weighted_arithmetic_mean(xi, z);
    Ok((am - gm) / gm)
}

/// Upper bound `(o - 1)^2 / 8` on the AM/GM gap, `o = max SINR / min SINR`.
pub fn amgm_gap_bound(sinr: &[f64]) -> Result<f64> {
    let min = sinr.iter().copied().fold(f64::INFINITY, f64::min);
    let max = sinr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if sinr.is_empty() || !(min > 0.0) {
        return Err(Error::Domain(format!(
            "SINR ratio undefined for minimum SINR {min}"
        )));
    }
    let o = max / min;
    Ok((o - 1.0) * (o - 1.0) / 8.0)
}

/// Per-user, per-subcarrier link metrics of one precoder design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `rate[u][k]`, bits/s/Hz.
    pub rate: Vec<Vec<f64>>,
    pub mse: Vec<Vec<f64>>,
    pub sinr: Vec<Vec<f64>>,
    pub receivers: Vec<Vec<Complex64>>,
    /// AM/GM gap per subcarrier.
    pub iota: Vec<f64>,
    /// SINR-spread bound per subcarrier; `None` when some SINR is zero.
    pub bound: Vec<Option<f64>>,
    pub weighted_sum_rate: f64,
}

pub const METRICS_CSV_HEADER: &str = "trial,k,u,rate,mse,sinr,iota,bound";

impl MetricsReport {
    pub fn users(&self) -> usize {
        self.rate.len()
    }

    pub fn subcarriers(&self) -> usize {
        self.iota.len()
    }

    /// Mean of `rate[u][k]` over subcarriers, per user.
    pub fn mean_user_rates(&self) -> Vec<f64> {
        self.rate
            .iter()
            .map(|r| r.iter().sum::<f64>() / r.len() as f64)
            .collect()
    }

    /// Rows (no header) in `k`-major order.
    pub fn write_csv_rows<W: Write>(&self, trial: usize, out: &mut W) -> std::io::Result<()> {
        for k in 0..self.subcarriers() {
            for u in 0..self.users() {
                let bound = self.bound[k].map(|b| b.to_string()).unwrap_or_default();
                writeln!(
                    out,
                    "{trial},{k},{u},{},{},{},{},{bound}",
                    self.rate[u][k], self.mse[u][k], self.sinr[u][k], self.iota[k]
                )?;
            }
        }
        Ok(())
    }
}

/// Evaluates a complete design on a channel.
pub fn evaluate(
    h: &ChannelSet,
    f: &CMatrix,
    w: &DigitalPrecoderSet,
    z: &[f64],
    theta: f64,
) -> Result<MetricsReport> {
    let (users, subcarriers) = (h.users(), h.subcarriers());
    if w.subcarriers() != subcarriers || z.len() != users {
        return Err(Error::Dimension(format!(
            "{} precoders and {} weights for {subcarriers} subcarriers and {users} users",
            w.subcarriers(),
            z.len()
        )));
    }
    let mut report = MetricsReport {
        rate: vec![vec![0.0; subcarriers]; users],
        mse: vec![vec![0.0; subcarriers]; users],
        sinr: vec![vec![0.0; subcarriers]; users],
        receivers: vec![vec![Complex64::new(0.0, 0.0); subcarriers]; users],
        iota: vec![0.0; subcarriers],
        bound: vec![None; subcarriers],
        weighted_sum_rate: 0.0,
    };
    for k in 0..subcarriers {
        let w_k = w.subcarrier(k);
        if w_k.nrows() != f.ncols() || w_k.ncols() != users {
            return Err(Error::Dimension("digital precoder shape".into()));
        }
        let g = effective_channel(h.subcarrier(k), f)?;
        let mut xi = vec![0.0; users];
        let mut sinr = vec![0.0; users];
        for u in 0..users {
            let g_u = column(&g, u);
            let rate = rate_from_effective(g_u, w_k, u, theta);
            xi[u] = user_mse(g_u, w_k, u, theta);
            sinr[u] = sinr_from_mse(xi[u])?;
            report.rate[u][k] = rate;
            report.mse[u][k] = xi[u];
            report.sinr[u][k] = sinr[u];
            report.receivers[u][k] = mmse_receiver(g_u, w_k, u, theta);
            report.weighted_sum_rate += z[u] * rate;
        }
        report.iota[k] = amgm_gap(&xi, z)?;
        report.bound[k] = amgm_gap_bound(&sinr).ok();
    }
    Ok(report)
}
