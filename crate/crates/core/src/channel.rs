//! Clustered geometric channels for a ULA base station, their OFDM frequency
//! response, and the imperfect-CSI models.
//!
//! Sampling period `T` is fixed to 1, so delays are in units of samples.

use std::f64::consts::{PI, TAU};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::linalg::{crandn, crandn_vector, CMatrix, CVector, Complex64};
use crate::{Error, Result};

/// ULA response `a(theta)`, element `m` equal to
/// `exp(-j 2 pi spacing m sin(theta)) / sqrt(M)`.
pub fn array_response(theta: f64, antennas: usize, spacing: f64) -> Result<CVector> {
    if antennas == 0 {
        return Err(Error::Dimension("array needs at least one element".into()));
    }
    let scale = 1.0 / (antennas as f64).sqrt();
    let phase_step = -TAU * spacing * theta.sin();
    Ok(CVector::from_iterator(
        antennas,
        (0..antennas).map(|m| Complex64::from_polar(scale, phase_step * m as f64)),
    ))
}

/// Rectangular pulse supported on `[-T, 0)`.
pub fn pulse_shape(tau: f64, period: f64) -> f64 {
    if -period <= tau && tau < 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Random draws of one cluster: its delay and the AOD / complex gain of every
/// scatterer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDraw {
    pub delay: f64,
    pub aods: Vec<f64>,
    pub gains: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeDomainChannel {
    antennas: usize,
    /// `taps[u][d]`, each of length `M`.
    taps: Vec<Vec<CVector>>,
    clusters: Vec<Vec<ClusterDraw>>,
}

impl TimeDomainChannel {
    /// Builds the delay taps `h_ud` from explicit cluster draws.
    pub fn from_draws(
        antennas: usize,
        delay_taps: usize,
        spacing: f64,
        clusters: Vec<Vec<ClusterDraw>>,
    ) -> Result<Self> {
        if delay_taps == 0 {
            return Err(Error::Config("need at least one delay tap".into()));
        }
        let mut taps = Vec::with_capacity(clusters.len());
        for user_clusters in &clusters {
            if user_clusters.is_empty() {
                return Err(Error::Config("every user needs at least one cluster".into()));
            }
            let scatterers = user_clusters[0].aods.len();
            if user_clusters
                .iter()
                .any(|c| c.aods.len() != scatterers || c.gains.len() != scatterers || scatterers == 0)
            {
                return Err(Error::Dimension(
                    "clusters of a user must share a non-zero scatterer count".into(),
                ));
            }
            let norm = (antennas as f64 / (user_clusters.len() * scatterers) as f64).sqrt();
            // cluster responses do not depend on the tap
            let responses = user_clusters
                .iter()
                .map(|c| {
                    let mut acc = CVector::zeros(antennas);
                    for (&aod, &gain) in c.aods.iter().zip(&c.gains) {
                        acc += array_response(aod, antennas, spacing)? * gain;
                    }
                    Ok(acc)
                })
                .collect::<Result<Vec<_>>>()?;
            let user_taps = (0..delay_taps)
                .map(|d| {
                    let mut h = CVector::zeros(antennas);
                    for (c, resp) in user_clusters.iter().zip(&responses) {
                        let p = pulse_shape(d as f64 - c.delay, 1.0);
                        if p != 0.0 {
                            h += resp * Complex64::from(p);
                        }
                    }
                    h * Complex64::from(norm)
                })
                .collect();
            taps.push(user_taps);
        }
        Ok(TimeDomainChannel {
            antennas,
            taps,
            clusters,
        })
    }

    /// Builds a channel directly from tap vectors (no cluster provenance).
    pub fn from_taps(taps: Vec<Vec<CVector>>) -> Result<Self> {
        let antennas = taps
            .first()
            .and_then(|t| t.first())
            .map(|v| v.len())
            .ok_or_else(|| Error::Dimension("empty tap set".into()))?;
        let d = taps[0].len();
        if taps.iter().any(|t| t.len() != d || t.iter().any(|v| v.len() != antennas)) {
            return Err(Error::Dimension("ragged tap set".into()));
        }
        Ok(TimeDomainChannel {
            antennas,
            clusters: vec![Vec::new(); taps.len()],
            taps,
        })
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn users(&self) -> usize {
        self.taps.len()
    }

    pub fn delay_taps(&self) -> usize {
        self.taps.first().map_or(0, Vec::len)
    }

    pub fn tap(&self, user: usize, d: usize) -> &CVector {
        &self.taps[user][d]
    }

    pub fn clusters(&self, user: usize) -> &[ClusterDraw] {
        &self.clusters[user]
    }
}

/// Laplacian sample with zero mean and the given standard deviation.
fn laplace<R: Rng + ?Sized>(std_dev: f64, rng: &mut R) -> f64 {
    let scale = std_dev / std::f64::consts::SQRT_2;
    let u: f64 = rng.gen::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

/// Draws a clustered channel: delays `U[0, D)`, mean cluster angles
/// `U[0, 2 pi)`, Laplacian AOD spread around them (wrapped into `[0, 2 pi)`)
/// and CN(0, 1) path gains.
pub fn gen_geometric_channel<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<TimeDomainChannel> {
    cfg.validate()?;
    let spread = cfg.angular_spread_deg.to_radians();
    let d = cfg.delay_taps as f64;
    let clusters = cfg
        .clusters
        .iter()
        .map(|&count| {
            (0..count)
                .map(|_| {
                    let delay = rng.gen::<f64>() * d;
                    let mean = rng.gen::<f64>() * TAU;
                    let mut aods = Vec::with_capacity(cfg.scatterers_per_cluster);
                    let mut gains = Vec::with_capacity(cfg.scatterers_per_cluster);
                    for _ in 0..cfg.scatterers_per_cluster {
                        aods.push((mean + laplace(spread, rng)).rem_euclid(TAU));
                        gains.push(crandn(rng));
                    }
                    ClusterDraw { delay, aods, gains }
                })
                .collect()
        })
        .collect();
    TimeDomainChannel::from_draws(cfg.antennas, cfg.delay_taps, cfg.element_spacing, clusters)
}

/// Per-subcarrier channel matrices `H[k]` (`M x U`, column `u` is `h_u[k]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    matrices: Vec<CMatrix>,
}

impl ChannelSet {
    pub fn new(matrices: Vec<CMatrix>) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::Dimension("channel set needs a subcarrier".into()))?;
        let shape = first.shape();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::Dimension("empty channel matrix".into()));
        }
        if matrices.iter().any(|h| h.shape() != shape) {
            return Err(Error::Dimension("subcarrier matrices differ in shape".into()));
        }
        Ok(ChannelSet { matrices })
    }

    /// Draws the time-domain channel for `cfg` and converts it.
    pub fn generate<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<Self> {
        to_frequency(&gen_geometric_channel(cfg, rng)?, cfg.subcarriers)
    }

    pub fn subcarriers(&self) -> usize {
        self.matrices.len()
    }

    pub fn antennas(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn users(&self) -> usize {
        self.matrices[0].ncols()
    }

    pub fn subcarrier(&self, k: usize) -> &CMatrix {
        &self.matrices[k]
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    /// `H_u = [h_u[0], ..., h_u[K-1]]`, `M x K`.
    pub fn user_matrix(&self, user: usize) -> CMatrix {
        CMatrix::from_fn(self.antennas(), self.subcarriers(), |m, k| {
            self.matrices[k][(m, user)]
        })
    }

    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        put(BINARY_MAGIC)?;
        for v in [
            BINARY_VERSION,
            self.subcarriers() as u32,
            self.antennas() as u32,
            self.users() as u32,
        ] {
            put(&v.to_le_bytes())?;
        }
        for h in &self.matrices {
            for row in 0..h.nrows() {
                for col in 0..h.ncols() {
                    let v = h[(row, col)];
                    put(&v.re.to_le_bytes())?;
                    put(&v.im.to_le_bytes())?;
                }
            }
        }
        drop(put);
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let parse_err = |message: &str| Error::Parse {
            path: path.display().to_string(),
            message: message.to_string(),
        };
        if bytes.len() < 20 || &bytes[..4] != BINARY_MAGIC {
            return Err(parse_err("not a channel-set file"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        if word(0) != BINARY_VERSION {
            return Err(parse_err("unsupported channel-set version"));
        }
        let (k, m, u) = (word(1) as usize, word(2) as usize, word(3) as usize);
        if bytes.len() != 20 + k * m * u * 16 {
            return Err(parse_err("truncated channel-set payload"));
        }
        let mut values = bytes[20..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let matrices = (0..k)
            .map(|_| {
                let data: Vec<Complex64> = (0..m * u)
                    .map(|_| Complex64::new(values.next().unwrap(), values.next().unwrap()))
                    .collect();
                CMatrix::from_row_slice(m, u, &data)
            })
            .collect();
        ChannelSet::new(matrices)
    }

    /// CSV with header `k,row,col,re,im`, rows in row-major order within
    /// each subcarrier.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("k,row,col,re,im\n");
        for (k, h) in self.matrices.iter().enumerate() {
            for row in 0..h.nrows() {
                for col in 0..h.ncols() {
                    let v = h[(row, col)];
                    out.push_str(&format!("{k},{row},{col},{},{}\n", v.re, v.im));
                }
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.display().to_string(),
            message: format!("line {line}: {message}"),
        };
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(parse_err(i + 1, "expected 5 fields".into()));
            }
            let idx = |s: &str| s.parse::<usize>().map_err(|e| parse_err(i + 1, e.to_string()));
            let val = |s: &str| s.parse::<f64>().map_err(|e| parse_err(i + 1, e.to_string()));
            entries.push((
                idx(fields[0])?,
                idx(fields[1])?,
                idx(fields[2])?,
                Complex64::new(val(fields[3])?, val(fields[4])?),
            ));
        }
        let k = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
        let m = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
        let u = entries.iter().map(|e| e.2 + 1).max().unwrap_or(0);
        if entries.len() != k * m * u {
            return Err(parse_err(0, "incomplete channel-set table".into()));
        }
        let mut matrices = vec![CMatrix::zeros(m, u); k];
        for (kk, row, col, v) in entries {
            matrices[kk][(row, col)] = v;
        }
        ChannelSet::new(matrices)
    }
}

const BINARY_MAGIC: &[u8; 4] = b"HBCS";
const BINARY_VERSION: u32 = 1;

/// `h_u[k] = sum_d h_ud exp(-j 2 pi k d / K)` for `k = 0..K-1`.
pub fn to_frequency(td: &TimeDomainChannel, subcarriers: usize) -> Result<ChannelSet> {
    let d = td.delay_taps();
    if subcarriers < d || subcarriers == 0 {
        return Err(Error::Config(format!(
            "K = {subcarriers} must be at least the tap count D = {d}"
        )));
    }
    let (m, users) = (td.antennas(), td.users());
    let matrices = (0..subcarriers)
        .map(|k| {
            let twiddles: Vec<Complex64> = (0..d)
                .map(|dd| {
                    // reduce k*d mod K first to keep the phase argument small
                    let r = (k * dd) % subcarriers;
                    Complex64::from_polar(1.0, -2.0 * PI * r as f64 / subcarriers as f64)
                })
                .collect();
            let mut h = CMatrix::zeros(m, users);
            for u in 0..users {
                let mut col = h.column_mut(u);
                for (dd, tw) in twiddles.iter().enumerate() {
                    col.axpy(*tw, td.tap(u, dd), Complex64::from(1.0));
                }
            }
            h
        })
        .collect();
    ChannelSet::new(matrices)
}

/// Effective channels `G[k] = F^H H[k]` (`N_RF x U`).
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    matrices: Vec<CMatrix>,
}

impl EffectiveChannel {
    pub fn new(matrices: Vec<CMatrix>) -> Result<Self> {
        let shape = matrices
            .first()
            .map(|g| g.shape())
            .ok_or_else(|| Error::Dimension("effective channel needs a subcarrier".into()))?;
        if matrices.iter().any(|g| g.shape() != shape) {
            return Err(Error::Dimension("subcarrier matrices differ in shape".into()));
        }
        Ok(EffectiveChannel { matrices })
    }

    /// Computes `F^H H[k]` for every subcarrier; `f` is the physical precoder.
    pub fn from_analog(channel: &ChannelSet, f: &CMatrix) -> Result<Self> {
        let matrices = channel
            .matrices()
            .iter()
            .map(|h| crate::metrics::effective_channel(h, f))
            .collect::<Result<Vec<_>>>()?;
        EffectiveChannel::new(matrices)
    }

    pub fn subcarrier(&self, k: usize) -> &CMatrix {
        &self.matrices[k]
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    pub fn subcarriers(&self) -> usize {
        self.matrices.len()
    }
}

fn check_accuracy(varsigma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&varsigma) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "CSI accuracy {varsigma} outside [0, 1]"
        )))
    }
}

/// `h_hat = s h + sqrt(1 - s^2) e` with fresh `e ~ CN(0, I_M)` per user and
/// subcarrier.
pub fn corrupt_physical_csi<R: Rng + ?Sized>(
    channel: &ChannelSet,
    varsigma: f64,
    rng: &mut R,
) -> Result<ChannelSet> {
    check_accuracy(varsigma)?;
    let noise_scale = (1.0 - varsigma * varsigma).sqrt();
    let matrices = channel
        .matrices()
        .iter()
        .map(|h| {
            let mut out = h * Complex64::from(varsigma);
            for u in 0..h.ncols() {
                let e = crandn_vector(h.nrows(), rng);
                out.column_mut(u).axpy(Complex64::from(noise_scale), &e, Complex64::from(1.0));
            }
            out
        })
        .collect();
    ChannelSet::new(matrices)
}

/// `g_hat = s g + sqrt(1 - s^2) (||g|| / N_RF) e` with `e ~ CN(0, I_{N_RF})`.
pub fn corrupt_effective_csi<R: Rng + ?Sized>(
    effective: &EffectiveChannel,
    varsigma: f64,
    rng: &mut R,
) -> Result<EffectiveChannel> {
    check_accuracy(varsigma)?;
    let noise_scale = (1.0 - varsigma * varsigma).sqrt();
    let matrices = effective
        .matrices()
        .iter()
        .map(|g| {
            let n_rf = g.nrows() as f64;
            let mut out = g * Complex64::from(varsigma);
            for u in 0..g.ncols() {
                let e = crandn_vector(g.nrows(), rng);
                let scale = noise_scale * g.column(u).norm() / n_rf;
                out.column_mut(u).axpy(Complex64::from(scale), &e, Complex64::from(1.0));
            }
            out
        })
        .collect();
    EffectiveChannel::new(matrices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::crandn_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn broadside_response_is_flat() {
        let a = array_response(0.0, 4, 0.5).unwrap();
        for v in a.iter() {
            assert!((v - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn endfire_half_wavelength_alternates() {
        let a = array_response(PI / 2.0, 2, 0.5).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((a[0] - Complex64::new(s, 0.0)).norm() < 1e-15);
        assert!((a[1] - Complex64::new(-s, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn response_matches_scalar_loop() {
        let mut r = rng(1);
        for _ in 0..20 {
            let theta = r.gen::<f64>() * TAU;
            let a = array_response(theta, 8, 0.5).unwrap();
            for m in 0..8 {
                let arg = -2.0 * PI * 0.5 * m as f64 * theta.sin();
                let expect = Complex64::new(arg.cos(), arg.sin()) / 8f64.sqrt();
                assert!((a[m] - expect).norm() < 1e-14);
            }
            assert!((a.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_element_array_rejected() {
        assert!(matches!(array_response(0.3, 0, 0.5), Err(Error::Dimension(_))));
    }

    #[test]
    fn pulse_support_is_half_open() {
        assert_eq!(pulse_shape(-0.5, 1.0), 1.0);
        assert_eq!(pulse_shape(-1.0, 1.0), 1.0);
        assert_eq!(pulse_shape(0.0, 1.0), 0.0);
        assert_eq!(pulse_shape(-2.0, 1.0), 0.0);
    }

    fn single_path(delay: f64) -> Vec<Vec<ClusterDraw>> {
        vec![vec![ClusterDraw {
            delay,
            aods: vec![0.0],
            gains: vec![Complex64::new(1.0, 0.0)],
        }]]
    }

    #[test]
    fn cluster_at_zero_delay_falls_outside_pulse() {
        let td = TimeDomainChannel::from_draws(4, 1, 0.5, single_path(0.0)).unwrap();
        assert!(td.tap(0, 0).norm() == 0.0);
    }

    #[test]
    fn half_sample_delay_lands_in_first_tap() {
        // p(0 - 1/2) = 1, p(1 - 1/2) = 0
        let m = 4;
        let td = TimeDomainChannel::from_draws(m, 2, 0.5, single_path(0.5)).unwrap();
        let expect = array_response(0.0, m, 0.5).unwrap() * Complex64::from((m as f64).sqrt());
        assert!((td.tap(0, 0) - expect).norm() < 1e-14);
        assert!(td.tap(0, 1).norm() == 0.0);
    }

    #[test]
    fn taps_match_direct_formula() {
        let cfg = SystemConfig::new(6, 2, 8, 2).with_delay_taps(4).with_clusters(3, 4);
        let td = gen_geometric_channel(&cfg, &mut rng(5)).unwrap();
        for u in 0..2 {
            let cl = td.clusters(u);
            for d in 0..4 {
                for m in 0..6 {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for c in cl {
                        let p = if (d as f64 - c.delay) >= -1.0 && (d as f64 - c.delay) < 0.0 {
                            1.0
                        } else {
                            0.0
                        };
                        for (aod, g) in c.aods.iter().zip(&c.gains) {
                            let arg = -PI * m as f64 * aod.sin();
                            acc += g * p * Complex64::new(arg.cos(), arg.sin()) / 6f64.sqrt();
                        }
                    }
                    acc *= (6.0 / 12.0f64).sqrt();
                    assert!((td.tap(u, d)[m] - acc).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn draws_respect_statistics_ranges() {
        let cfg = SystemConfig::new(8, 2, 8, 2);
        let td = gen_geometric_channel(&cfg, &mut rng(2)).unwrap();
        for u in 0..2 {
            assert_eq!(td.clusters(u).len(), 5);
            for c in td.clusters(u) {
                assert!((0.0..8.0).contains(&c.delay));
                assert!(c.aods.iter().all(|a| (0.0..TAU).contains(a)));
            }
        }
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let cfg = SystemConfig::new(8, 2, 8, 2);
        let a = ChannelSet::generate(&cfg, &mut rng(11)).unwrap();
        let b = ChannelSet::generate(&cfg, &mut rng(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_tap_is_frequency_flat() {
        let mut r = rng(3);
        let td = TimeDomainChannel::from_taps(vec![vec![crandn_vector(4, &mut r)]]).unwrap();
        let ch = to_frequency(&td, 5).unwrap();
        for k in 1..5 {
            assert!((ch.subcarrier(k) - ch.subcarrier(0)).norm() < 1e-15);
        }
    }

    #[test]
    fn two_taps_two_bins() {
        let mut r = rng(4);
        let (h0, h1) = (crandn_vector(3, &mut r), crandn_vector(3, &mut r));
        let td = TimeDomainChannel::from_taps(vec![vec![h0.clone(), h1.clone()]]).unwrap();
        let ch = to_frequency(&td, 2).unwrap();
        assert!((ch.subcarrier(0).column(0) - (&h0 + &h1)).norm() < 1e-14);
        assert!((ch.subcarrier(1).column(0) - (&h0 - &h1)).norm() < 1e-14);
    }

    #[test]
    fn dft_matches_naive_oracle() {
        let mut r = rng(6);
        let taps: Vec<Vec<CVector>> = (0..3)
            .map(|_| (0..5).map(|_| crandn_vector(4, &mut r)).collect())
            .collect();
        let td = TimeDomainChannel::from_taps(taps.clone()).unwrap();
        let ch = to_frequency(&td, 8).unwrap();
        for k in 0..8 {
            for u in 0..3 {
                for m in 0..4 {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (d, tap) in taps[u].iter().enumerate() {
                        let arg = -2.0 * PI * (k * d) as f64 / 8.0;
                        acc += tap[m] * Complex64::new(arg.cos(), arg.sin());
                    }
                    assert!((ch.subcarrier(k)[(m, u)] - acc).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn too_few_subcarriers_rejected() {
        let mut r = rng(6);
        let td = TimeDomainChannel::from_taps(vec![(0..4).map(|_| crandn_vector(2, &mut r)).collect()])
            .unwrap();
        assert!(matches!(to_frequency(&td, 3), Err(Error::Config(_))));
    }

    fn random_set(r: &mut ChaCha8Rng) -> ChannelSet {
        ChannelSet::new((0..3).map(|_| crandn_matrix(4, 2, r)).collect()).unwrap()
    }

    #[test]
    fn perfect_csi_is_identity() {
        let mut r = rng(7);
        let ch = random_set(&mut r);
        assert_eq!(corrupt_physical_csi(&ch, 1.0, &mut r).unwrap(), ch);
        let g = EffectiveChannel::new(ch.matrices().to_vec()).unwrap();
        assert_eq!(corrupt_effective_csi(&g, 1.0, &mut r).unwrap(), g);
    }

    #[test]
    fn accuracy_outside_unit_interval_rejected() {
        let mut r = rng(7);
        let ch = random_set(&mut r);
        assert!(matches!(corrupt_physical_csi(&ch, 1.1, &mut r), Err(Error::Domain(_))));
        let g = EffectiveChannel::new(ch.matrices().to_vec()).unwrap();
        assert!(matches!(corrupt_effective_csi(&g, -0.1, &mut r), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_accuracy_is_pure_noise() {
        let mut r = rng(8);
        let ch = ChannelSet::new(vec![CMatrix::from_element(50, 40, Complex64::new(3.0, -2.0))])
            .unwrap();
        let out = corrupt_physical_csi(&ch, 0.0, &mut r).unwrap();
        let h = out.subcarrier(0);
        let n = (h.nrows() * h.ncols()) as f64;
        let mean: Complex64 = h.iter().sum::<Complex64>() / n;
        let var = h.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / n;
        assert!(mean.norm() < 0.1, "{mean}");
        assert!((var - 1.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn partial_accuracy_mean_is_scaled_channel() {
        let mut r = rng(9);
        let h = crandn_matrix(2, 1, &mut r);
        let ch = ChannelSet::new(vec![h.clone()]).unwrap();
        let n = 10_000;
        let mut acc = CMatrix::zeros(2, 1);
        for _ in 0..n {
            acc += corrupt_physical_csi(&ch, 0.9, &mut r).unwrap().subcarrier(0);
        }
        acc /= Complex64::from(n as f64);
        // per-component std of the mean: sqrt((1 - 0.81) / 2 / n)
        let sigma = ((1.0 - 0.81) / 2.0 / n as f64).sqrt();
        for (a, b) in acc.iter().zip(h.iter()) {
            let d = a - b * 0.9;
            assert!(d.re.abs() < 4.0 * sigma && d.im.abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn effective_error_scales_with_channel_norm() {
        let mut r = rng(10);
        let g = EffectiveChannel::new(vec![CMatrix::zeros(3, 2)]).unwrap();
        let out = corrupt_effective_csi(&g, 0.3, &mut r).unwrap();
        assert_eq!(out.subcarrier(0).norm(), 0.0);

        // error variance per element = (1 - s^2) ||g||^2 / N_RF^2
        let n_rf = 4;
        let col = crandn_matrix(n_rf, 1, &mut r);
        let g = EffectiveChannel::new(vec![col.clone()]).unwrap();
        let s: f64 = 0.95;
        let trials = 20_000;
        let mut second = 0.0;
        for _ in 0..trials {
            let out = corrupt_effective_csi(&g, s, &mut r).unwrap();
            second += (out.subcarrier(0) - &col * Complex64::from(s)).norm_squared();
        }
        let measured = second / (trials * n_rf) as f64;
        let expected = (1.0 - s * s) * col.norm_squared() / (n_rf * n_rf) as f64;
        assert!((measured / expected - 1.0).abs() < 0.05, "{measured} vs {expected}");
    }

    #[test]
    fn binary_and_csv_roundtrip() {
        let mut r = rng(12);
        let ch = random_set(&mut r);
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("h.bin");
        ch.write_binary(&bin).unwrap();
        assert_eq!(ChannelSet::read_binary(&bin).unwrap(), ch);
        let csv = dir.path().join("h.csv");
        ch.write_csv(&csv).unwrap();
        assert_eq!(ChannelSet::read_csv(&csv).unwrap(), ch);
    }
}
