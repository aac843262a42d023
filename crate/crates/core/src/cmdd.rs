//! Closed-form hybrid precoding from the users' channel eigenvectors.
//!
//! Each user's wideband channel `H_u` (`M x K`, one column per subcarrier) is
//! summarized by the eigenvectors of `H_u H_u^H`. Every user keeps its
//! dominant eigenvector, the remaining RF chains go to the largest remaining
//! eigenvalues across users, and the selected eigenvectors are projected onto
//! the constant-modulus set to form the analog precoder. Digital precoders
//! are per-subcarrier regularized weighted-MMSE solutions on the effective
//! channel.
//!
//! The allocation maximizes the sum of the selected eigenvalues `rho` of
//! `H_u H_u^H`. Ranking by `rho^2` would pick the same eigenvectors since the
//! eigenvalues are non-negative.

use rayon::prelude::*;

use crate::channel::ChannelSet;
use crate::config::{StreamAllocation, SystemConfig};
use crate::digital::normalize_digital;
use crate::linalg::{solve_hpd, CMatrix, Complex64};
use crate::metrics::{AnalogPrecoder, DigitalPrecoderSet};
use crate::{Error, Result};

/// Eigen-decomposition of one user's channel covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    /// Eigenvalues, descending and non-negative.
    pub rho: Vec<f64>,
    /// Matching unit-norm eigenvectors as columns.
    pub vectors: CMatrix,
}

/// Eigenvalues and eigenvectors of `H_u H_u^H`, sorted descending. Tiny
/// negative eigenvalues from rounding are clamped to zero.
pub fn user_eigs(h_u: &CMatrix) -> EigenBasis {
    let cov = h_u * h_u.adjoint();
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let rho = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = CMatrix::from_fn(h_u.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    EigenBasis { rho, vectors }
}

/// Stream counts `N_u >= 1` summing to `n_rf` that maximize the total of the
/// selected eigenvalues. Ties go to the lower user index, then the lower
/// eigen-index.
pub fn allocate_streams(rhos: &[Vec<f64>], n_rf: usize) -> Result<Vec<usize>> {
    let users = rhos.len();
    if users == 0 || n_rf < users {
        return Err(Error::Config(format!(
            "{n_rf} RF chains cannot serve {users} users"
        )));
    }
    let available: usize = rhos.iter().map(|r| r.len()).sum();
    if rhos.iter().any(|r| r.is_empty()) || available < n_rf {
        return Err(Error::Config(format!(
            "{available} eigenvectors cannot fill {n_rf} RF chains"
        )));
    }
    let mut pool: Vec<(f64, usize, usize)> = rhos
        .iter()
        .enumerate()
        .flat_map(|(u, r)| r.iter().enumerate().skip(1).map(move |(i, v)| (*v, u, i)))
        .collect();
    pool.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut counts = vec![1; users];
    for &(_, u, _) in pool.iter().take(n_rf - users) {
        counts[u] += 1;
    }
    Ok(counts)
}

/// `F(i, j) = P(i, j) / |P(i, j)| / sqrt(M)`; zero entries get phase 0.
pub fn phase_project(p: &CMatrix) -> CMatrix {
    unit_phases(p) / Complex64::from((p.nrows() as f64).sqrt())
}

fn unit_phases(p: &CMatrix) -> CMatrix {
    p.map(|v| {
        let n = v.norm();
        if n > 0.0 {
            v / n
        } else {
            Complex64::new(1.0, 0.0)
        }
    })
}

/// Unnormalized regularized weighted-MMSE precoder
/// `V = (G Z^2 G^H + I/theta)^{-1} G Z`.
pub fn mmse_digital_cmdd(g: &CMatrix, z: &[f64], theta: f64) -> Result<CMatrix> {
    let (n_rf, users) = g.shape();
    if z.len() != users {
        return Err(Error::Dimension(format!("{} weights for {users} users", z.len())));
    }
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("theta {theta} is not positive")));
    }
    let gz = CMatrix::from_fn(n_rf, users, |n, u| g[(n, u)] * z[u]);
    let system = &gz * gz.adjoint() + CMatrix::identity(n_rf, n_rf) / Complex64::from(theta);
    solve_hpd(system, &gz)
}

/// Complete CMDD design for a channel realization.
pub fn cmdd_precode(h: &ChannelSet, cfg: &SystemConfig) -> Result<(AnalogPrecoder, DigitalPrecoderSet)> {
    if h.antennas() != cfg.antennas || h.users() != cfg.users || h.subcarriers() != cfg.subcarriers {
        return Err(Error::Dimension("channel does not match the configuration".into()));
    }
    let bases: Vec<EigenBasis> = (0..h.users())
        .into_par_iter()
        .map(|u| user_eigs(&h.user_matrix(u)))
        .collect();
    let counts = match &cfg.stream_allocation {
        StreamAllocation::Auto => {
            let rhos: Vec<Vec<f64>> = bases.iter().map(|b| b.rho.clone()).collect();
            allocate_streams(&rhos, cfg.rf_chains)?
        }
        StreamAllocation::Fixed(n) => {
            if n.len() != h.users()
                || n.iter().any(|&c| c == 0 || c > h.antennas())
                || n.iter().sum::<usize>() != cfg.rf_chains
            {
                return Err(Error::Config(format!("invalid fixed stream allocation {n:?}")));
            }
            n.clone()
        }
    };
    let mut selected = CMatrix::zeros(h.antennas(), cfg.rf_chains);
    let mut col = 0;
    for (basis, &count) in bases.iter().zip(&counts) {
        for i in 0..count {
            selected.set_column(col, &basis.vectors.column(i));
            col += 1;
        }
    }
    let analog = AnalogPrecoder::from_unit_modulus(unit_phases(&selected))?;
    let f = analog.matrix();
    let w = h
        .matrices()
        .par_iter()
        .map(|h_k| {
            let g = f.adjoint() * h_k;
            let v = mmse_digital_cmdd(&g, &cfg.weights, cfg.theta)?;
            normalize_digital(&v, f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((analog, DigitalPrecoderSet::new(w)?))
}
