//! Per-subcarrier digital precoding for a fixed analog precoder.
//!
//! Two iterative designs are provided. [`locally_optimal_digital`] minimizes
//! the weighted geometric mean `prod_u xi_u^{z_u}` of the MMSE receivers'
//! MSEs through a sequence of second-order-cone programs; by the MSE/rate
//! duality this is a local maximization of `sum_u z_u R_u`.
//! [`wmmse_digital`] minimizes the weighted arithmetic mean `sum_u z_u xi_u`
//! with closed-form updates, which is cheaper and loses little when the MSEs
//! are balanced.
//!
//! The `K` subcarrier problems are independent; [`design_digital`] solves them
//! in parallel.

mod factors;
mod locally_optimal;
mod socp;
mod wmmse;

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::EffectiveChannel;
use crate::linalg::{CMatrix, Complex64};
use crate::metrics::{column, mmse_receiver, user_mse, DigitalPrecoderSet};
use crate::{Error, Result};

pub use factors::{update_factors, FactorSet};
pub use locally_optimal::{locally_optimal_digital, locally_optimal_from};
pub use socp::{build_socp, socp_residual, solve_socp_step, ClarabelSolver, ConicProblem, ConicSolution, ConicSolver};
pub use wmmse::{wmmse_digital, wmmse_from, wmmse_step};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DigitalOptions {
    /// Relative objective change below which the iteration stops.
    pub omega: f64,
    pub max_iters: usize,
}

impl DigitalOptions {
    pub fn locally_optimal() -> Self {
        DigitalOptions {
            omega: 1e-4,
            max_iters: 100,
        }
    }

    pub fn wmmse() -> Self {
        DigitalOptions {
            omega: 1e-4,
            max_iters: 500,
        }
    }
}

/// Result of one per-subcarrier digital design.
#[derive(Debug, Clone)]
pub struct DigitalOutcome {
    /// Best iterate, normalized to `||F w_u|| = 1`.
    pub w: CMatrix,
    /// Objective of `w` (weighted GM or AM of the MSEs).
    pub objective: f64,
    /// Objective of the initial point and of every iterate.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Scales every column to `||F w_u|| = 1`.
pub fn normalize_digital(v: &CMatrix, f: &CMatrix) -> Result<CMatrix> {
    if v.nrows() != f.ncols() {
        return Err(Error::Dimension(format!(
            "digital precoder has {} rows, analog precoder {} columns",
            v.nrows(),
            f.ncols()
        )));
    }
    let mut w = v.clone();
    for u in 0..w.ncols() {
        let norm = (f * v.column(u)).norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::DegenerateColumn { user: u });
        }
        w.column_mut(u).scale_mut(1.0 / norm);
    }
    Ok(w)
}

/// Entries with real and imaginary parts uniform on `(-1, 1)`, normalized;
/// degenerate draws are repeated.
pub fn random_digital_init<R: Rng + ?Sized>(f: &CMatrix, users: usize, rng: &mut R) -> CMatrix {
    loop {
        let v = CMatrix::from_fn(f.ncols(), users, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        if let Ok(w) = normalize_digital(&v, f) {
            return w;
        }
    }
}

/// Independent random initializations for every subcarrier.
pub fn random_digital_set<R: Rng + ?Sized>(
    f: &CMatrix,
    users: usize,
    subcarriers: usize,
    rng: &mut R,
) -> DigitalPrecoderSet {
    DigitalPrecoderSet::new(
        (0..subcarriers)
            .map(|_| random_digital_init(f, users, rng))
            .collect(),
    )
    .expect("nonempty set of equal shapes")
}

/// MMSE receivers of all users on one subcarrier, `g` being `F^H H[k]`.
pub fn receivers(g: &CMatrix, w: &CMatrix, theta: f64) -> Vec<Complex64> {
    (0..g.ncols())
        .map(|u| mmse_receiver(column(g, u), w, u, theta))
        .collect()
}

/// MSEs of all users under MMSE reception.
pub fn mses(g: &CMatrix, w: &CMatrix, theta: f64) -> Vec<f64> {
    (0..g.ncols())
        .map(|u| user_mse(column(g, u), w, u, theta))
        .collect()
}

pub(crate) fn weighted_gm(xi: &[f64], z: &[f64]) -> f64 {
    xi.iter().zip(z).map(|(x, w)| w * x.ln()).sum::<f64>().exp()
}

pub(crate) fn weighted_am(xi: &[f64], z: &[f64]) -> f64 {
    xi.iter().zip(z).map(|(x, w)| w * x).sum()
}

pub(crate) fn relative_change(prev: f64, next: f64) -> f64 {
    if prev == next {
        0.0
    } else {
        (next - prev).abs() / prev.abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DigitalMethod {
    LocallyOptimal,
    Wmmse,
}

#[derive(Debug, Clone)]
pub struct DigitalDesign {
    pub w: DigitalPrecoderSet,
    pub outcomes: Vec<DigitalOutcome>,
}

/// Runs the chosen digital design on every subcarrier in parallel, starting
/// from `init`.
#[allow(clippy::too_many_arguments)]
pub fn design_digital(
    method: DigitalMethod,
    f: &CMatrix,
    eff: &EffectiveChannel,
    z: &[f64],
    theta: f64,
    init: &DigitalPrecoderSet,
    opts: &DigitalOptions,
    solver: &dyn ConicSolver,
) -> Result<DigitalDesign> {
    if init.subcarriers() != eff.subcarriers() {
        return Err(Error::Dimension(format!(
            "{} initial precoders for {} subcarriers",
            init.subcarriers(),
            eff.subcarriers()
        )));
    }
    let outcomes = (0..eff.subcarriers())
        .into_par_iter()
        .map(|k| {
            let g = eff.subcarrier(k);
            let w0 = init.subcarrier(k);
            match method {
                DigitalMethod::LocallyOptimal => {
                    locally_optimal_from(f, g, z, theta, w0, opts, solver)
                }
                DigitalMethod::Wmmse => wmmse_from(f, g, z, theta, w0, opts),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let w = DigitalPrecoderSet::new(outcomes.iter().map(|o| o.w.clone()).collect())?;
    Ok(DigitalDesign { w, outcomes })
}

/// Writes `k,iteration,objective` rows for every subcarrier.
pub fn write_traces_csv<W: Write>(outcomes: &[DigitalOutcome], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "k,iteration,objective")?;
    for (k, o) in outcomes.iter().enumerate() {
        for (i, v) in o.trace.iter().enumerate() {
            writeln!(out, "{k},{i},{v}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::crandn_matrix;
    use crate::metrics::AnalogPrecoder;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalization_cases() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let f = AnalogPrecoder::random(8, 3, &mut r).matrix().clone();
        let v = crandn_matrix(3, 2, &mut r);
        let w = normalize_digital(&v, &f).unwrap();
        for u in 0..2 {
            assert!(((&f * w.column(u)).norm() - 1.0).abs() < 1e-12);
        }
        assert!((normalize_digital(&w, &f).unwrap() - &w).norm() < 1e-14);
        let scaled = normalize_digital(&(&v * Complex64::from(7.0)), &f).unwrap();
        assert!((scaled - &w).norm() < 1e-13);
    }

    #[test]
    fn zero_column_is_degenerate() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let f = AnalogPrecoder::random(4, 2, &mut r).matrix().clone();
        let mut v = crandn_matrix(2, 2, &mut r);
        v.column_mut(1).fill(Complex64::new(0.0, 0.0));
        assert!(matches!(
            normalize_digital(&v, &f),
            Err(Error::DegenerateColumn { user: 1 })
        ));
    }

    #[test]
    fn random_init_is_normalized_and_reproducible() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let f = AnalogPrecoder::random(8, 4, &mut r).matrix().clone();
        let a = random_digital_init(&f, 3, &mut ChaCha8Rng::seed_from_u64(9));
        let b = random_digital_init(&f, 3, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        for _ in 0..1000 {
            let w = random_digital_init(&f, 3, &mut r);
            for u in 0..3 {
                assert!(((&f * w.column(u)).norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trace_csv_layout() {
        let o = DigitalOutcome {
            w: CMatrix::zeros(1, 1),
            objective: 0.5,
            trace: vec![1.0, 0.5],
            iterations: 1,
            converged: true,
        };
        let mut buf = Vec::new();
        write_traces_csv(&[o.clone(), o], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "k,iteration,objective\n0,0,1\n0,1,0.5\n1,0,1\n1,1,0.5\n"
        );
    }
}
