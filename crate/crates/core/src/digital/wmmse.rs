use rand::Rng;

use super::{
    mses, normalize_digital, random_digital_init, receivers, relative_change, weighted_am,
    DigitalOptions, DigitalOutcome,
};
use crate::linalg::{solve_hpd, CMatrix, Complex64};
use crate::{Error, Result};

/// Unnormalized weighted-MMSE precoder
/// `V = (G B Z^2 B^H G^H + Tr(Z B^H B Z)/(U theta) F^H F)^{-1} G B Z`
/// for receivers `b` and weights `z`. Returns zero when every receiver is zero.
pub fn wmmse_step(
    g: &CMatrix,
    b: &[Complex64],
    z: &[f64],
    f: &CMatrix,
    theta: f64,
) -> Result<CMatrix> {
    let (n_rf, users) = g.shape();
    if b.len() != users || z.len() != users || f.ncols() != n_rf {
        return Err(Error::Dimension("weighted MMSE step shapes disagree".into()));
    }
    if b.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
        return Ok(CMatrix::zeros(n_rf, users));
    }
    // G B Z, column u = z_u b_u g_u
    let gbz = CMatrix::from_fn(n_rf, users, |n, u| g[(n, u)] * b[u] * z[u]);
    let trace: f64 = (0..users).map(|u| z[u] * z[u] * b[u].norm_sqr()).sum();
    let system = &gbz * gbz.adjoint()
        + f.adjoint() * f * Complex64::from(trace / (users as f64 * theta));
    solve_hpd(system, &gbz)
}

/// Weighted-MMSE digital precoding on one subcarrier from a random start.
pub fn wmmse_digital<R: Rng + ?Sized>(
    f: &CMatrix,
    g: &CMatrix,
    z: &[f64],
    theta: f64,
    opts: &DigitalOptions,
    rng: &mut R,
) -> Result<DigitalOutcome> {
    let w0 = random_digital_init(f, g.ncols(), rng);
    wmmse_from(f, g, z, theta, &w0, opts)
}

/// Alternates MMSE receivers and normalized weighted-MMSE precoders until the
/// relative change of `sum_u z_u xi_u` drops below `omega`. Returns the best
/// iterate seen.
pub fn wmmse_from(
    f: &CMatrix,
    g: &CMatrix,
    z: &[f64],
    theta: f64,
    w0: &CMatrix,
    opts: &DigitalOptions,
) -> Result<DigitalOutcome> {
    let users = g.ncols();
    if z.len() != users || w0.shape() != (f.ncols(), users) {
        return Err(Error::Dimension("digital design inputs disagree".into()));
    }
    let mut w = normalize_digital(w0, f)?;
    let mut value = weighted_am(&mses(g, &w, theta), z);
    let mut trace = vec![value];
    let mut best = w.clone();
    let mut best_value = value;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        iterations += 1;
        let b = receivers(g, &w, theta);
        let v = wmmse_step(g, &b, z, f, theta)?;
        w = match normalize_digital(&v, f) {
            Ok(w) => w,
            Err(_) => break,
        };
        let next = weighted_am(&mses(g, &w, theta), z);
        trace.push(next);
        if next < best_value {
            best = w.clone();
            best_value = next;
        }
        let rel = relative_change(value, next);
        value = next;
        if rel < opts.omega {
            converged = true;
            break;
        }
    }
    Ok(DigitalOutcome {
        w: best,
        objective: best_value,
        trace,
        iterations,
        converged,
    })
}
