use rand::Rng;

use super::{
    mses, normalize_digital, random_digital_init, receivers, relative_change, solve_socp_step,
    update_factors, weighted_gm, ConicSolver, DigitalOptions, DigitalOutcome,
};
use crate::linalg::CMatrix;
use crate::{Error, Result};

/// Locally optimal digital precoding on one subcarrier from a random start.
///
/// `g` is the effective channel `F^H H[k]` (`N_RF x U`).
pub fn locally_optimal_digital<R: Rng + ?Sized>(
    f: &CMatrix,
    g: &CMatrix,
    z: &[f64],
    theta: f64,
    opts: &DigitalOptions,
    solver: &dyn ConicSolver,
    rng: &mut R,
) -> Result<DigitalOutcome> {
    let w0 = random_digital_init(f, g.ncols(), rng);
    locally_optimal_from(f, g, z, theta, &w0, opts, solver)
}

/// Block descent on `prod_u xi_u^{z_u}`: receivers and factors are refreshed
/// at the current precoder, then the precoder is re-solved as an SOCP under
/// `||F w_u|| <= 1`.
///
/// The returned precoder is the best normalized iterate, the start included.
pub fn locally_optimal_from(
    f: &CMatrix,
    g: &CMatrix,
    z: &[f64],
    theta: f64,
    w0: &CMatrix,
    opts: &DigitalOptions,
    solver: &dyn ConicSolver,
) -> Result<DigitalOutcome> {
    let users = g.ncols();
    if z.len() != users || w0.shape() != (f.ncols(), users) {
        return Err(Error::Dimension("digital design inputs disagree".into()));
    }
    let mut w = w0.clone();
    let mut value = weighted_gm(&mses(g, &w, theta), z);
    let mut trace = vec![value];
    let mut best = normalize_digital(&w, f)?;
    let mut best_value = weighted_gm(&mses(g, &best, theta), z);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        iterations += 1;
        let b = receivers(g, &w, theta);
        let xi = mses(g, &w, theta);
        let eta = if users == 1 {
            vec![1.0]
        } else {
            update_factors(&xi, z)?.eta
        };
        let (w_next, _) = solve_socp_step(g, &b, &eta, f, solver)?;
        let next = weighted_gm(&mses(g, &w_next, theta), z);
        w = w_next;
        trace.push(next);
        if let Ok(wn) = normalize_digital(&w, f) {
            let v = weighted_gm(&mses(g, &wn, theta), z);
            if v < best_value {
                best = wn;
                best_value = v;
            }
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
