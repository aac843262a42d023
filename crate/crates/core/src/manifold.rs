//! Riemannian conjugate-gradient ascent over the constant-modulus analog
//! precoder.
//!
//! Points are stored with unit-modulus entries (`x = vec(X)`, column-major)
//! and mapped to the physical precoder as `F = X / sqrt(M)`. With `|x_i| = 1`
//! the projection `P(v) = v - Re[v o x*] o x` is exactly orthogonal, which
//! would not hold at modulus `1/sqrt(M)`.

use std::f64::consts::LN_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::linalg::{max_modulus_error, norm_sqr, real_inner, CMatrix, Complex64};
use crate::metrics::{column, weighted_sum_rate, AnalogPrecoder, DigitalPrecoderSet, MODULUS_TOL};
use crate::{Error, Result};

/// A point of the complex-circle product manifold (unit-modulus entries).
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    x: CMatrix,
}

impl ManifoldPoint {
    pub fn new(x: CMatrix) -> Result<Self> {
        let err = max_modulus_error(x.iter());
        if err > MODULUS_TOL {
            return Err(Error::Contract(format!(
                "point deviates from unit modulus by {err:e}"
            )));
        }
        Ok(ManifoldPoint { x })
    }

    pub fn from_analog(a: &AnalogPrecoder) -> Self {
        ManifoldPoint {
            x: a.unit_modulus().clone(),
        }
    }

    pub fn to_analog(&self) -> AnalogPrecoder {
        AnalogPrecoder::from_unit_modulus(self.x.clone()).expect("manifold points are unit modulus")
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.x
    }

    /// `vec(X)`.
    pub fn as_slice(&self) -> &[Complex64] {
        self.x.as_slice()
    }

    /// Physical precoder `X / sqrt(M)`.
    pub fn physical(&self) -> CMatrix {
        &self.x / Complex64::from((self.x.nrows() as f64).sqrt())
    }
}

/// A vector in the tangent space at some [`ManifoldPoint`].
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    v: CMatrix,
}

impl TangentVector {
    pub fn matrix(&self) -> &CMatrix {
        &self.v
    }

    pub fn as_slice(&self) -> &[Complex64] {
        self.v.as_slice()
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(self.v.as_slice())
    }

    /// `max_i |Re[v_i x_i*]|`, zero for an exactly tangent vector.
    pub fn tangency_residual(&self, at: &ManifoldPoint) -> f64 {
        self.v
            .iter()
            .zip(at.x.iter())
            .map(|(v, x)| (v * x.conj()).re.abs())
            .fold(0.0, f64::max)
    }

    #[cfg(test)]
    fn zeros_like(p: &ManifoldPoint) -> Self {
        TangentVector {
            v: CMatrix::zeros(p.x.nrows(), p.x.ncols()),
        }
    }
}

/// `P_x(v) = v - Re[v o x*] o x`.
pub fn project_tangent(x: &ManifoldPoint, v: &CMatrix) -> TangentVector {
    assert_eq!(x.x.shape(), v.shape(), "tangent projection shape mismatch");
    let mut out = v.clone();
    for (o, xi) in out.iter_mut().zip(x.x.iter()) {
        let radial = (*o * xi.conj()).re;
        *o -= xi * radial;
    }
    TangentVector { v: out }
}

/// Elementwise `(x_i + s_i) / |x_i + s_i|`; entries where the sum vanishes
/// keep their previous value.
pub fn retract(x: &ManifoldPoint, step: &CMatrix) -> ManifoldPoint {
    assert_eq!(x.x.shape(), step.shape(), "retraction shape mismatch");
    let mut out = &x.x + step;
    for (o, xi) in out.iter_mut().zip(x.x.iter()) {
        let n = o.norm();
        *o = if n > 0.0 && n.is_finite() { *o / n } else { *xi };
    }
    ManifoldPoint { x: out }
}

/// Wirtinger gradient `df/dF*` of the weighted sum rate with respect to the
/// physical precoder `F`:
///
/// `sum_k sum_u z_u/ln2 [ theta h h^H F W W^H / (1 + theta ||h^H F W||^2)
///   - theta h h^H F W_u' W_u'^H / (1 + theta ||h^H F W_u'||^2) ]`
///
/// where `W_u'` drops column `u`.
pub fn euclidean_gradient(
    f: &CMatrix,
    h: &ChannelSet,
    w: &DigitalPrecoderSet,
    z: &[f64],
    theta: f64,
) -> CMatrix {
    let (m, n_rf) = f.shape();
    let users = z.len();
    let mut grad = CMatrix::zeros(m, n_rf);
    for (h_k, w_k) in h.matrices().iter().zip(w.matrices()) {
        let g = f.adjoint() * h_k;
        // rows[u] = coefficient-weighted h_u^H F (W W^H - W_u' W_u'^H terms)
        let mut rows = CMatrix::zeros(users, n_rf);
        for u in 0..users {
            let g_u = column(&g, u);
            let a: Vec<Complex64> = (0..w_k.ncols())
                .map(|j| column(w_k, j).iter().zip(g_u).map(|(wv, gv)| gv.conj() * wv).sum())
                .collect();
            let s_all: f64 = a.iter().map(|v| v.norm_sqr()).sum();
            let s_bar = s_all - a[u].norm_sqr();
            let c_all = theta / (1.0 + theta * s_all);
            let c_bar = theta / (1.0 + theta * s_bar);
            let scale = z[u] / LN_2;
            for nn in 0..n_rf {
                // (a W^H)_n and the same row without user u
                let mut p_all = Complex64::new(0.0, 0.0);
                for (j, aj) in a.iter().enumerate() {
                    p_all += aj * w_k[(nn, j)].conj();
                }
                let p_bar = p_all - a[u] * w_k[(nn, u)].conj();
                rows[(u, nn)] = (p_all * c_all - p_bar * c_bar) * scale;
            }
        }
        grad += h_k * rows;
    }
    grad
}

/// Backtracking parameters: trial steps `a b^m`, sufficient increase `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmijoParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub max_backtracks: u32,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        ArmijoParams {
            a: 1.0,
            b: 0.5,
            c: 1e-4,
            max_backtracks: 50,
        }
    }
}

impl ArmijoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0 && self.b < 1.0 && self.c > 0.0) {
            return Err(Error::Config(format!("invalid Armijo parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ArmijoOutcome {
    /// Accepted step, zero on stagnation.
    pub alpha: f64,
    pub value: f64,
    pub point: ManifoldPoint,
    pub backtracks: u32,
}

/// Smallest `m <= max_backtracks` with
/// `f(Ret_x(a b^m d)) >= f(x) + c a b^m ||d||^2`. In floating point the
/// right-hand side can round to `f(x)`, so a strict increase is also required.
///
/// Returns `alpha = 0` (and the unchanged point) when `d` vanishes or no `m`
/// qualifies.
pub fn armijo_step<F>(
    x: &ManifoldPoint,
    d: &TangentVector,
    f_x: f64,
    mut objective: F,
    params: &ArmijoParams,
) -> ArmijoOutcome
where
    F: FnMut(&ManifoldPoint) -> f64,
{
    let stagnant = ArmijoOutcome {
        alpha: 0.0,
        value: f_x,
        point: x.clone(),
        backtracks: 0,
    };
    let dn = d.norm_sqr();
    if !(dn > 0.0) {
        return stagnant;
    }
    let mut alpha = params.a;
    for m in 0..=params.max_backtracks {
        let candidate = retract(x, &(d.matrix() * Complex64::from(alpha)));
        let value = objective(&candidate);
        if value > f_x && value >= f_x + params.c * alpha * dn {
            return ArmijoOutcome {
                alpha,
                value,
                point: candidate,
                backtracks: m,
            };
        }
        alpha *= params.b;
    }
    ArmijoOutcome {
        backtracks: params.max_backtracks,
        ..stagnant
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgOptions {
    pub armijo: ArmijoParams,
    /// Relative objective change below which the iteration stops.
    pub omega: f64,
    pub max_iters: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            armijo: ArmijoParams::default(),
            omega: 1e-4,
            max_iters: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub point: ManifoldPoint,
    /// Objective before the first and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl CgOutcome {
    pub fn value(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial value")
    }
}

const BETA_DENOM_TOL: f64 = 1e-14;

/// Weighted sum rate and its Riemannian gradient as functions of the
/// manifold point, with `W` held fixed.
struct AnalogObjective<'a> {
    h: &'a ChannelSet,
    w: &'a DigitalPrecoderSet,
    z: &'a [f64],
    theta: f64,
}

impl AnalogObjective<'_> {
    fn value(&self, p: &ManifoldPoint) -> f64 {
        weighted_sum_rate(self.h, &p.physical(), self.w, self.z, self.theta)
    }

    /// `P_x(df/dx*)`; `df/dX* = (df/dF*) / sqrt(M)`.
    fn riemannian_gradient(&self, p: &ManifoldPoint) -> TangentVector {
        let scale = 1.0 / (p.x.nrows() as f64).sqrt();
        let egrad = euclidean_gradient(&p.physical(), self.h, self.w, self.z, self.theta);
        project_tangent(p, &(egrad * Complex64::from(scale)))
    }
}

/// Polak-Ribiere conjugate gradient with Armijo backtracking, maximizing the
/// weighted sum rate over `F` for fixed digital precoders.
pub fn optimize_analog(
    x0: &ManifoldPoint,
    h: &ChannelSet,
    w: &DigitalPrecoderSet,
    z: &[f64],
    theta: f64,
    opts: &CgOptions,
) -> Result<CgOutcome> {
    opts.armijo.validate()?;
    if x0.x.nrows() != h.antennas() || w.subcarriers() != h.subcarriers() {
        return Err(Error::Dimension("analog start point does not match the channel".into()));
    }
    let obj = AnalogObjective { h, w, z, theta };
    let mut x = x0.clone();
    let mut f = obj.value(&x);
    let mut trace = vec![f];
    let mut g = obj.riemannian_gradient(&x);
    let mut d = g.clone();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        iterations += 1;
        if d.norm_sqr().sqrt() < BETA_DENOM_TOL {
            converged = true;
            break;
        }
        // restart when the conjugate direction is no longer an ascent direction
        if real_inner(g.as_slice(), d.as_slice()) <= 0.0 {
            d = g.clone();
        }
        let step = armijo_step(&x, &d, f, |p| obj.value(p), &opts.armijo);
        if step.alpha == 0.0 {
            converged = true;
            break;
        }
        let x_new = step.point;
        let f_new = step.value;
        trace.push(f_new);

        let g_new = obj.riemannian_gradient(&x_new);
        let g_moved = project_tangent(&x_new, g.matrix());
        let d_moved = project_tangent(&x_new, d.matrix());
        let denom = g_moved.norm_sqr();
        let beta = if denom.sqrt() < BETA_DENOM_TOL {
            0.0
        } else {
            let diff = g_new.matrix() - g_moved.matrix();
            (real_inner(g_new.as_slice(), diff.as_slice()) / denom).max(0.0)
        };
        d = TangentVector {
            v: g_new.matrix() + d_moved.matrix() * Complex64::from(beta),
        };

        let rel = if f.abs() > 0.0 { (f_new - f) / f.abs() } else { f64::INFINITY };
        x = x_new;
        f = f_new;
        g = g_new;
        if rel < opts.omega {
            converged = true;
            break;
        }
    }
    Ok(CgOutcome {
        point: x,
        trace,
        iterations,
        converged,
    })
}

/// Writes `iteration,objective` rows.
pub fn write_trace_csv<W: Write>(trace: &[f64], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "iteration,objective")?;
    for (i, v) in trace.iter().enumerate() {
        writeln!(out, "{i},{v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{crandn_matrix, J};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_point(m: usize, n: usize, r: &mut ChaCha8Rng) -> ManifoldPoint {
        ManifoldPoint::from_analog(&AnalogPrecoder::random(m, n, r))
    }

    #[test]
    fn off_manifold_points_rejected() {
        let x = CMatrix::from_element(2, 2, Complex64::new(0.5, 0.0));
        assert!(matches!(ManifoldPoint::new(x), Err(Error::Contract(_))));
    }

    #[test]
    fn radial_direction_projects_to_zero() {
        let mut r = rng(1);
        let p = random_point(4, 2, &mut r);
        assert!(project_tangent(&p, p.matrix()).norm_sqr() < 1e-28);
        let tangent = p.matrix() * J;
        let proj = project_tangent(&p, &tangent);
        assert!((proj.matrix() - &tangent).norm() < 1e-15);
    }

    #[test]
    fn projection_is_tangent_and_idempotent() {
        let mut r = rng(2);
        for _ in 0..100 {
            let p = random_point(5, 3, &mut r);
            let v = crandn_matrix(5, 3, &mut r);
            let once = project_tangent(&p, &v);
            assert!(once.tangency_residual(&p) < 1e-12);
            let twice = project_tangent(&p, once.matrix());
            assert!((twice.matrix() - once.matrix()).norm() < 1e-14);
        }
    }

    #[test]
    fn retraction_cases() {
        let mut r = rng(3);
        let p = random_point(3, 2, &mut r);
        assert!((retract(&p, &CMatrix::zeros(3, 2)).matrix() - p.matrix()).norm() < 1e-15);

        let one = ManifoldPoint::new(CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0))).unwrap();
        let out = retract(&one, &CMatrix::from_element(1, 1, J));
        let expect = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
        assert!((out.matrix()[(0, 0)] - expect).norm() < 1e-15);

        for _ in 0..100 {
            let step = crandn_matrix(3, 2, &mut r) * Complex64::from(r.gen_range(0.0..10.0));
            let q = retract(&p, &step);
            assert!(max_modulus_error(q.matrix().iter()) < 1e-14);
        }
    }

    #[test]
    fn cancelling_step_keeps_previous_entry() {
        let one = ManifoldPoint::new(CMatrix::from_element(1, 2, Complex64::new(1.0, 0.0))).unwrap();
        let step = CMatrix::from_row_slice(1, 2, &[Complex64::new(-1.0, 0.0), J]);
        let out = retract(&one, &step);
        assert_eq!(out.matrix()[(0, 0)], Complex64::new(1.0, 0.0));
    }

    fn instance(
        m: usize,
        n_rf: usize,
        users: usize,
        k: usize,
        r: &mut ChaCha8Rng,
    ) -> (ChannelSet, DigitalPrecoderSet, Vec<f64>) {
        let h = ChannelSet::new((0..k).map(|_| crandn_matrix(m, users, r)).collect()).unwrap();
        let w = DigitalPrecoderSet::new((0..k).map(|_| crandn_matrix(n_rf, users, r)).collect())
            .unwrap();
        let raw: Vec<f64> = (0..users).map(|_| r.gen_range(0.2..1.0)).collect();
        let s: f64 = raw.iter().sum();
        (h, w, raw.iter().map(|v| v / s).collect())
    }

    #[test]
    fn zero_digital_precoder_has_zero_gradient() {
        let mut r = rng(4);
        let (h, _, z) = instance(4, 2, 2, 2, &mut r);
        let w = DigitalPrecoderSet::new(vec![CMatrix::zeros(2, 2); 2]).unwrap();
        let f = crandn_matrix(4, 2, &mut r);
        assert_eq!(euclidean_gradient(&f, &h, &w, &z, 3.0).norm(), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng(5);
        let (h, w, z) = instance(4, 2, 2, 2, &mut r);
        let f = crandn_matrix(4, 2, &mut r);
        let theta = 5.0;
        let grad = euclidean_gradient(&f, &h, &w, &z, theta);
        let step = 1e-6;
        let mut fd = CMatrix::zeros(4, 2);
        for i in 0..4 {
            for j in 0..2 {
                let eval = |delta: Complex64| {
                    let mut fp = f.clone();
                    fp[(i, j)] += delta;
                    weighted_sum_rate(&h, &fp, &w, &z, theta)
                };
                let dre = (eval(Complex64::new(step, 0.0)) - eval(Complex64::new(-step, 0.0))) / (2.0 * step);
                let dim = (eval(Complex64::new(0.0, step)) - eval(Complex64::new(0.0, -step))) / (2.0 * step);
                fd[(i, j)] = Complex64::new(dre, dim) * 0.5;
            }
        }
        assert!((&grad - &fd).norm() / grad.norm() < 1e-6);
    }

    #[test]
    fn armijo_stagnates_on_zero_direction() {
        let mut r = rng(6);
        let p = random_point(2, 1, &mut r);
        let d = TangentVector::zeros_like(&p);
        let out = armijo_step(&p, &d, 1.0, |_| 1.0, &ArmijoParams::default());
        assert_eq!(out.alpha, 0.0);
    }

    #[test]
    fn armijo_stagnates_on_flat_objective() {
        let mut r = rng(7);
        let p = random_point(2, 1, &mut r);
        let d = project_tangent(&p, &(p.matrix() * J));
        let out = armijo_step(&p, &d, 1.0, |_| 1.0, &ArmijoParams::default());
        assert_eq!(out.alpha, 0.0);
        assert_eq!(out.value, 1.0);
    }

    #[test]
    fn armijo_accepts_ascent_step() {
        let mut r = rng(8);
        let (h, w, z) = instance(4, 2, 2, 2, &mut r);
        let obj = AnalogObjective { h: &h, w: &w, z: &z, theta: 5.0 };
        let p = random_point(4, 2, &mut r);
        let f0 = obj.value(&p);
        let d = obj.riemannian_gradient(&p);
        let out = armijo_step(&p, &d, f0, |q| obj.value(q), &ArmijoParams::default());
        assert!(out.alpha > 0.0);
        assert!(out.value > f0);
    }

    #[test]
    fn phase_invariant_scalar_problem_stops_immediately() {
        let h = ChannelSet::new(vec![CMatrix::from_element(1, 1, Complex64::new(0.7, -0.2))]).unwrap();
        let w = DigitalPrecoderSet::new(vec![CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0))])
            .unwrap();
        let p = ManifoldPoint::new(CMatrix::from_element(1, 1, Complex64::from_polar(1.0, 0.4))).unwrap();
        let out = optimize_analog(&p, &h, &w, &[1.0], 10.0, &CgOptions::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert!((out.value() - out.trace[0]).abs() < 1e-12);
    }

    #[test]
    fn trace_is_monotone_and_iterates_feasible() {
        let mut r = rng(9);
        let (h, w, z) = instance(6, 3, 2, 3, &mut r);
        let p = random_point(6, 3, &mut r);
        let out = optimize_analog(&p, &h, &w, &z, 10.0, &CgOptions::default()).unwrap();
        assert!(out.trace.windows(2).all(|t| t[1] >= t[0]));
        assert!(out.value() > out.trace[0]);
        assert!(max_modulus_error(out.point.matrix().iter()) < 1e-12);
    }

    #[test]
    fn two_antenna_optimum_matches_phase_grid() {
        let mut r = rng(10);
        let h = ChannelSet::new(vec![crandn_matrix(2, 1, &mut r)]).unwrap();
        let w = DigitalPrecoderSet::new(vec![CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0))])
            .unwrap();
        let theta = 10.0;
        let p = random_point(2, 1, &mut r);
        let opts = CgOptions { omega: 1e-12, ..CgOptions::default() };
        let out = optimize_analog(&p, &h, &w, &[1.0], theta, &opts).unwrap();
        let mut best = f64::NEG_INFINITY;
        for i in 0..3600 {
            let phi = std::f64::consts::TAU * i as f64 / 3600.0;
            let x = CMatrix::from_column_slice(2, 1, &[Complex64::new(1.0, 0.0), Complex64::from_polar(1.0, phi)]);
            let f = x / Complex64::from(2f64.sqrt());
            best = best.max(weighted_sum_rate(&h, &f, &w, &[1.0], theta));
        }
        assert!(out.value() >= best - 1e-5, "{} vs {best}", out.value());
    }

    #[test]
    fn trace_csv_layout() {
        let mut buf = Vec::new();
        write_trace_csv(&[1.0, 2.5], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iteration,objective\n0,1\n1,2.5\n");
    }
}
