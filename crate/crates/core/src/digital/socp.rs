use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::linalg::{CMatrix, Complex64};
use crate::{Error, Result};

/// A second-order-cone program in standard conic form:
///
/// minimize `c^T x` subject to `s = b - A x` lying in the product of the
/// second-order cones whose dimensions are listed in `cones`.
#[derive(Debug, Clone, Default)]
pub struct ConicProblem {
    pub objective: Vec<f64>,
    /// Nonzeros of `A` as `(row, col, value)`; repeated entries add up.
    pub a: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub cones: Vec<usize>,
}

impl ConicProblem {
    pub fn variables(&self) -> usize {
        self.objective.len()
    }

    pub fn rows(&self) -> usize {
        self.b.len()
    }

    fn check(&self) -> Result<()> {
        let rows: usize = self.cones.iter().sum();
        if rows != self.rows() {
            return Err(Error::Dimension(format!(
                "cones cover {rows} rows, b has {}",
                self.rows()
            )));
        }
        if self
            .a
            .iter()
            .any(|&(r, c, v)| r >= self.rows() || c >= self.variables() || !v.is_finite())
            || self.b.iter().chain(&self.objective).any(|v| !v.is_finite())
        {
            return Err(Error::Domain("conic problem data out of range or not finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

/// Backend able to solve [`ConicProblem`]s.
pub trait ConicSolver: Send + Sync {
    fn solve(&self, problem: &ConicProblem) -> Result<ConicSolution>;
}

/// Interior-point backend built on the `clarabel` crate.
#[derive(Debug, Clone, Copy)]
pub struct ClarabelSolver {
    pub tolerance: f64,
    pub max_iter: u32,
}

impl Default for ClarabelSolver {
    fn default() -> Self {
        ClarabelSolver {
            tolerance: 1e-8,
            max_iter: 200,
        }
    }
}

impl ConicSolver for ClarabelSolver {
    fn solve(&self, problem: &ConicProblem) -> Result<ConicSolution> {
        problem.check()?;
        let n = problem.variables();
        let m = problem.rows();
        let (mut ri, mut ci, mut vi) = (Vec::new(), Vec::new(), Vec::new());
        for &(r, c, v) in &problem.a {
            ri.push(r);
            ci.push(c);
            vi.push(v);
        }
        let a = CscMatrix::new_from_triplets(m, n, ri, ci, vi);
        let p = CscMatrix::zeros((n, n));
        let cones: Vec<SupportedConeT<f64>> = problem
            .cones
            .iter()
            .map(|&d| SupportedConeT::SecondOrderConeT(d))
            .collect();
        let settings = DefaultSettings {
            verbose: false,
            tol_gap_abs: self.tolerance,
            tol_gap_rel: self.tolerance,
            tol_feas: self.tolerance,
            max_iter: self.max_iter,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p, &problem.objective, &a, &problem.b, &cones, settings)
            .map_err(|e| Error::Solver(e.to_string()))?;
        solver.solve();
        let sol = &solver.solution;
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => Ok(ConicSolution {
                x: sol.x.clone(),
                objective: sol.obj_val,
            }),
            status => Err(Error::Solver(format!("status {status:?}"))),
        }
    }
}

/// Builds the digital-precoder SOCP for one subcarrier:
///
/// minimize `chi` subject to `||F w_u|| <= 1` for every user and
/// `||vec(sqrt(eta) B^H G^H W - sqrt(eta))|| <= chi`.
///
/// Variables are `[chi, Re vec(W), Im vec(W)]` (column-major `vec`). The power
/// cones use the triangular factor `R` of a thin QR of `F`, since
/// `||F w|| = ||R w||`.
pub fn build_socp(g: &CMatrix, b: &[Complex64], eta: &[f64], f: &CMatrix) -> Result<ConicProblem> {
    let (n_rf, users) = g.shape();
    if b.len() != users || eta.len() != users || f.ncols() != n_rf {
        return Err(Error::Dimension("SOCP data shapes disagree".into()));
    }
    if let Some(e) = eta.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::Domain(format!("eta entry {e} is not positive")));
    }
    let nw = n_rf * users;
    let re = |n: usize, j: usize| 1 + j * n_rf + n;
    let im = |n: usize, j: usize| 1 + nw + j * n_rf + n;

    let mut objective = vec![0.0; 1 + 2 * nw];
    objective[0] = 1.0;
    let mut a = Vec::new();
    let mut rhs = Vec::new();
    let mut cones = Vec::new();

    let r = f.clone().qr().r();
    let rr = r.nrows();
    for u in 0..users {
        let base = rhs.len();
        rhs.push(1.0);
        rhs.extend(std::iter::repeat(0.0).take(2 * rr));
        for i in 0..rr {
            for n in 0..n_rf {
                let c = r[(i, n)];
                // Re(Rw)_i = Re c Re w - Im c Im w, Im(Rw)_i = Re c Im w + Im c Re w
                a.push((base + 1 + i, re(n, u), -c.re));
                a.push((base + 1 + i, im(n, u), c.im));
                a.push((base + 1 + rr + i, im(n, u), -c.re));
                a.push((base + 1 + rr + i, re(n, u), -c.im));
            }
        }
        cones.push(1 + 2 * rr);
    }

    // rows of sqrt(eta) B^H G^H: row i = sqrt(eta_i) conj(b_i) g_i^H
    let base = rhs.len();
    let uu = users * users;
    rhs.push(0.0);
    a.push((base, 0, -1.0));
    rhs.extend(std::iter::repeat(0.0).take(2 * uu));
    for j in 0..users {
        for i in 0..users {
            let e = i + j * users;
            let se = eta[i].sqrt();
            if i == j {
                rhs[base + 1 + e] = -se;
            }
            for n in 0..n_rf {
                let c = g[(n, i)].conj() * b[i].conj() * se;
                a.push((base + 1 + e, re(n, j), -c.re));
                a.push((base + 1 + e, im(n, j), c.im));
                a.push((base + 1 + uu + e, im(n, j), -c.re));
                a.push((base + 1 + uu + e, re(n, j), -c.im));
            }
        }
    }
    cones.push(1 + 2 * uu);
    Ok(ConicProblem {
        objective,
        a,
        b: rhs,
        cones,
    })
}

/// Residual `||vec(sqrt(eta) B^H G^H W - sqrt(eta))||`.
pub fn socp_residual(g: &CMatrix, b: &[Complex64], eta: &[f64], w: &CMatrix) -> f64 {
    let gw = g.adjoint() * w;
    let mut s = 0.0;
    for j in 0..w.ncols() {
        for i in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            s += eta[i] * (b[i].conj() * gw[(i, j)] - target).norm_sqr();
        }
    }
    s.sqrt()
}

/// Solves the SOCP and returns the minimizing `W` with its residual `chi`.
pub fn solve_socp_step(
    g: &CMatrix,
    b: &[Complex64],
    eta: &[f64],
    f: &CMatrix,
    solver: &dyn ConicSolver,
) -> Result<(CMatrix, f64)> {
    let problem = build_socp(g, b, eta, f)?;
    let sol = solver.solve(&problem)?;
    let (n_rf, users) = g.shape();
    let nw = n_rf * users;
    let w = CMatrix::from_fn(n_rf, users, |n, j| {
        Complex64::new(sol.x[1 + j * n_rf + n], sol.x[1 + nw + j * n_rf + n])
    });
    Ok((w, sol.x[0]))
}
