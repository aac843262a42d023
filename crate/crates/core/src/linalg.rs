//! Dense complex linear-algebra helpers shared by the algorithm modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

pub use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const J: Complex64 = Complex64::new(0.0, 1.0);

/// One draw from CN(0, 1).
pub fn crandn<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Matrix with i.i.d. CN(0, 1) entries, filled in column-major order.
pub fn crandn_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let data: Vec<Complex64> = (0..rows * cols).map(|_| crandn(rng)).collect();
    CMatrix::from_vec(rows, cols, data)
}

pub fn crandn_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> CVector {
    CVector::from_iterator(len, (0..len).map(|_| crandn(rng)))
}

/// Solves `A X = B` for Hermitian positive definite `A`.
///
/// Falls back to LU when the Cholesky factorization breaks down numerically.
pub fn solve_hpd(a: CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "system matrix {}x{} with right-hand side {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    a.lu()
        .solve(b)
        .ok_or_else(|| Error::Singular("matrix is not invertible".into()))
}

/// `max_i | |x_i| - 1 |`.
pub fn max_modulus_error<'a>(x: impl IntoIterator<Item = &'a Complex64>) -> f64 {
    x.into_iter()
        .map(|v| (v.norm() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Real inner product `Re[a^H b]` on complex vectors viewed as real ones.
pub fn real_inner(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}
