use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Constants of the product-of-MSEs reformulation for one subcarrier.
///
/// `gamma`, `mu`, `kappa` depend only on the weights; `nu`, `zeta`, `eta`
/// on the current MSEs as well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSet {
    pub gamma: Vec<f64>,
    pub mu: Vec<f64>,
    pub kappa: Vec<f64>,
    pub nu: Vec<f64>,
    pub zeta: Vec<f64>,
    pub eta: Vec<f64>,
}

/// Computes the factors at MSEs `xi` for weights `z`.
///
/// `nu_u = (prod_i xi_i^{z_i})^{1/U} / xi_u^{z_u}`, so `prod_u nu_u = 1`
/// holds for arbitrary weights.
pub fn update_factors(xi: &[f64], z: &[f64]) -> Result<FactorSet> {
    let users = xi.len();
    if users == 0 || z.len() != users {
        return Err(Error::Dimension(format!(
            "{} MSEs and {} weights",
            users,
            z.len()
        )));
    }
    if let Some(x) = xi.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
        return Err(Error::Domain(format!("MSE {x} outside (0, 1]")));
    }
    if let Some(w) = z.iter().find(|w| !(**w > 0.0 && **w < 1.0)) {
        return Err(Error::Domain(format!(
            "weight {w} leaves the factors undefined (needs 0 < z < 1)"
        )));
    }
    let gamma: Vec<f64> = z.iter().map(|w| 1.0 / (1.0 - w)).collect();
    let mu: Vec<f64> = z.iter().map(|w| 1.0 / w - 1.0).collect();
    let kappa: Vec<f64> = z.iter().zip(&mu).map(|(w, m)| w * m.powf(1.0 - w)).collect();

    let log_gm: f64 = xi.iter().zip(z).map(|(x, w)| w * x.ln()).sum::<f64>() / users as f64;
    let nu: Vec<f64> = xi
        .iter()
        .zip(z)
        .map(|(x, w)| (log_gm - w * x.ln()).exp())
        .collect();
    let zeta: Vec<f64> = (0..users)
        .map(|u| ((gamma[u] * nu[u].ln() - (mu[u] * xi[u]).ln()) / (mu[u] + 1.0)).exp())
        .collect();
    let eta: Vec<f64> = (0..users).map(|u| kappa[u] * zeta[u].powf(mu[u])).collect();
    Ok(FactorSet {
        gamma,
        mu,
        kappa,
        nu,
        zeta,
        eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn equal_weight_constants() {
        let f = update_factors(&[0.3, 0.6], &[0.5, 0.5]).unwrap();
        assert_eq!(f.gamma, vec![2.0, 2.0]);
        assert_eq!(f.mu, vec![1.0, 1.0]);
        assert_eq!(f.kappa, vec![0.5, 0.5]);
    }

    #[test]
    fn symmetric_case() {
        let xi = 0.2;
        let f = update_factors(&[xi; 3], &[1.0 / 3.0; 3]).unwrap();
        for u in 0..3 {
            assert!((f.nu[u] - 1.0).abs() < 1e-12);
        }
        let f2 = update_factors(&[xi, xi], &[0.5, 0.5]).unwrap();
        for u in 0..2 {
            assert!((f2.zeta[u] - (1.0 / xi).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn nu_product_is_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let users = rng.gen_range(2..7);
            let xi: Vec<f64> = (0..users).map(|_| rng.gen_range(1e-4..1.0)).collect();
            let raw: Vec<f64> = (0..users).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let z: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let f = update_factors(&xi, &z).unwrap();
            let prod: f64 = f.nu.iter().product();
            assert!((prod - 1.0).abs() < 1e-12, "{prod}");
            assert!(f.eta.iter().chain(&f.zeta).all(|v| *v > 0.0 && v.is_finite()));
        }
    }

    #[test]
    fn boundary_weights_rejected() {
        assert!(matches!(update_factors(&[0.5, 0.5], &[1.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(update_factors(&[0.5], &[1.0]), Err(Error::Domain(_))));
        assert!(matches!(update_factors(&[0.0, 0.5], &[0.5, 0.5]), Err(Error::Domain(_))));
    }
}
