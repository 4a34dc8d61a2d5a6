//! Covariance kernels for the Gaussian-process priors: squared exponential,
//! Matérn, and time/space-separable products of the two.
//!
//! The squared exponential is implemented as
//! `k(u,u') = amplitude * exp(-||u-u'||^2 / l^2)` and the Matérn as
//! `k(u,u') = amplitude / (Gamma(tau) 2^{tau-1}) (r/l)^tau K_tau(r/l)`,
//! so `amplitude` is the kernel value at zero lag for every family.

use crate::bessel::bessel_k;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    Rbf {
        amplitude: f64,
        lengthscale: f64,
    },
    Matern {
        amplitude: f64,
        lengthscale: f64,
        smoothness: f64,
    },
    /// `k(u,u') = k_t(|t-t'|) * k_s(||s-s'||_2)`; factors must be radial
    /// (nesting depth 1).
    Separable {
        time: Box<KernelSpec>,
        space: Box<KernelSpec>,
    },
}

impl KernelSpec {
    pub fn rbf(amplitude: f64, lengthscale: f64) -> Self {
        KernelSpec::Rbf { amplitude, lengthscale }
    }

    pub fn matern(amplitude: f64, lengthscale: f64, smoothness: f64) -> Self {
        KernelSpec::Matern { amplitude, lengthscale, smoothness }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Rbf { amplitude, lengthscale } => {
                if *amplitude <= 0.0 || *lengthscale <= 0.0 {
                    return Err(Error::InvalidKernel(
                        "RBF hyperparameters must be strictly positive".into(),
                    ));
                }
            }
            KernelSpec::Matern { amplitude, lengthscale, smoothness } => {
                if *amplitude <= 0.0 || *lengthscale <= 0.0 || *smoothness <= 0.0 {
                    return Err(Error::InvalidKernel(
                        "Matérn hyperparameters must be strictly positive".into(),
                    ));
                }
            }
            KernelSpec::Separable { time, space } => {
                if matches!(**time, KernelSpec::Separable { .. })
                    || matches!(**space, KernelSpec::Separable { .. })
                {
                    return Err(Error::InvalidKernel(
                        "separable kernels cannot nest".into(),
                    ));
                }
                time.validate()?;
                space.validate()?;
            }
        }
        Ok(())
    }

    /// Kernel value at zero lag.
    pub fn variance(&self) -> f64 {
        match self {
            KernelSpec::Rbf { amplitude, .. } | KernelSpec::Matern { amplitude, .. } => *amplitude,
            KernelSpec::Separable { time, space } => time.variance() * space.variance(),
        }
    }
}

fn radial_eval(spec: &KernelSpec, r: f64) -> f64 {
    match spec {
        KernelSpec::Rbf { amplitude, lengthscale } => {
            amplitude * (-(r * r) / (lengthscale * lengthscale)).exp()
        }
        KernelSpec::Matern { amplitude, lengthscale, smoothness } => {
            if r == 0.0 {
                return *amplitude;
            }
            let z = r / lengthscale;
            let tau = *smoothness;
            amplitude / (gamma(tau) * 2f64.powf(tau - 1.0)) * z.powf(tau) * bessel_k(tau, z)
        }
        KernelSpec::Separable { .. } => unreachable!("separable kernels are not radial"),
    }
}

fn euclid(u: &[f64], u2: &[f64]) -> f64 {
    u.iter()
        .zip(u2)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Evaluate the covariance between two points of the same dimension. For
/// separable kernels the first coordinate is time and the rest is space.
pub fn kernel_eval(spec: &KernelSpec, u: &[f64], u2: &[f64]) -> Result<f64> {
    if u.len() != u2.len() || u.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: u2.len(),
        });
    }
    match spec {
        KernelSpec::Separable { time, space } => {
            if u.len() < 2 {
                return Err(Error::DimensionMismatch { expected: 2, got: u.len() });
            }
            let rt = (u[0] - u2[0]).abs();
            let rs = euclid(&u[1..], &u2[1..]);
            Ok(radial_eval(time, rt) * radial_eval(space, rs))
        }
        _ => Ok(radial_eval(spec, euclid(u, u2))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn rbf_at_unit_distance() {
        let k = KernelSpec::rbf(1.0, 1.0);
        let v = kernel_eval(&k, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn matern_half_is_exponential() {
        let ell = 0.7;
        let k = KernelSpec::matern(1.0, ell, 0.5);
        for &r in &[0.1, 1.0, 2.0] {
            let v = kernel_eval(&k, &[0.0], &[r]).unwrap();
            let expected = (-r / ell).exp();
            assert!((v - expected).abs() < 1e-12, "r={r}: {v} vs {expected}");
        }
    }

    #[test]
    fn matern_zero_lag_is_amplitude() {
        let k = KernelSpec::matern(2.3, 0.4, 1.8);
        let v = kernel_eval(&k, &[0.2, 0.5], &[0.2, 0.5]).unwrap();
        assert_eq!(v, 2.3);
        // Variance dominates every off-diagonal value for stationary kernels.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let u = [rng.gen::<f64>(), rng.gen::<f64>()];
            let u2 = [rng.gen::<f64>(), rng.gen::<f64>()];
            assert!(kernel_eval(&k, &u, &u2).unwrap() <= v + 1e-12);
        }
    }

    #[test]
    fn matern_approaches_rbf_shape_monotonically() {
        // The Matérn family converges to the squared-exponential shape as
        // smoothness grows. In the sqrt(2 tau)-scaled convention that limit
        // is amplitude * exp(-r^2 / (2 l^2)); our printed form reproduces the
        // scaled kernel when evaluated at distance sqrt(2 tau) * r.
        for &r in &[0.3, 0.7, 1.2] {
            let se_limit = (-(r * r) / 2.0f64).exp();
            let mut last_gap = f64::INFINITY;
            for &tau in &[10.0, 50.0, 100.0] {
                let k = KernelSpec::matern(1.0, 1.0, tau);
                let z = (2.0 * tau).sqrt() * r;
                let v = kernel_eval(&k, &[0.0], &[z]).unwrap();
                let gap = (v - se_limit).abs();
                assert!(
                    gap < last_gap,
                    "tau={tau}, r={r}: gap {gap} did not shrink from {last_gap}"
                );
                last_gap = gap;
            }
        }
    }

    #[test]
    fn separable_kernel_is_product_of_factors() {
        let time = KernelSpec::matern(1.3, 0.3, 1.5);
        let space = KernelSpec::rbf(0.8, 0.5);
        let k = KernelSpec::Separable {
            time: Box::new(time.clone()),
            space: Box::new(space.clone()),
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let u = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            let u2 = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            let v = kernel_eval(&k, &u, &u2).unwrap();
            let vt = kernel_eval(&time, &[u[0]], &[u2[0]]).unwrap();
            let vs = kernel_eval(&space, &u[1..], &u2[1..]).unwrap();
            assert!((v - vt * vs).abs() < 1e-12);
        }
    }

    #[test]
    fn nested_separable_rejected() {
        let inner = KernelSpec::Separable {
            time: Box::new(KernelSpec::rbf(1.0, 1.0)),
            space: Box::new(KernelSpec::rbf(1.0, 1.0)),
        };
        let outer = KernelSpec::Separable {
            time: Box::new(inner),
            space: Box::new(KernelSpec::rbf(1.0, 1.0)),
        };
        assert!(outer.validate().is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let k = KernelSpec::rbf(1.0, 1.0);
        assert!(kernel_eval(&k, &[0.0, 0.0], &[1.0]).is_err());
    }
}
