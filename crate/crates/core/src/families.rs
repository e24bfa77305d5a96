//! Parametric component densities.
//!
//! Every family exposes its log-density, the gradient of the log-density with
//! respect to its natural parameters, the expected Fisher information of each
//! parameter (used by the EM baseline) and a sampler. Location parameters use
//! the identity transform, scales and rates the (clamped) exponential.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Predictor values are clamped to this range before exponentiation.
pub const ETA_CLAMP: f64 = 30.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Inverse link mapping an additive predictor to a distribution parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform {
    Identity,
    Exp,
}

impl Transform {
    #[inline]
    pub fn apply(self, eta: f64) -> f64 {
        match self {
            Transform::Identity => eta,
            Transform::Exp => eta.clamp(-ETA_CLAMP, ETA_CLAMP).exp(),
        }
    }

    /// Derivative of [`Transform::apply`]. Zero outside the clamp range, where
    /// the clamped map is flat.
    #[inline]
    pub fn deriv(self, eta: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Exp => {
                if eta.abs() > ETA_CLAMP {
                    0.0
                } else {
                    eta.exp()
                }
            }
        }
    }

    pub fn inverse(self, theta: f64) -> f64 {
        match self {
            Transform::Identity => theta,
            Transform::Exp => theta.ln(),
        }
    }
}

/// Component distribution family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Normal,
    Laplace,
    Logistic,
    Poisson,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Normal,
        Family::Laplace,
        Family::Logistic,
        Family::Poisson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::Laplace => "laplace",
            Family::Logistic => "logistic",
            Family::Poisson => "poisson",
        }
    }

    pub fn from_name(name: &str) -> Option<Family> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(name))
    }

    pub fn param_count(self) -> usize {
        match self {
            Family::Poisson => 1,
            _ => 2,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Normal => &["mu", "sigma"],
            Family::Laplace | Family::Logistic => &["mu", "scale"],
            Family::Poisson => &["rate"],
        }
    }

    pub fn transforms(self) -> &'static [Transform] {
        match self {
            Family::Poisson => &[Transform::Exp],
            _ => &[Transform::Identity, Transform::Exp],
        }
    }

    /// Whether `y` lies in the support of the family.
    pub fn supports(self, y: f64) -> bool {
        match self {
            Family::Poisson => y >= 0.0 && y.fract() == 0.0 && y.is_finite(),
            _ => y.is_finite(),
        }
    }

    pub fn check_theta(self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::InvalidParameter {
                family: self.name(),
                detail: format!("expected {} parameters, got {}", self.param_count(), theta.len()),
            });
        }
        let positive = match self {
            Family::Poisson => theta[0],
            _ => theta[1],
        };
        if theta.iter().any(|t| !t.is_finite()) || positive <= 0.0 {
            return Err(Error::InvalidParameter {
                family: self.name(),
                detail: format!("parameters {theta:?} outside the valid domain"),
            });
        }
        Ok(())
    }

    fn check(self, y: f64, theta: &[f64]) -> Result<()> {
        self.check_theta(theta)?;
        if !self.supports(y) {
            return Err(Error::InvalidResponse {
                family: self.name(),
                y,
            });
        }
        Ok(())
    }

    /// Log-density (log-pmf for Poisson) of `y` under `theta`.
    pub fn log_density(self, y: f64, theta: &[f64]) -> Result<f64> {
        self.check(y, theta)?;
        Ok(self.log_density_unchecked(y, theta))
    }

    /// Gradient of the log-density with respect to the natural parameters.
    pub fn dlogf_dtheta(self, y: f64, theta: &[f64]) -> Result<Vec<f64>> {
        self.check(y, theta)?;
        let mut out = vec![0.0; self.param_count()];
        self.dlogf_dtheta_into(y, theta, &mut out);
        Ok(out)
    }

    /// Log-density without domain checks; returns `-inf` outside the support.
    #[inline]
    pub(crate) fn log_density_unchecked(self, y: f64, theta: &[f64]) -> f64 {
        match self {
            Family::Normal => {
                let z = (y - theta[0]) / theta[1];
                -HALF_LN_2PI - theta[1].ln() - 0.5 * z * z
            }
            Family::Laplace => -LN_2 - theta[1].ln() - (y - theta[0]).abs() / theta[1],
            Family::Logistic => {
                let a = ((y - theta[0]) / theta[1]).abs();
                -a - theta[1].ln() - 2.0 * (-a).exp().ln_1p()
            }
            Family::Poisson => {
                if !self.supports(y) {
                    return f64::NEG_INFINITY;
                }
                let rate = theta[0];
                if y == 0.0 {
                    -rate
                } else {
                    y * rate.ln() - rate - ln_gamma(y + 1.0)
                }
            }
        }
    }

    #[inline]
    pub(crate) fn dlogf_dtheta_into(self, y: f64, theta: &[f64], out: &mut [f64]) {
        match self {
            Family::Normal => {
                let s = theta[1];
                let r = y - theta[0];
                out[0] = r / (s * s);
                out[1] = r * r / (s * s * s) - 1.0 / s;
            }
            Family::Laplace => {
                let b = theta[1];
                let r = y - theta[0];
                let sign = if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                out[0] = sign / b;
                out[1] = -1.0 / b + r.abs() / (b * b);
            }
            Family::Logistic => {
                let s = theta[1];
                let z = (y - theta[0]) / s;
                let t = (0.5 * z).tanh();
                out[0] = t / s;
                out[1] = (z * t - 1.0) / s;
            }
            Family::Poisson => {
                out[0] = y / theta[0] - 1.0;
            }
        }
    }

    /// Expected Fisher information of each natural parameter. The families
    /// implemented here have orthogonal parameters, so the diagonal suffices.
    pub fn fisher_info_into(self, theta: &[f64], out: &mut [f64]) {
        match self {
            Family::Normal => {
                let s2 = theta[1] * theta[1];
                out[0] = 1.0 / s2;
                out[1] = 2.0 / s2;
            }
            Family::Laplace => {
                let b2 = theta[1] * theta[1];
                out[0] = 1.0 / b2;
                out[1] = 1.0 / b2;
            }
            Family::Logistic => {
                let s2 = theta[1] * theta[1];
                out[0] = 1.0 / (3.0 * s2);
                out[1] = (3.0 + PI * PI) / (9.0 * s2);
            }
            Family::Poisson => {
                out[0] = 1.0 / theta[0];
            }
        }
    }

    /// Mean of the distribution.
    pub fn mean(self, theta: &[f64]) -> f64 {
        theta[0]
    }

    /// Draw one observation.
    pub fn sample<R: Rng + ?Sized>(self, theta: &[f64], rng: &mut R) -> Result<f64> {
        self.check_theta(theta)?;
        let draw = match self {
            Family::Normal => Normal::new(theta[0], theta[1])
                .map_err(|e| Error::InvalidParameter {
                    family: self.name(),
                    detail: e.to_string(),
                })?
                .sample(rng),
            Family::Laplace => {
                let u: f64 = rng.random::<f64>() - 0.5;
                theta[0] - theta[1] * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            Family::Logistic => {
                // open interval keeps the logit finite
                let u: f64 = loop {
                    let u = rng.random::<f64>();
                    if u > 0.0 {
                        break u;
                    }
                };
                theta[0] + theta[1] * (u / (1.0 - u)).ln()
            }
            Family::Poisson => Poisson::new(theta[0])
                .map_err(|e| Error::InvalidParameter {
                    family: self.name(),
                    detail: e.to_string(),
                })?
                .sample(rng),
        };
        Ok(draw)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn central_diff(family: Family, y: f64, theta: &[f64], k: usize, h: f64) -> f64 {
        let mut up = theta.to_vec();
        let mut dn = theta.to_vec();
        up[k] += h;
        dn[k] -= h;
        (family.log_density_unchecked(y, &up) - family.log_density_unchecked(y, &dn)) / (2.0 * h)
    }

    #[test]
    fn log_density_examples() {
        let v = Family::Normal.log_density(0.0, &[0.0, 1.0]).unwrap();
        assert!((v + 0.5 * (2.0 * PI).ln()).abs() < 1e-14);
        assert!((v + 0.918938).abs() < 1e-6);

        let v = Family::Laplace.log_density(0.0, &[0.0, 1.0]).unwrap();
        assert!((v - 0.5f64.ln()).abs() < 1e-14);

        // direct pmf: 2^3 e^-2 / 3!
        let oracle = (8.0 * (-2.0f64).exp() / 6.0).ln();
        let v = Family::Poisson.log_density(3.0, &[2.0]).unwrap();
        assert!((v - oracle).abs() < 1e-12);
        assert!((v + 1.712318).abs() < 1e-6);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            Family::Normal.log_density(0.0, &[0.0, 0.0]),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            Family::Laplace.log_density(0.0, &[0.0, -1.0]),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            Family::Poisson.log_density(-1.0, &[2.0]),
            Err(Error::InvalidResponse { .. })
        ));
        assert!(matches!(
            Family::Poisson.log_density(1.5, &[2.0]),
            Err(Error::InvalidResponse { .. })
        ));
        assert!(Family::Poisson.dlogf_dtheta(2.0, &[0.0]).is_err());
    }

    #[test]
    fn gradient_examples() {
        let g = Family::Normal.dlogf_dtheta(1.0, &[0.0, 1.0]).unwrap();
        assert_eq!(g[0], 1.0);
        let g = Family::Normal.dlogf_dtheta(0.0, &[0.0, 1.0]).unwrap();
        assert_eq!(g[1], -1.0);

        let theta = [0.2, 0.5];
        let g = Family::Logistic.dlogf_dtheta(0.7, &theta).unwrap();
        for k in 0..2 {
            let fd = central_diff(Family::Logistic, 0.7, &theta, k, 1e-6);
            assert!((g[k] - fd).abs() <= 1e-6 * fd.abs().max(1e-12), "{k}: {} vs {fd}", g[k]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_on_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for family in Family::ALL {
            for _ in 0..100 {
                let theta: Vec<f64> = match family {
                    Family::Poisson => vec![rng.random_range(0.2..20.0)],
                    _ => vec![rng.random_range(-3.0..3.0), rng.random_range(0.2..4.0)],
                };
                let y = match family {
                    Family::Poisson => rng.random_range(0..30) as f64,
                    _ => theta[0] + rng.random_range(-6.0..6.0),
                };
                if family == Family::Laplace && (y - theta[0]).abs() < 1e-3 {
                    continue;
                }
                let g = family.dlogf_dtheta(y, &theta).unwrap();
                for k in 0..family.param_count() {
                    let h = 1e-6 * theta[k].abs().max(1.0);
                    let fd = central_diff(family, y, &theta, k, h);
                    let err = (g[k] - fd).abs() / fd.abs().max(1e-3);
                    assert!(err < 1e-5, "{family} k={k} y={y} theta={theta:?}: {} vs {fd}", g[k]);
                }
            }
        }
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn densities_integrate_to_one() {
        for family in [Family::Normal, Family::Laplace, Family::Logistic] {
            let theta = [0.3, 1.7];
            // kink of the Laplace density sits on a grid node
            let total = simpson(|y| family.log_density_unchecked(y, &theta).exp(), -80.0 + 0.3, 80.0 + 0.3, 160_000);
            assert!((total - 1.0).abs() < 1e-6, "{family}: {total}");
        }
        for rate in [0.5, 4.0, 20.0] {
            let total: f64 = (0..=200)
                .map(|k| Family::Poisson.log_density_unchecked(k as f64, &[rate]).exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-10, "rate {rate}: {total}");
        }
    }

    #[test]
    fn fisher_information_matches_score_variance() {
        for family in [Family::Normal, Family::Laplace, Family::Logistic] {
            let theta = [0.0, 1.3];
            let mut info = [0.0; 2];
            family.fisher_info_into(&theta, &mut info);
            for k in 0..2 {
                let integrand = |y: f64| {
                    let mut g = [0.0; 2];
                    family.dlogf_dtheta_into(y, &theta, &mut g);
                    g[k] * g[k] * family.log_density_unchecked(y, &theta).exp()
                };
                // split at the location, where the Laplace score jumps
                let e = simpson(integrand, -60.0, -1e-12, 120_000)
                    + simpson(integrand, 1e-12, 60.0, 120_000);
                assert!((e - info[k]).abs() < 1e-5, "{family} k={k}: {e} vs {}", info[k]);
            }
        }
    }

    #[test]
    fn symmetric_families_peak_at_location() {
        for family in [Family::Normal, Family::Laplace, Family::Logistic] {
            let theta = [1.25, 0.8];
            let at_mode = family.log_density_unchecked(1.25, &theta);
            for i in 0..=400 {
                let y = -3.0 + i as f64 * 0.02;
                assert!(family.log_density_unchecked(y, &theta) <= at_mode + 1e-15);
            }
        }
    }

    #[test]
    fn transform_examples() {
        assert_eq!(Transform::Exp.apply(0.0), 1.0);
        assert_eq!(Transform::Exp.deriv(0.0), 1.0);
        assert_eq!(Transform::Identity.apply(-3.2), -3.2);
        assert_eq!(Transform::Identity.deriv(-3.2), 1.0);
        assert!((Transform::Exp.apply(2.0) - 7.389056).abs() < 1e-6);
        assert!(Transform::Exp.apply(1e6).is_finite());
        assert!(Transform::Exp.apply(-1e6) > 0.0);
        for i in -50..=50 {
            let eta = i as f64 * 0.5;
            assert!(Transform::Exp.deriv(eta) > 0.0);
            assert!(Transform::Exp.apply(eta) > 0.0);
        }
    }

    #[test]
    fn sampler_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = Family::Normal.sample(&[0.0, 1e-12], &mut rng).unwrap();
        assert!(y.abs() < 1e-9);

        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| Family::Poisson.sample(&[4.0], &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 4.0).abs() < 0.07, "{mean}");

        let mut draws: Vec<f64> = (0..n)
            .map(|_| Family::Laplace.sample(&[0.0, 1.0], &mut rng).unwrap())
            .collect();
        draws.sort_by(f64::total_cmp);
        let median = 0.5 * (draws[n / 2 - 1] + draws[n / 2]);
        assert!(median.abs() < 0.02, "{median}");

        assert!(Family::Poisson.sample(&[-1.0], &mut rng).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let a: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            (0..10).map(|_| Family::Logistic.sample(&[1.0, 2.0], &mut rng).unwrap()).collect()
        };
        let b: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            (0..10).map(|_| Family::Logistic.sample(&[1.0, 2.0], &mut rng).unwrap()).collect()
        };
        assert_eq!(a, b);
    }
}
