//! Prior distributions over the scalar parameter: gamma (shape-scale),
//! normal, uniform on (0,1), and finite (weighted point) priors, with
//! densities, quantile-based truncation bounds, and samplers.

use rand::{Rng, RngCore};
use rand_distr::Distribution;
use statrs::distribution::ContinuousCDF;
use thiserror::Error;

use crate::model::Support;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriorError {
    #[error("gamma prior requires shape > 0 and scale > 0, got shape {shape}, scale {scale}")]
    BadGamma { shape: f64, scale: f64 },
    #[error("normal prior requires finite mean and variance > 0, got mean {mean}, variance {variance}")]
    BadNormal { mean: f64, variance: f64 },
    #[error("finite prior requires matching nonempty point/weight lists, got {points} points and {weights} weights")]
    BadFiniteShape { points: usize, weights: usize },
    #[error("finite prior weights must be nonnegative and sum to 1, got sum {sum}")]
    BadWeights { sum: f64 },
    #[error("non-finite value in prior specification: {value}")]
    NonFinite { value: f64 },
}

/// A prior `Q` over the parameter space.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    /// Shape-scale gamma: density `theta^(shape-1) e^(-theta/scale) / (Gamma(shape) scale^shape)`.
    Gamma { shape: f64, scale: f64 },
    Normal { mean: f64, variance: f64 },
    Uniform01,
    Finite { points: Vec<f64>, weights: Vec<f64> },
}

impl PriorSpec {
    pub fn gamma(shape: f64, scale: f64) -> Result<Self, PriorError> {
        if !(shape.is_finite() && scale.is_finite() && shape > 0.0 && scale > 0.0) {
            return Err(PriorError::BadGamma { shape, scale });
        }
        Ok(PriorSpec::Gamma { shape, scale })
    }

    pub fn normal(mean: f64, variance: f64) -> Result<Self, PriorError> {
        if !(mean.is_finite() && variance.is_finite() && variance > 0.0) {
            return Err(PriorError::BadNormal { mean, variance });
        }
        Ok(PriorSpec::Normal { mean, variance })
    }

    pub fn uniform01() -> Self {
        PriorSpec::Uniform01
    }

    /// Weighted point prior. Weights must be nonnegative and sum to 1 within
    /// 1e-9; they are renormalized to sum exactly.
    pub fn finite(points: Vec<f64>, weights: Vec<f64>) -> Result<Self, PriorError> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(PriorError::BadFiniteShape {
                points: points.len(),
                weights: weights.len(),
            });
        }
        for &v in points.iter().chain(weights.iter()) {
            if !v.is_finite() {
                return Err(PriorError::NonFinite { value: v });
            }
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(PriorError::BadWeights {
                sum: weights.iter().sum(),
            });
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PriorError::BadWeights { sum });
        }
        let weights = weights.iter().map(|w| w / sum).collect();
        Ok(PriorSpec::Finite { points, weights })
    }

    /// Point mass at a single parameter value.
    pub fn point_mass(theta: f64) -> Result<Self, PriorError> {
        PriorSpec::finite(vec![theta], vec![1.0])
    }

    pub fn support(&self) -> Support {
        match self {
            PriorSpec::Gamma { .. } => Support::Interval {
                lo: 0.0,
                hi: f64::INFINITY,
            },
            PriorSpec::Normal { .. } => Support::Interval {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            },
            PriorSpec::Uniform01 => Support::Interval { lo: 0.0, hi: 1.0 },
            PriorSpec::Finite { points, .. } => Support::Finite(points.clone()),
        }
    }

    /// Density with respect to Lebesgue measure (continuous kinds) or to
    /// counting measure (finite kind: the weight of an exactly matching
    /// point, 0 elsewhere).
    pub fn density(&self, theta: f64) -> f64 {
        match self {
            PriorSpec::Finite { points, weights } => points
                .iter()
                .position(|p| *p == theta)
                .map_or(0.0, |i| weights[i]),
            _ => self.log_density(theta).exp(),
        }
    }

    /// `log` of [`PriorSpec::density`]; `-inf` outside the support.
    pub fn log_density(&self, theta: f64) -> f64 {
        match self {
            PriorSpec::Gamma { shape, scale } => {
                if theta <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                (shape - 1.0) * theta.ln()
                    - theta / scale
                    - statrs::function::gamma::ln_gamma(*shape)
                    - shape * scale.ln()
            }
            PriorSpec::Normal { mean, variance } => {
                let d = theta - mean;
                -0.5 * d * d / variance - 0.5 * (2.0 * std::f64::consts::PI * variance).ln()
            }
            PriorSpec::Uniform01 => {
                if (0.0..=1.0).contains(&theta) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            PriorSpec::Finite { .. } => {
                let d = self.density(theta);
                if d > 0.0 {
                    d.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// The interval holding all but `tail_mass` of the prior in each
    /// unbounded tail, for quadrature truncation. `None` for finite priors,
    /// which are summed exactly instead.
    pub fn truncated_interval(&self, tail_mass: f64) -> Option<(f64, f64)> {
        match self {
            PriorSpec::Gamma { shape, scale } => {
                let dist = statrs::distribution::Gamma::new(*shape, 1.0 / scale)
                    .expect("validated hyperparameters");
                // The density is unbounded at 0 for shape < 1; staying off
                // the endpoint keeps the quadrature clean.
                let lo = if *shape < 1.0 {
                    dist.inverse_cdf(tail_mass)
                } else {
                    0.0
                };
                Some((lo, dist.inverse_cdf(1.0 - tail_mass)))
            }
            PriorSpec::Normal { mean, variance } => {
                let dist = statrs::distribution::Normal::new(*mean, variance.sqrt())
                    .expect("validated hyperparameters");
                Some((dist.inverse_cdf(tail_mass), dist.inverse_cdf(1.0 - tail_mass)))
            }
            PriorSpec::Uniform01 => Some((0.0, 1.0)),
            PriorSpec::Finite { .. } => None,
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        match self {
            PriorSpec::Gamma { shape, scale } => rand_distr::Gamma::new(*shape, *scale)
                .expect("validated hyperparameters")
                .sample(rng),
            PriorSpec::Normal { mean, variance } => {
                rand_distr::Normal::new(*mean, variance.sqrt())
                    .expect("validated hyperparameters")
                    .sample(rng)
            }
            PriorSpec::Uniform01 => (&mut *rng).random::<f64>(),
            PriorSpec::Finite { points, weights } => {
                let u: f64 = (&mut *rng).random();
                let mut acc = 0.0;
                for (p, w) in points.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *p;
                    }
                }
                *points.last().expect("nonempty by construction")
            }
        }
    }
}

/// Draws one parameter value from the prior.
pub fn sample_param(prior: &PriorSpec, rng: &mut dyn RngCore) -> f64 {
    prior.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::substream;

    #[test]
    fn constructors_reject_bad_hyperparameters() {
        assert!(PriorSpec::gamma(0.0, 1.0).is_err());
        assert!(PriorSpec::gamma(1.0, -2.0).is_err());
        assert!(PriorSpec::normal(0.0, 0.0).is_err());
        assert!(PriorSpec::normal(f64::NAN, 1.0).is_err());
        assert!(PriorSpec::finite(vec![1.0], vec![0.5]).is_err());
        assert!(PriorSpec::finite(vec![1.0, 2.0], vec![0.7, 0.2]).is_err());
        assert!(PriorSpec::finite(vec![1.0, 2.0], vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn gamma_density_matches_exponential_special_case() {
        // G(1, 1/lambda) has density lambda * exp(-lambda * theta).
        let lambda = 2.5;
        let prior = PriorSpec::gamma(1.0, 1.0 / lambda).expect("valid");
        for theta in [0.1, 0.7, 3.0] {
            let expected = lambda * (-lambda * theta).exp();
            assert!((prior.density(theta) - expected).abs() < 1e-12 * expected);
        }
    }

    #[test]
    fn point_mass_prior_always_samples_its_point() {
        let prior = PriorSpec::point_mass(0.75).expect("valid");
        let mut rng = substream(7, 0);
        for _ in 0..100 {
            assert_eq!(prior.sample(&mut rng), 0.75);
        }
    }

    #[test]
    fn uniform_samples_lie_in_unit_interval() {
        let prior = PriorSpec::uniform01();
        let mut rng = substream(11, 3);
        for _ in 0..1000 {
            let v = prior.sample(&mut rng);
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn gamma_sample_mean_matches_analytic_mean() {
        // gamma(1, 1/lambda) with lambda = 2 has mean 1/2 and variance 1/4.
        let prior = PriorSpec::gamma(1.0, 0.5).expect("valid");
        let mut rng = substream(42, 1);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += prior.sample(&mut rng);
        }
        let mean = sum / n as f64;
        let se = 0.5 / (n as f64).sqrt();
        assert!(
            (mean - 0.5).abs() < 3.0 * se,
            "sample mean {mean} too far from 0.5"
        );
    }

    #[test]
    fn truncated_interval_carries_almost_all_mass() {
        let prior = PriorSpec::normal(1.0, 4.0).expect("valid");
        let (lo, hi) = prior.truncated_interval(1e-12).expect("continuous");
        assert!(lo < -10.0 && hi > 12.0);
        let uniform = PriorSpec::uniform01();
        assert_eq!(uniform.truncated_interval(1e-12), Some((0.0, 1.0)));
        let finite = PriorSpec::point_mass(2.0).expect("valid");
        assert_eq!(finite.truncated_interval(1e-12), None);
    }

    #[test]
    fn finite_prior_density_is_the_weight() {
        let prior = PriorSpec::finite(vec![0.2, 0.8], vec![0.25, 0.75]).expect("valid");
        assert_eq!(prior.density(0.2), 0.25);
        assert_eq!(prior.density(0.8), 0.75);
        assert_eq!(prior.density(0.5), 0.0);
    }
}
