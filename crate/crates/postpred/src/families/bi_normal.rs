//! Bivariate normal pairs with a common unknown mean: given `theta`, the
//! pair `(X1, X2)` is jointly normal with means `(theta, theta)`, equal
//! variances `sigma^2` and correlation `rho`; the prior on `theta` is
//! `N(mu, tau^2)`.
//!
//! Conjugacy keeps everything Gaussian. The posterior over `theta` is the
//! normal `exp(-A1 theta^2 + B1 theta)` up to normalization, and the
//! predictive pair is again bivariate normal with a common mean `m1`,
//! common variance `sigma1^2` and correlation `rho1`. Two independent
//! derivations of `(rho1, sigma1^2, m1)` are exposed: completing the
//! square in the exponent (`predictive_params`) and mixture moments
//! (`predictive_params_by_moments`); they must agree to rounding.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

use super::FamilyError;
use crate::model::{ModelFamily, SampleBatch, Support};
use crate::prior::PriorSpec;

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Density of a bivariate normal with common mean `m`, common variance
/// `var` and correlation `rho`, evaluated at `(x1, x2)`.
pub fn binormal_density(m: f64, var: f64, rho: f64, x1: f64, x2: f64) -> f64 {
    let u = x1 - m;
    let v = x2 - m;
    let one_minus_r2 = 1.0 - rho * rho;
    let q = (u * u - 2.0 * rho * u * v + v * v) / (var * one_minus_r2);
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * var * one_minus_r2.sqrt())
}

/// Coefficients of the posterior exponent `-A1 theta^2 + B1 theta - C1`
/// and the resulting normal posterior moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalPosterior {
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Parameters of the predictive pair distribution: bivariate normal with
/// common mean `m1`, common variance `sigma1_sq` and correlation `rho1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalPredictive {
    pub rho1: f64,
    pub sigma1_sq: f64,
    pub m1: f64,
}

impl NormalPredictive {
    /// Mean of `X2` given `X1 = x1` under the predictive distribution.
    pub fn conditional_mean(&self, x1: f64) -> f64 {
        (1.0 - self.rho1) * self.m1 + self.rho1 * x1
    }

    /// Variance of `X2` given `X1`, the same for every `x1`.
    pub fn conditional_variance(&self) -> f64 {
        self.sigma1_sq * (1.0 - self.rho1 * self.rho1)
    }

    pub fn conditional_density(&self, x1: f64, x2: f64) -> f64 {
        let var = self.conditional_variance();
        let z = x2 - self.conditional_mean(x1);
        (-0.5 * z * z / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    pub fn conditional_cdf(&self, x1: f64, t: f64) -> f64 {
        let sd = self.conditional_variance().sqrt();
        normal_cdf((t - self.conditional_mean(x1)) / sd)
    }

    pub fn joint_density(&self, x1: f64, x2: f64) -> f64 {
        binormal_density(self.m1, self.sigma1_sq, self.rho1, x1, x2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivariateNormalFamily {
    sigma: f64,
    rho: f64,
    mu: f64,
    tau: f64,
}

impl BivariateNormalFamily {
    pub fn new(sigma: f64, rho: f64, mu: f64, tau: f64) -> Result<Self, FamilyError> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(FamilyError::BadHyper {
                name: "sigma",
                value: sigma,
            });
        }
        if !(rho.is_finite() && rho.abs() < 1.0) {
            return Err(FamilyError::BadHyper {
                name: "rho",
                value: rho,
            });
        }
        if !mu.is_finite() {
            return Err(FamilyError::BadHyper {
                name: "mu",
                value: mu,
            });
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(FamilyError::BadHyper {
                name: "tau",
                value: tau,
            });
        }
        Ok(BivariateNormalFamily { sigma, rho, mu, tau })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn prior(&self) -> PriorSpec {
        PriorSpec::normal(self.mu, self.tau * self.tau).expect("validated hyperparameters")
    }

    /// Precision-like coefficient `g = 1 / (sigma^2 (1 + rho))`: each
    /// observation contributes `g theta^2 - g (x1 + x2) theta` to the
    /// negative log-likelihood exponent.
    fn g(&self) -> f64 {
        1.0 / (self.sigma * self.sigma * (1.0 + self.rho))
    }

    pub fn posterior_hyper(&self, sample: &SampleBatch) -> NormalPosterior {
        let g = self.g();
        let n = sample.len() as f64;
        let tau2 = self.tau * self.tau;
        let mut s1 = 0.0;
        let mut quad = 0.0;
        for pair in sample.pairs() {
            s1 += pair.x1 + pair.x2;
            quad += pair.x1 * pair.x1 + pair.x2 * pair.x2 - 2.0 * self.rho * pair.x1 * pair.x2;
        }
        let a1 = n * g + 0.5 / tau2;
        let b1 = g * s1 + self.mu / tau2;
        let c1 = quad / (2.0 * self.sigma * self.sigma * (1.0 - self.rho * self.rho))
            + self.mu * self.mu / (2.0 * tau2);
        NormalPosterior {
            a1,
            b1,
            c1,
            mean: b1 / (2.0 * a1),
            variance: 0.5 / a1,
        }
    }

    /// Predictive parameters by completing the square: integrating the
    /// next pair's likelihood against the posterior leaves a quadratic
    /// form `A3 (x1^2 + x2^2) + B3 x1 x2 + C3 (x1 + x2)` whose
    /// coefficients identify `(rho1, sigma1^2, m1)`.
    pub fn predictive_params(&self, sample: &SampleBatch) -> NormalPredictive {
        let g = self.g();
        let post = self.posterior_hyper(sample);
        let a2 = post.a1 + g;
        let inv_2s2r = 1.0 / (2.0 * self.sigma * self.sigma * (1.0 - self.rho * self.rho));
        let a3 = inv_2s2r - g * g / (4.0 * a2);
        let b3 = -2.0 * self.rho * inv_2s2r - g * g / (2.0 * a2);
        let c3 = -g * post.b1 / (2.0 * a2);
        let rho1 = -b3 / (2.0 * a3);
        let sigma1_sq = 1.0 / (2.0 * a3 * (1.0 - rho1 * rho1));
        let m1 = -c3 / (2.0 * a3 * (1.0 - rho1));
        NormalPredictive { rho1, sigma1_sq, m1 }
    }

    /// Predictive parameters from mixture moments: with posterior
    /// variance `v`, the pair has common variance `v + sigma^2`,
    /// covariance `v + rho sigma^2` and mean the posterior mean.
    pub fn predictive_params_by_moments(&self, sample: &SampleBatch) -> NormalPredictive {
        let post = self.posterior_hyper(sample);
        let s2 = self.sigma * self.sigma;
        let var = post.variance + s2;
        let cov = post.variance + self.rho * s2;
        NormalPredictive {
            rho1: cov / var,
            sigma1_sq: var,
            m1: post.mean,
        }
    }

    pub fn conditional_density_cf(
        &self,
        sample: &SampleBatch,
        x1: f64,
        x2: f64,
    ) -> Result<f64, FamilyError> {
        if !x1.is_finite() {
            return Err(FamilyError::BadArg { name: "x1", value: x1 });
        }
        if !x2.is_finite() {
            return Err(FamilyError::BadArg { name: "x2", value: x2 });
        }
        Ok(self.predictive_params(sample).conditional_density(x1, x2))
    }

    pub fn conditional_cdf_cf(
        &self,
        sample: &SampleBatch,
        x1: f64,
        t: f64,
    ) -> Result<f64, FamilyError> {
        if !x1.is_finite() {
            return Err(FamilyError::BadArg { name: "x1", value: x1 });
        }
        if t.is_nan() {
            return Err(FamilyError::BadArg { name: "t", value: t });
        }
        if t == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        if t == f64::INFINITY {
            return Ok(1.0);
        }
        Ok(self.predictive_params(sample).conditional_cdf(x1, t))
    }

    pub fn regression_cf(&self, sample: &SampleBatch, x1: f64) -> Result<f64, FamilyError> {
        if !x1.is_finite() {
            return Err(FamilyError::BadArg { name: "x1", value: x1 });
        }
        Ok(self.predictive_params(sample).conditional_mean(x1))
    }
}

impl ModelFamily for BivariateNormalFamily {
    fn name(&self) -> &'static str {
        "normal"
    }

    fn param_support(&self) -> Support {
        Support::Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    fn obs_support(&self) -> (Support, Support) {
        (
            Support::Interval {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            },
            Support::Interval {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            },
        )
    }

    fn log_joint_density(&self, theta: f64, x1: f64, x2: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        let one_minus_r2 = 1.0 - self.rho * self.rho;
        let u = x1 - theta;
        let v = x2 - theta;
        let q = (u * u - 2.0 * self.rho * u * v + v * v) / (s2 * one_minus_r2);
        -0.5 * q - (2.0 * std::f64::consts::PI * s2 * one_minus_r2.sqrt()).ln()
    }

    fn joint_density(&self, theta: f64, x1: f64, x2: f64) -> f64 {
        binormal_density_general(theta, self.sigma, self.rho, x1, x2)
    }

    fn marginal1_density(&self, theta: f64, x1: f64) -> f64 {
        let z = (x1 - theta) / self.sigma;
        (-0.5 * z * z).exp() / (self.sigma * (2.0 * std::f64::consts::PI).sqrt())
    }

    fn true_conditional_density(&self, theta: f64, x1: f64, x2: f64) -> f64 {
        let mean = (1.0 - self.rho) * theta + self.rho * x1;
        let var = self.sigma * self.sigma * (1.0 - self.rho * self.rho);
        let z = x2 - mean;
        (-0.5 * z * z / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    fn true_conditional_cdf(&self, theta: f64, x1: f64, t: f64) -> f64 {
        let mean = (1.0 - self.rho) * theta + self.rho * x1;
        let sd = self.sigma * (1.0 - self.rho * self.rho).sqrt();
        normal_cdf((t - mean) / sd)
    }

    fn true_regression(&self, theta: f64, x1: f64) -> f64 {
        (1.0 - self.rho) * theta + self.rho * x1
    }

    fn sample_x1(&self, theta: f64, rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(&mut *rng);
        theta + self.sigma * z
    }

    fn sample_x2_given(&self, theta: f64, x1: f64, rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(&mut *rng);
        (1.0 - self.rho) * theta + self.rho * x1 + self.sigma * (1.0 - self.rho * self.rho).sqrt() * z
    }
}

fn binormal_density_general(mean: f64, sigma: f64, rho: f64, x1: f64, x2: f64) -> f64 {
    let s2 = sigma * sigma;
    let one_minus_r2 = 1.0 - rho * rho;
    let u = x1 - mean;
    let v = x2 - mean;
    let q = (u * u - 2.0 * rho * u * v + v * v) / (s2 * one_minus_r2);
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * s2 * one_minus_r2.sqrt())
}
