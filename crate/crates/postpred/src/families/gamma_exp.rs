//! The gamma-exponential chain: `X1 ~ Exp(theta)` and `X2 | X1 = x1 ~
//! Exp(theta x1)`, with joint density `theta^2 x1 exp(-theta x1 (1 + x2))`
//! on the positive quadrant, paired with the conjugate prior `G(1, 1/lambda)`.
//!
//! Under that prior every Bayes estimator has a closed form driven by the
//! statistic `a_n(x', x1) = lambda + x1 + sum_i x'_i1 (1 + x'_i2)`; those
//! forms live here and double as oracles for the quadrature engine.

use rand::RngCore;
use rand_distr::Distribution;

use super::FamilyError;
use crate::model::{ModelFamily, SampleBatch, Support};
use crate::prior::PriorSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaExpFamily {
    lambda: f64,
}

impl GammaExpFamily {
    pub fn new(lambda: f64) -> Result<Self, FamilyError> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(FamilyError::BadHyper {
                name: "lambda",
                value: lambda,
            });
        }
        Ok(GammaExpFamily { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The conjugate prior `G(1, 1/lambda)`, density `lambda e^(-lambda theta)`.
    pub fn prior(&self) -> PriorSpec {
        PriorSpec::gamma(1.0, 1.0 / self.lambda).expect("lambda validated at construction")
    }

    fn validate_sample(sample: &SampleBatch) -> Result<(), FamilyError> {
        for (index, pair) in sample.pairs().iter().enumerate() {
            if !(pair.x1 > 0.0) {
                return Err(FamilyError::BadPair {
                    index,
                    message: format!("x1 = {} must be positive", pair.x1),
                });
            }
            if !(pair.x2 >= 0.0) {
                return Err(FamilyError::BadPair {
                    index,
                    message: format!("x2 = {} must be nonnegative", pair.x2),
                });
            }
        }
        Ok(())
    }

    /// `a_n(x', x1) = lambda + x1 + sum_i x'_i1 (1 + x'_i2)`.
    pub fn a_n(&self, sample: &SampleBatch, x1: f64) -> Result<f64, FamilyError> {
        if !(x1.is_finite() && x1 > 0.0) {
            return Err(FamilyError::BadArg {
                name: "x1",
                value: x1,
            });
        }
        Self::validate_sample(sample)?;
        let mut a = self.lambda + x1;
        for pair in sample.pairs() {
            a += pair.x1 * (1.0 + pair.x2);
        }
        Ok(a)
    }

    /// Bayes-estimated conditional density of `X2` given `X1 = x1`:
    /// `(2n+2) x1 a^(2n+2) / (x1 x2 + a)^(2n+3)`.
    pub fn conditional_density_cf(
        &self,
        sample: &SampleBatch,
        x1: f64,
        x2: f64,
    ) -> Result<f64, FamilyError> {
        if !(x2.is_finite() && x2 >= 0.0) {
            return Err(FamilyError::BadArg {
                name: "x2",
                value: x2,
            });
        }
        let a = self.a_n(sample, x1)?;
        let m = 2.0 * sample.len() as f64 + 2.0;
        // a^(m) / (x1 x2 + a)^(m+1), kept in log space for large n.
        let log_value = m.ln() + x1.ln() + m * a.ln() - (m + 1.0) * (x1 * x2 + a).ln();
        Ok(log_value.exp())
    }

    /// Bayes-estimated conditional CDF: `1 - (1 + x1 t / a)^(-(2n+2))`;
    /// 0 for `t < 0`.
    pub fn conditional_cdf_cf(
        &self,
        sample: &SampleBatch,
        x1: f64,
        t: f64,
    ) -> Result<f64, FamilyError> {
        if t.is_nan() {
            return Err(FamilyError::BadArg { name: "t", value: t });
        }
        let a = self.a_n(sample, x1)?;
        if t < 0.0 {
            return Ok(0.0);
        }
        if t == f64::INFINITY {
            return Ok(1.0);
        }
        let m = 2.0 * sample.len() as f64 + 2.0;
        // 1 - exp(-m ln(1 + x1 t / a)), written to stay accurate near 0.
        Ok(-(-m * (x1 * t / a).ln_1p()).exp_m1())
    }

    /// Bayes-estimated regression curve: `a_n / ((2n+1) x1)`.
    pub fn regression_cf(&self, sample: &SampleBatch, x1: f64) -> Result<f64, FamilyError> {
        let a = self.a_n(sample, x1)?;
        Ok(a / ((2.0 * sample.len() as f64 + 1.0) * x1))
    }

    /// Closed form of the posterior predictive joint density
    /// `f*_{n,x'}(x1, x2)`.
    pub fn predictive_joint_cf(
        &self,
        sample: &SampleBatch,
        x1: f64,
        x2: f64,
    ) -> Result<f64, FamilyError> {
        if !(x1.is_finite() && x1 > 0.0) {
            return Err(FamilyError::BadArg {
                name: "x1",
                value: x1,
            });
        }
        if !(x2.is_finite() && x2 >= 0.0) {
            return Err(FamilyError::BadArg {
                name: "x2",
                value: x2,
            });
        }
        Self::validate_sample(sample)?;
        let n = sample.len() as f64;
        let s: f64 = sample
            .pairs()
            .iter()
            .map(|p| p.x1 * (1.0 + p.x2))
            .sum();
        // Integrating theta^(2n+2) e^(-theta (lambda + S + x1(1+x2))) against
        // the prior gives (2n+2)(2n+1) (lambda+S)^(2n+1) x1 / (...)^(2n+3).
        let log_value = ((2.0 * n + 2.0) * (2.0 * n + 1.0)).ln()
            + (2.0 * n + 1.0) * (self.lambda + s).ln()
            + x1.ln()
            - (2.0 * n + 3.0) * (self.lambda + s + x1 * (1.0 + x2)).ln();
        Ok(log_value.exp())
    }
}

impl ModelFamily for GammaExpFamily {
    fn name(&self) -> &'static str {
        "gamma"
    }

    fn param_support(&self) -> Support {
        Support::Interval {
            lo: f64::MIN_POSITIVE,
            hi: f64::INFINITY,
        }
    }

    fn obs_support(&self) -> (Support, Support) {
        (
            Support::Interval {
                lo: f64::MIN_POSITIVE,
                hi: f64::INFINITY,
            },
            Support::Interval {
                lo: 0.0,
                hi: f64::INFINITY,
            },
        )
    }

    fn log_joint_density(&self, theta: f64, x1: f64, x2: f64) -> f64 {
        if theta <= 0.0 || x1 <= 0.0 || x2 < 0.0 {
            return f64::NEG_INFINITY;
        }
        2.0 * theta.ln() + x1.ln() - theta * x1 * (1.0 + x2)
    }

    fn marginal1_density(&self, theta: f64, x1: f64) -> f64 {
        if theta <= 0.0 || x1 < 0.0 {
            return 0.0;
        }
        theta * (-theta * x1).exp()
    }

    fn true_conditional_density(&self, theta: f64, x1: f64, x2: f64) -> f64 {
        if theta <= 0.0 || x1 <= 0.0 || x2 < 0.0 {
            return 0.0;
        }
        theta * x1 * (-theta * x1 * x2).exp()
    }

    fn true_conditional_cdf(&self, theta: f64, x1: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        -(-theta * x1 * t).exp_m1()
    }

    fn true_regression(&self, theta: f64, x1: f64) -> f64 {
        1.0 / (theta * x1)
    }

    fn sample_x1(&self, theta: f64, rng: &mut dyn RngCore) -> f64 {
        rand_distr::Exp::new(theta)
            .expect("positive rate")
            .sample(rng)
    }

    fn sample_x2_given(&self, theta: f64, x1: f64, rng: &mut dyn RngCore) -> f64 {
        rand_distr::Exp::new(theta * x1)
            .expect("positive rate")
            .sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_23() -> SampleBatch {
        SampleBatch::from_pairs(&[(2.0, 3.0)]).expect("valid")
    }

    #[test]
    fn rejects_bad_lambda() {
        assert!(GammaExpFamily::new(0.0).is_err());
        assert!(GammaExpFamily::new(f64::NAN).is_err());
    }

    #[test]
    fn a_n_values() {
        let f = GammaExpFamily::new(1.0).expect("valid");
        // lambda + x1 + 2*(1+3) = 1 + 1 + 8
        assert_eq!(f.a_n(&sample_23(), 1.0).expect("valid"), 10.0);
        assert_eq!(f.a_n(&SampleBatch::empty(), 1.0).expect("valid"), 2.0);

        let f = GammaExpFamily::new(0.5).expect("valid");
        let s = SampleBatch::from_pairs(&[(1.0, 1.0), (2.0, 0.0)]).expect("valid");
        assert_eq!(f.a_n(&s, 3.0).expect("valid"), 7.5);
    }

    #[test]
    fn a_n_rejects_nonpositive_x1() {
        let f = GammaExpFamily::new(1.0).expect("valid");
        assert!(f.a_n(&sample_23(), 0.0).is_err());
        let bad = SampleBatch::from_pairs(&[(-1.0, 0.5)]).expect("finite");
        assert!(matches!(
            f.a_n(&bad, 1.0),
            Err(FamilyError::BadPair { index: 0, .. })
        ));
    }

    #[test]
    fn conditional_density_closed_form() {
        let f = GammaExpFamily::new(1.0).expect("valid");
        // (2n+2) x1 a^(2n+2) / (x1 x2 + a)^(2n+3) = 4 * 10^4 / 10^5 = 0.4
        let v = f.conditional_density_cf(&sample_23(), 1.0, 0.0).expect("valid");
        assert!((v - 0.4).abs() < 1e-14);
        // Far tail decays to 0.
        let tail = f
            .conditional_density_cf(&sample_23(), 1.0, 1e9)
            .expect("valid");
        assert!(tail < 1e-30);
    }

    #[test]
    fn conditional_cdf_closed_form() {
        let f = GammaExpFamily::new(1.0).expect("valid");
        let v = f.conditional_cdf_cf(&sample_23(), 1.0, 1.0).expect("valid");
        let expected = 1.0 - 1.1f64.powi(-4);
        assert!((v - expected).abs() < 1e-14);
        assert_eq!(f.conditional_cdf_cf(&sample_23(), 1.0, 0.0).expect("valid"), 0.0);
        assert_eq!(f.conditional_cdf_cf(&sample_23(), 1.0, -3.0).expect("valid"), 0.0);
        let far = f.conditional_cdf_cf(&sample_23(), 1.0, 1e12).expect("valid");
        assert!((far - 1.0).abs() < 1e-9);
    }

    #[test]
    fn regression_closed_form() {
        let f = GammaExpFamily::new(1.0).expect("valid");
        let v = f.regression_cf(&sample_23(), 1.0).expect("valid");
        assert!((v - 10.0 / 3.0).abs() < 1e-14);
        // Prior-predictive case: a_0 = lambda + x1.
        let v0 = f.regression_cf(&SampleBatch::empty(), 2.0).expect("valid");
        assert!((v0 - 1.5).abs() < 1e-14);

        let f = GammaExpFamily::new(0.5).expect("valid");
        let s = SampleBatch::from_pairs(&[(1.0, 1.0), (2.0, 0.0)]).expect("valid");
        assert!((f.regression_cf(&s, 3.0).expect("valid") - 0.5).abs() < 1e-14);
    }

    #[test]
    fn predictive_joint_closed_form_value() {
        let f = GammaExpFamily::new(1.0).expect("valid");
        // 12 * 9^3 * 1 / 10^5 = 0.08748 at (x1,x2) = (1,0)
        let v = f.predictive_joint_cf(&sample_23(), 1.0, 0.0).expect("valid");
        assert!((v - 0.08748).abs() < 1e-14);
    }

    #[test]
    fn conditional_density_integrates_to_one() {
        // Analytic antiderivative: -(a/(x1 x2 + a))^(2n+2) evaluated over [0, inf).
        let f = GammaExpFamily::new(1.0).expect("valid");
        let a = f.a_n(&sample_23(), 1.0).expect("valid");
        let cdf_limit = 1.0 - (a / (1.0 * 1e16 + a)).powi(4);
        assert!((cdf_limit - 1.0).abs() < 1e-10);
    }

    #[test]
    fn true_conditional_moments() {
        let f = GammaExpFamily::new(1.0).expect("valid");
        let theta = 0.7;
        let x1 = 2.5;
        assert!((f.true_regression(theta, x1) - 1.0 / (theta * x1)).abs() < 1e-15);
        assert!((f.true_conditional_cdf(theta, x1, f64::INFINITY) - 1.0).abs() < 1e-15);
        assert_eq!(f.true_conditional_cdf(theta, x1, -1.0), 0.0);
    }
}
