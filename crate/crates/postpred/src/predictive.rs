//! The estimated conditional objects, evaluated numerically for any model
//! family: conditional density, conditional CDF, regression curve, and set
//! probabilities, together with the predictive joint and first-marginal
//! densities they derive from.
//!
//! Every conditional object is a ratio of parameter-space expectations.
//! With `D(x1) = E[m_theta(x1)]` under the reweighted distribution:
//!
//! - density:   `E[f_theta(x1, x2)] / D(x1)`
//! - CDF:       `E[F_theta(t | x1) m_theta(x1)] / D(x1)`
//! - regression:`E[r_theta(x1) m_theta(x1)] / D(x1)`
//!
//! The CDF and regression also have second routes that integrate the
//! estimated conditional density over `x2` directly; they cost a nested
//! quadrature and exist to cross-check the single-integral forms.

use std::sync::Arc;

use thiserror::Error;

use crate::integrate::{line_integral, CompensatedSum, QuadError, QuadratureSettings};
use crate::model::{DomainError, ModelFamily, SampleBatch, Support};
use crate::posterior::{build_posterior, Posterior, PosteriorError};
use crate::prior::PriorSpec;

pub const MAX_SET_PARTS: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictiveError {
    #[error("{name} = {value} is outside the observation support")]
    ArgOutOfSupport { name: &'static str, value: f64 },
    #[error("first-coordinate density vanishes at x1 = {x1}; nothing to condition on")]
    ConditioningOnNullSet { x1: f64 },
    #[error("estimated conditional mean at x1 = {x1} does not decay fast enough to integrate")]
    NonIntegrableMean { x1: f64 },
    #[error("invalid observation set: {0}")]
    BadObsSet(String),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// A subset of the second coordinate's range: half-open intervals
/// `(a, b]` or isolated points. At most 16 parts, disjoint and ascending.
#[derive(Debug, Clone, PartialEq)]
pub enum ObsSet {
    Intervals(Vec<(f64, f64)>),
    Points(Vec<f64>),
}

impl ObsSet {
    pub fn validate(&self) -> Result<(), PredictiveError> {
        match self {
            ObsSet::Intervals(parts) => {
                if parts.is_empty() || parts.len() > MAX_SET_PARTS {
                    return Err(PredictiveError::BadObsSet(format!(
                        "{} intervals, need between 1 and {MAX_SET_PARTS}",
                        parts.len()
                    )));
                }
                for (a, b) in parts {
                    if a.is_nan() || b.is_nan() || !(a < b) {
                        return Err(PredictiveError::BadObsSet(format!(
                            "({a}, {b}] is not a valid interval"
                        )));
                    }
                }
                for w in parts.windows(2) {
                    if w[1].0 < w[0].1 {
                        return Err(PredictiveError::BadObsSet(format!(
                            "({}, {}] and ({}, {}] overlap or are out of order",
                            w[0].0, w[0].1, w[1].0, w[1].1
                        )));
                    }
                }
                Ok(())
            }
            ObsSet::Points(points) => {
                if points.is_empty() || points.len() > MAX_SET_PARTS {
                    return Err(PredictiveError::BadObsSet(format!(
                        "{} points, need between 1 and {MAX_SET_PARTS}",
                        points.len()
                    )));
                }
                for p in points {
                    if !p.is_finite() {
                        return Err(PredictiveError::BadObsSet(format!(
                            "point {p} is not finite"
                        )));
                    }
                }
                for w in points.windows(2) {
                    if w[1] <= w[0] {
                        return Err(PredictiveError::BadObsSet(format!(
                            "points {} and {} are not strictly increasing",
                            w[0], w[1]
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// A CDF evaluation: the returned `value` is clipped to `[0, 1]`, and
/// `pre_clip_deviation` records how far the raw ratio fell outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfValue {
    pub value: f64,
    pub pre_clip_deviation: f64,
}

#[derive(Debug, Clone)]
pub struct PredictiveEvaluator {
    posterior: Posterior,
}

impl PredictiveEvaluator {
    pub fn new(posterior: Posterior) -> Self {
        PredictiveEvaluator { posterior }
    }

    pub fn from_parts(
        model: Arc<dyn ModelFamily>,
        prior: &PriorSpec,
        sample: &SampleBatch,
        settings: &QuadratureSettings,
    ) -> Result<Self, PredictiveError> {
        Ok(PredictiveEvaluator {
            posterior: build_posterior(model, prior, sample, settings)?,
        })
    }

    pub fn posterior(&self) -> &Posterior {
        &self.posterior
    }

    fn model(&self) -> &dyn ModelFamily {
        self.posterior.model()
    }

    fn check_x1(&self, x1: f64) -> Result<(), PredictiveError> {
        if !self.model().obs_support().0.contains(x1) {
            return Err(PredictiveError::ArgOutOfSupport {
                name: "x1",
                value: x1,
            });
        }
        Ok(())
    }

    /// Density of the predictive pair distribution at `(x1, x2)`.
    pub fn joint_density(&self, x1: f64, x2: f64) -> Result<f64, PredictiveError> {
        self.check_x1(x1)?;
        if x2.is_nan() {
            return Err(PredictiveError::ArgOutOfSupport {
                name: "x2",
                value: x2,
            });
        }
        let model = self.model();
        Ok(self
            .posterior
            .expectation(|t| model.joint_density(t, x1, x2))?
            .value)
    }

    /// Density of the predictive first marginal at `x1`.
    pub fn marginal1(&self, x1: f64) -> Result<f64, PredictiveError> {
        self.check_x1(x1)?;
        let model = self.model();
        Ok(self
            .posterior
            .expectation(|t| model.marginal1_density(t, x1))?
            .value)
    }

    /// The conditioning denominator `D(x1)`, rejected when it vanishes.
    fn conditioned_marginal(&self, x1: f64) -> Result<f64, PredictiveError> {
        let d = self.marginal1(x1)?;
        if !(d > self.posterior.settings().abs_tol) {
            return Err(PredictiveError::ConditioningOnNullSet { x1 });
        }
        Ok(d)
    }

    /// Estimated conditional density of `X2` at `x2`, given `X1 = x1`.
    pub fn conditional_density(&self, x1: f64, x2: f64) -> Result<f64, PredictiveError> {
        let d = self.conditioned_marginal(x1)?;
        Ok(self.joint_density(x1, x2)? / d)
    }

    /// Estimated conditional CDF at `t`, given `X1 = x1`, with the raw
    /// ratio's excursion outside `[0, 1]` recorded before clipping.
    pub fn conditional_cdf_detailed(&self, x1: f64, t: f64) -> Result<CdfValue, PredictiveError> {
        if t.is_nan() {
            return Err(PredictiveError::ArgOutOfSupport { name: "t", value: t });
        }
        let d = self.conditioned_marginal(x1)?;
        if t == f64::NEG_INFINITY {
            return Ok(CdfValue {
                value: 0.0,
                pre_clip_deviation: 0.0,
            });
        }
        if t == f64::INFINITY {
            return Ok(CdfValue {
                value: 1.0,
                pre_clip_deviation: 0.0,
            });
        }
        let model = self.model();
        let num = self
            .posterior
            .expectation(|th| model.true_conditional_cdf(th, x1, t) * model.marginal1_density(th, x1))?
            .value;
        let raw = num / d;
        let value = raw.clamp(0.0, 1.0);
        Ok(CdfValue {
            value,
            pre_clip_deviation: (raw - value).abs(),
        })
    }

    pub fn conditional_cdf(&self, x1: f64, t: f64) -> Result<f64, PredictiveError> {
        Ok(self.conditional_cdf_detailed(x1, t)?.value)
    }

    /// Estimated regression value `E(X2 | X1 = x1)`.
    pub fn regression(&self, x1: f64) -> Result<f64, PredictiveError> {
        let d = self.conditioned_marginal(x1)?;
        let model = self.model();
        let num = self
            .posterior
            .expectation(|th| model.true_regression(th, x1) * model.marginal1_density(th, x1))?
            .value;
        Ok(num / d)
    }

    /// Estimated probability that `X2` lands in `set`, given `X1 = x1`.
    pub fn probability(&self, x1: f64, set: &ObsSet) -> Result<f64, PredictiveError> {
        set.validate()?;
        let d = self.conditioned_marginal(x1)?;
        let model = self.model();
        match set {
            ObsSet::Intervals(parts) => {
                let mut acc = CompensatedSum::new();
                for &(a, b) in parts {
                    let num = self
                        .posterior
                        .expectation(|th| {
                            let fa = if a == f64::NEG_INFINITY {
                                0.0
                            } else {
                                model.true_conditional_cdf(th, x1, a)
                            };
                            let fb = if b == f64::INFINITY {
                                1.0
                            } else {
                                model.true_conditional_cdf(th, x1, b)
                            };
                            (fb - fa) * model.marginal1_density(th, x1)
                        })?
                        .value;
                    acc.add(num);
                }
                Ok((acc.value() / d).clamp(0.0, 1.0))
            }
            ObsSet::Points(points) => {
                if !self.model().obs_support().1.is_discrete() {
                    return Ok(0.0);
                }
                let mut acc = CompensatedSum::new();
                for &p in points {
                    acc.add(
                        self.posterior
                            .expectation(|th| model.joint_density(th, x1, p))?
                            .value,
                    );
                }
                Ok((acc.value() / d).clamp(0.0, 1.0))
            }
        }
    }

    /// Second route to the conditional CDF: integrate the estimated
    /// conditional density over `x2 <= t`. Nested quadrature; kept as a
    /// cross-check against [`Self::conditional_cdf`].
    pub fn conditional_cdf_by_moment(&self, x1: f64, t: f64) -> Result<f64, PredictiveError> {
        if t.is_nan() {
            return Err(PredictiveError::ArgOutOfSupport { name: "t", value: t });
        }
        let d = self.conditioned_marginal(x1)?;
        let (_, sup2) = self.model().obs_support();
        match sup2 {
            Support::Finite(points) => {
                let mut acc = CompensatedSum::new();
                for p in points {
                    if p <= t {
                        acc.add(self.joint_density(x1, p)?);
                    }
                }
                Ok((acc.value() / d).clamp(0.0, 1.0))
            }
            Support::Interval { lo, hi } => {
                let lo = if lo == f64::MIN_POSITIVE { 0.0 } else { lo };
                if t <= lo {
                    return Ok(0.0);
                }
                let upper = t.min(hi);
                let f = |x2: f64| match self.joint_density(x1, x2) {
                    Ok(v) => v,
                    Err(_) => f64::NAN,
                };
                let integral = line_integral(f, (lo, upper), self.posterior.settings())?;
                Ok((integral.value / d).clamp(0.0, 1.0))
            }
        }
    }

    /// Second route to the regression value: integrate `x2` against the
    /// estimated conditional density. Rejects conditional densities whose
    /// tail mean probes fail to decay.
    pub fn regression_by_moment(&self, x1: f64) -> Result<f64, PredictiveError> {
        let d = self.conditioned_marginal(x1)?;
        let (_, sup2) = self.model().obs_support();
        match sup2 {
            Support::Finite(points) => {
                let mut acc = CompensatedSum::new();
                for p in points {
                    acc.add(p * self.joint_density(x1, p)?);
                }
                Ok(acc.value() / d)
            }
            Support::Interval { lo, hi } => {
                let lo = if lo == f64::MIN_POSITIVE { 0.0 } else { lo };
                self.check_tail_decay(x1, d, lo, hi)?;
                let f = |x2: f64| match self.joint_density(x1, x2) {
                    Ok(v) => x2 * v,
                    Err(_) => f64::NAN,
                };
                let integral = line_integral(f, (lo, hi), self.posterior.settings())?;
                Ok(integral.value / d)
            }
        }
    }

    /// Probes `|x2| * density` at geometrically spaced points past the
    /// bulk of the conditional distribution; a tail that fails to decay
    /// means the mean integral cannot be trusted.
    fn check_tail_decay(&self, x1: f64, d: f64, lo: f64, hi: f64) -> Result<(), PredictiveError> {
        let check_direction = |start: f64, sign: f64| -> Result<(), PredictiveError> {
            let mut scale = start.abs().max(1.0);
            // Walk outward until the density is small relative to the bulk.
            for _ in 0..60 {
                let x = sign * scale;
                let v = self.joint_density(x1, x)? / d;
                if v * scale < 1e-6 {
                    break;
                }
                scale *= 2.0;
            }
            let g = |m: f64| -> Result<f64, PredictiveError> {
                let x = sign * scale * m;
                Ok(x.abs() * self.joint_density(x1, x)? / d)
            };
            let (g1, g2, g3) = (g(1.0)?, (g(4.0))?, g(16.0)?);
            if g2 > g1 || g3 > g2 || (g1 > 0.0 && g3 >= 0.5 * g1) {
                return Err(PredictiveError::NonIntegrableMean { x1 });
            }
            Ok(())
        };
        if hi == f64::INFINITY {
            check_direction(1.0, 1.0)?;
        }
        if lo == f64::NEG_INFINITY {
            check_direction(1.0, -1.0)?;
        }
        Ok(())
    }
}
