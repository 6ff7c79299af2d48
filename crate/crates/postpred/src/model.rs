//! Domain types shared by every other module: parameter values, observation
//! pairs, sample batches, supports, and the model-family contract.
//!
//! A model family describes the joint law of one observation pair
//! `(X1, X2)` for each scalar parameter `theta`, together with its first
//! marginal, the true conditional law of `X2` given `X1`, and samplers for
//! both coordinates. Everything downstream (posterior, predictive, risk)
//! is written against this contract.

use rand::RngCore;
use thiserror::Error;

/// Errors raised by domain-type constructors and support checks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("non-finite {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },
    #[error("pair {index}: coordinate {coordinate} value {value} lies outside the observation support")]
    ObservationOutOfSupport {
        index: usize,
        coordinate: usize,
        value: f64,
    },
    #[error("parameter value {value} lies outside the parameter support")]
    ParamOutOfSupport { value: f64 },
}

/// The support of a scalar coordinate: an interval (possibly unbounded) or a
/// finite set of points.
///
/// Interval endpoints are treated inclusively where finite; boundary
/// pathologies (such as a zero first-coordinate density) surface later as
/// conditioning errors rather than support rejections.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Interval { lo: f64, hi: f64 },
    Finite(Vec<f64>),
}

impl Support {
    pub fn contains(&self, x: f64) -> bool {
        if !x.is_finite() {
            return false;
        }
        match self {
            Support::Interval { lo, hi } => *lo <= x && x <= *hi,
            Support::Finite(points) => points.iter().any(|p| *p == x),
        }
    }

    /// True when the support is a finite set of points (discrete coordinate).
    pub fn is_discrete(&self) -> bool {
        matches!(self, Support::Finite(_))
    }

    /// The points of a discrete support, or `None` for an interval.
    pub fn points(&self) -> Option<&[f64]> {
        match self {
            Support::Finite(points) => Some(points),
            Support::Interval { .. } => None,
        }
    }

    /// Interval bounds, with discrete supports collapsed to their hull.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Support::Interval { lo, hi } => (*lo, *hi),
            Support::Finite(points) => {
                let lo = points.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = points.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        }
    }
}

/// A validated scalar parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamValue(f64);

impl ParamValue {
    pub fn new(value: f64) -> Result<Self, DomainError> {
        if !value.is_finite() {
            return Err(DomainError::NonFinite {
                what: "parameter",
                value,
            });
        }
        Ok(ParamValue(value))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// One observation pair `(x1, x2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub x1: f64,
    pub x2: f64,
}

impl Observation {
    pub fn new(x1: f64, x2: f64) -> Result<Self, DomainError> {
        if !x1.is_finite() {
            return Err(DomainError::NonFinite {
                what: "observation x1",
                value: x1,
            });
        }
        if !x2.is_finite() {
            return Err(DomainError::NonFinite {
                what: "observation x2",
                value: x2,
            });
        }
        Ok(Observation { x1, x2 })
    }
}

/// The observed sample `x' = ((x'_11, x'_12), ..., (x'_n1, x'_n2))`.
///
/// An empty batch (`n = 0`) is legal and denotes the prior-predictive case.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleBatch {
    pairs: Vec<Observation>,
}

impl SampleBatch {
    pub fn empty() -> Self {
        SampleBatch { pairs: Vec::new() }
    }

    pub fn new(pairs: Vec<Observation>) -> Self {
        SampleBatch { pairs }
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self, DomainError> {
        let pairs = pairs
            .iter()
            .map(|&(x1, x2)| Observation::new(x1, x2))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SampleBatch { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[Observation] {
        &self.pairs
    }

    /// Checks every pair against the model's observation support, reporting
    /// the first offending pair and coordinate.
    pub fn validate_for(&self, model: &dyn ModelFamily) -> Result<(), DomainError> {
        let (s1, s2) = model.obs_support();
        for (index, pair) in self.pairs.iter().enumerate() {
            if !s1.contains(pair.x1) {
                return Err(DomainError::ObservationOutOfSupport {
                    index,
                    coordinate: 1,
                    value: pair.x1,
                });
            }
            if !s2.contains(pair.x2) {
                return Err(DomainError::ObservationOutOfSupport {
                    index,
                    coordinate: 2,
                    value: pair.x2,
                });
            }
        }
        Ok(())
    }

    /// Concatenates two batches, preserving order.
    pub fn concat(&self, other: &SampleBatch) -> SampleBatch {
        let mut pairs = self.pairs.clone();
        pairs.extend_from_slice(&other.pairs);
        SampleBatch { pairs }
    }
}

/// A parametric joint model for one observation pair.
///
/// Implementations must keep `joint_density`, `marginal1_density`,
/// `true_conditional_density`, `true_conditional_cdf` and `true_regression`
/// mutually consistent: the joint factors as marginal times conditional, and
/// the regression is the mean of the conditional.
pub trait ModelFamily: Send + Sync {
    fn name(&self) -> &'static str;

    fn param_support(&self) -> Support;

    fn obs_support(&self) -> (Support, Support);

    /// `log f_theta(x1, x2)`; `-inf` where the density vanishes.
    fn log_joint_density(&self, theta: f64, x1: f64, x2: f64) -> f64;

    fn joint_density(&self, theta: f64, x1: f64, x2: f64) -> f64 {
        self.log_joint_density(theta, x1, x2).exp()
    }

    /// Density of `X1` under `theta` (with respect to the coordinate's
    /// natural measure: Lebesgue or counting).
    fn marginal1_density(&self, theta: f64, x1: f64) -> f64;

    /// Density of `X2` given `X1 = x1` under `theta`.
    fn true_conditional_density(&self, theta: f64, x1: f64, x2: f64) -> f64;

    /// `P_theta(X2 <= t | X1 = x1)`.
    fn true_conditional_cdf(&self, theta: f64, x1: f64, t: f64) -> f64;

    /// `E_theta(X2 | X1 = x1)`.
    fn true_regression(&self, theta: f64, x1: f64) -> f64;

    fn sample_x1(&self, theta: f64, rng: &mut dyn RngCore) -> f64;

    fn sample_x2_given(&self, theta: f64, x1: f64, rng: &mut dyn RngCore) -> f64;
}

/// Draws one pair from the model: `X1` from its marginal, then `X2` from the
/// true conditional.
pub fn sample_pair(
    model: &dyn ModelFamily,
    theta: ParamValue,
    rng: &mut dyn RngCore,
) -> Result<Observation, DomainError> {
    let t = theta.value();
    if !model.param_support().contains(t) {
        return Err(DomainError::ParamOutOfSupport { value: t });
    }
    let x1 = model.sample_x1(t, rng);
    let x2 = model.sample_x2_given(t, x1, rng);
    Observation::new(x1, x2)
}

/// `log f_{n,theta}(x') = sum_i log f_theta(x'_i)`, the log joint density of
/// the whole batch. Accumulating in log space keeps the value finite for
/// batch sizes up to 10^4 and beyond.
pub fn log_joint_sample_density(
    model: &dyn ModelFamily,
    theta: f64,
    sample: &SampleBatch,
) -> f64 {
    let mut acc = 0.0;
    for pair in sample.pairs() {
        acc += model.log_joint_density(theta, pair.x1, pair.x2);
    }
    acc
}

/// `f_{n,theta}(x')`, the joint density of the batch; 1 for an empty batch.
pub fn joint_sample_density(
    model: &dyn ModelFamily,
    theta: ParamValue,
    sample: &SampleBatch,
) -> Result<f64, DomainError> {
    let t = theta.value();
    if !model.param_support().contains(t) {
        return Err(DomainError::ParamOutOfSupport { value: t });
    }
    sample.validate_for(model)?;
    Ok(log_joint_sample_density(model, t, sample).exp())
}
