//! The dependent coin pair: `X1 ~ Bern(theta)`, then `X2 ~ Bern(theta)` if
//! `X1 = 1` and `X2 ~ Bern(1 - theta)` if `X1 = 0`, giving the piecewise
//! joint mass `theta(1-theta)` when `k2 = 0`, `(1-theta)^2` at `(0,1)` and
//! `theta^2` at `(1,1)`. The example fixes the uniform prior on (0,1).
//!
//! Every posterior quantity is a ratio of Beta integrals in the counts
//! `a_n = n_+0 + 2 n_11` and `b_n = n_+0 + 2 n_01`, so the closed forms
//! below are exact rationals with denominator `2n + 3`.

use rand::{Rng, RngCore};

use super::FamilyError;
use crate::model::{ModelFamily, SampleBatch, Support};
use crate::prior::PriorSpec;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CoinPairFamily;

/// Cell counts of a binary-pair sample and the derived exponents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoinCounts {
    pub n00: usize,
    pub n01: usize,
    pub n10: usize,
    pub n11: usize,
    /// `n_+0 = n00 + n10`, the number of pairs with second coordinate 0.
    pub n_plus0: usize,
    /// `a_n = n_+0 + 2 n_11`, the exponent of `theta` in the likelihood.
    pub a: usize,
    /// `b_n = n_+0 + 2 n_01`, the exponent of `1 - theta`.
    pub b: usize,
}

fn as_bit(what: &'static str, value: f64) -> Result<usize, FamilyError> {
    if value == 0.0 {
        Ok(0)
    } else if value == 1.0 {
        Ok(1)
    } else {
        Err(FamilyError::NotBinary { what, value })
    }
}

/// Tallies the four cells of a binary-pair sample; `a + b = 2n` always.
pub fn coin_counts(sample: &SampleBatch) -> Result<CoinCounts, FamilyError> {
    let mut cells = [[0usize; 2]; 2];
    for (index, pair) in sample.pairs().iter().enumerate() {
        let k1 = as_bit("k1", pair.x1).map_err(|_| FamilyError::BadPair {
            index,
            message: format!("k1 = {} is not binary", pair.x1),
        })?;
        let k2 = as_bit("k2", pair.x2).map_err(|_| FamilyError::BadPair {
            index,
            message: format!("k2 = {} is not binary", pair.x2),
        })?;
        cells[k1][k2] += 1;
    }
    let (n00, n01, n10, n11) = (cells[0][0], cells[0][1], cells[1][0], cells[1][1]);
    let n_plus0 = n00 + n10;
    Ok(CoinCounts {
        n00,
        n01,
        n10,
        n11,
        n_plus0,
        a: n_plus0 + 2 * n11,
        b: n_plus0 + 2 * n01,
    })
}

impl CoinPairFamily {
    pub fn new() -> Self {
        CoinPairFamily
    }

    pub fn prior(&self) -> PriorSpec {
        PriorSpec::uniform01()
    }

    /// Bayes-estimated conditional probability `P*(k2 | k1)`, an exact
    /// rational with denominator `2n + 3`:
    /// `(a+1)/(2n+3)`, `(b+2)/(2n+3)`, `(b+1)/(2n+3)`, `(a+2)/(2n+3)` for
    /// `(k1,k2) = (0,0), (0,1), (1,0), (1,1)` respectively.
    pub fn conditional_pf_cf(
        &self,
        sample: &SampleBatch,
        k1: u8,
        k2: u8,
    ) -> Result<f64, FamilyError> {
        if k1 > 1 {
            return Err(FamilyError::NotBinary {
                what: "k1",
                value: k1 as f64,
            });
        }
        if k2 > 1 {
            return Err(FamilyError::NotBinary {
                what: "k2",
                value: k2 as f64,
            });
        }
        let c = coin_counts(sample)?;
        let d = (2 * sample.len() + 3) as f64;
        let numerator = match (k1, k2) {
            (0, 0) => c.a + 1,
            (0, 1) => c.b + 2,
            (1, 0) => c.b + 1,
            (1, 1) => c.a + 2,
            _ => unreachable!(),
        };
        Ok(numerator as f64 / d)
    }

    /// Bayes-estimated conditional CDF: a step function jumping by
    /// `P*(k2=0|k1)` at 0 and to 1 at 1.
    pub fn conditional_cdf_cf(
        &self,
        sample: &SampleBatch,
        k1: u8,
        t: f64,
    ) -> Result<f64, FamilyError> {
        if t < 0.0 {
            Ok(0.0)
        } else if t < 1.0 {
            self.conditional_pf_cf(sample, k1, 0)
        } else {
            Ok(1.0)
        }
    }

    /// Bayes-estimated regression `E*(X2 | X1 = k1) = P*(k2=1 | k1)`.
    pub fn regression_cf(&self, sample: &SampleBatch, k1: u8) -> Result<f64, FamilyError> {
        self.conditional_pf_cf(sample, k1, 1)
    }

    /// Closed form of the predictive joint mass `f*(k1, k2)`, a ratio of
    /// Beta functions with the exponents of the piecewise joint density.
    pub fn predictive_joint_cf(
        &self,
        sample: &SampleBatch,
        k1: u8,
        k2: u8,
    ) -> Result<f64, FamilyError> {
        let c = coin_counts(sample)?;
        let (alpha, beta) = match (k1, k2) {
            (0, 0) | (1, 0) => (1usize, 1usize),
            (0, 1) => (0, 2),
            (1, 1) => (2, 0),
            _ => {
                return Err(FamilyError::NotBinary {
                    what: "k",
                    value: k1.max(k2) as f64,
                })
            }
        };
        let ln_beta = |p: f64, q: f64| {
            statrs::function::gamma::ln_gamma(p) + statrs::function::gamma::ln_gamma(q)
                - statrs::function::gamma::ln_gamma(p + q)
        };
        let num = ln_beta((c.a + alpha + 1) as f64, (c.b + beta + 1) as f64);
        let den = ln_beta((c.a + 1) as f64, (c.b + 1) as f64);
        Ok((num - den).exp())
    }

    /// Closed form of the predictive first marginal: the posterior mean of
    /// `theta` at `k1 = 1`, of `1 - theta` at `k1 = 0`.
    pub fn marginal1_cf(&self, sample: &SampleBatch, k1: u8) -> Result<f64, FamilyError> {
        let c = coin_counts(sample)?;
        let d = (2 * sample.len() + 2) as f64;
        match k1 {
            1 => Ok((c.a + 1) as f64 / d),
            0 => Ok((c.b + 1) as f64 / d),
            _ => Err(FamilyError::NotBinary {
                what: "k1",
                value: k1 as f64,
            }),
        }
    }
}

impl ModelFamily for CoinPairFamily {
    fn name(&self) -> &'static str {
        "coin"
    }

    fn param_support(&self) -> Support {
        Support::Interval { lo: 0.0, hi: 1.0 }
    }

    fn obs_support(&self) -> (Support, Support) {
        (
            Support::Finite(vec![0.0, 1.0]),
            Support::Finite(vec![0.0, 1.0]),
        )
    }

    fn log_joint_density(&self, theta: f64, x1: f64, x2: f64) -> f64 {
        self.joint_density(theta, x1, x2).ln()
    }

    fn joint_density(&self, theta: f64, x1: f64, x2: f64) -> f64 {
        match (x1, x2) {
            (_, 0.0) if x1 == 0.0 || x1 == 1.0 => theta * (1.0 - theta),
            (0.0, 1.0) => (1.0 - theta) * (1.0 - theta),
            (1.0, 1.0) => theta * theta,
            _ => 0.0,
        }
    }

    fn marginal1_density(&self, theta: f64, x1: f64) -> f64 {
        match x1 {
            1.0 => theta,
            0.0 => 1.0 - theta,
            _ => 0.0,
        }
    }

    fn true_conditional_density(&self, theta: f64, x1: f64, x2: f64) -> f64 {
        let p1 = match x1 {
            1.0 => theta,
            0.0 => 1.0 - theta,
            _ => return 0.0,
        };
        match x2 {
            1.0 => p1,
            0.0 => 1.0 - p1,
            _ => 0.0,
        }
    }

    fn true_conditional_cdf(&self, theta: f64, x1: f64, t: f64) -> f64 {
        if t < 0.0 {
            0.0
        } else if t < 1.0 {
            self.true_conditional_density(theta, x1, 0.0)
        } else {
            1.0
        }
    }

    fn true_regression(&self, theta: f64, x1: f64) -> f64 {
        match x1 {
            1.0 => theta,
            _ => 1.0 - theta,
        }
    }

    fn sample_x1(&self, theta: f64, rng: &mut dyn RngCore) -> f64 {
        let u: f64 = (&mut *rng).random();
        if u < theta {
            1.0
        } else {
            0.0
        }
    }

    fn sample_x2_given(&self, theta: f64, x1: f64, rng: &mut dyn RngCore) -> f64 {
        let p1 = if x1 == 1.0 { theta } else { 1.0 - theta };
        let u: f64 = (&mut *rng).random();
        if u < p1 {
            1.0
        } else {
            0.0
        }
    }
}
