//! Exact enumeration on finite tabulated models. The augmented measure
//! over (parameter, observed sample, one more pair) is small enough to
//! hold in memory there, so every identity the estimators rely on, and
//! every Bayes risk, can be computed as a finite sum and compared against
//! the generic machinery at tight tolerances.
//!
//! The table stores the factored masses `w_k * R_k^n(x')` per (sample,
//! parameter) cell; full atoms are reconstructed as products on demand,
//! capped at [`ENTRY_CAP`] reconstructible entries and samples of at most
//! [`MAX_ORACLE_N`] pairs.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::families::FiniteTableFamily;
use crate::integrate::{CompensatedSum, QuadError, QuadratureSettings};
use crate::model::{ModelFamily, SampleBatch};
use crate::posterior::{build_posterior, PosteriorError};
use crate::predictive::{PredictiveError, PredictiveEvaluator};
use crate::risk::LossKind;
use crate::stream::splitmix64;

pub const MAX_ORACLE_N: usize = 4;
pub const ENTRY_CAP: u128 = 10_000_000;

/// How many samples the cross-module identity checks visit at most; the
/// checked subset is strided deterministically through the sample axis.
const CROSS_CHECK_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("enumeration would touch {entries} entries, cap is {cap}")]
    TooManyEntries { entries: u128, cap: u128 },
    #[error("sample size {n} exceeds the enumeration limit {max}")]
    SampleSizeTooLarge { n: usize, max: usize },
    #[error("sample {sample_index} with x1 = {x1} has zero marginal mass")]
    NullConditioning { sample_index: usize, x1: f64 },
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Predictive(#[from] PredictiveError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// The joint distribution of (parameter, sample of `n` pairs, one more
/// pair) for a finite tabulated model, stored in factored form.
#[derive(Clone)]
pub struct JointTable {
    family: FiniteTableFamily,
    n: usize,
    /// Every sample as index pairs into (grid1, grid2), row-major in the
    /// mixed-radix order of repeated pair indices.
    samples: Vec<Vec<(usize, usize)>>,
    /// `mass[s][k] = w_k * R_k^n(samples[s])`.
    mass: Vec<Vec<f64>>,
    /// `evidence[s] = sum_k mass[s][k]`, the marginal sample probability.
    evidence: Vec<f64>,
    /// `marginal1[k][i] = sum_j p_k(i, j)`.
    marginal1: Vec<Vec<f64>>,
}

/// Enumerates the augmented measure of a finite model and sample size.
pub fn build_joint_table(family: &FiniteTableFamily, n: usize) -> Result<JointTable, OracleError> {
    if n > MAX_ORACLE_N {
        return Err(OracleError::SampleSizeTooLarge {
            n,
            max: MAX_ORACLE_N,
        });
    }
    let k_count = family.thetas().len();
    let m1 = family.grid1().len();
    let m2 = family.grid2().len();
    let pair_count = m1 * m2;
    let sample_count = (pair_count as u128).pow(n as u32);
    let entries = k_count as u128 * sample_count * pair_count as u128;
    if entries > ENTRY_CAP {
        return Err(OracleError::TooManyEntries {
            entries,
            cap: ENTRY_CAP,
        });
    }

    let sample_count = sample_count as usize;
    let mut samples = Vec::with_capacity(sample_count);
    for mut code in 0..sample_count {
        let mut pairs = Vec::with_capacity(n);
        for _ in 0..n {
            let pair = code % pair_count;
            pairs.push((pair / m2, pair % m2));
            code /= pair_count;
        }
        samples.push(pairs);
    }

    let weights = family.weights().to_vec();
    let mass: Vec<Vec<f64>> = samples
        .iter()
        .map(|pairs| {
            (0..k_count)
                .map(|k| {
                    let mut product = weights[k];
                    for &(i, j) in pairs {
                        product *= family.prob(k, i, j);
                    }
                    product
                })
                .collect()
        })
        .collect();
    let evidence: Vec<f64> = mass
        .iter()
        .map(|row| {
            let mut acc = CompensatedSum::new();
            for &v in row {
                acc.add(v);
            }
            acc.value()
        })
        .collect();
    let marginal1: Vec<Vec<f64>> = (0..k_count)
        .map(|k| {
            (0..m1)
                .map(|i| (0..m2).map(|j| family.prob(k, i, j)).sum())
                .collect()
        })
        .collect();

    Ok(JointTable {
        family: family.clone(),
        n,
        samples,
        mass,
        evidence,
        marginal1,
    })
}

impl std::fmt::Debug for JointTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JointTable")
            .field("family", &self.family.name())
            .field("n", &self.n)
            .field("samples", &self.samples.len())
            .finish_non_exhaustive()
    }
}

impl JointTable {
    pub fn family(&self) -> &FiniteTableFamily {
        &self.family
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn sample_pairs(&self, s: usize) -> &[(usize, usize)] {
        &self.samples[s]
    }

    pub fn sample_batch(&self, s: usize) -> SampleBatch {
        let pairs: Vec<(f64, f64)> = self.samples[s]
            .iter()
            .map(|&(i, j)| (self.family.grid1()[i], self.family.grid2()[j]))
            .collect();
        SampleBatch::from_pairs(&pairs).expect("grid values are valid observations")
    }

    /// `w_k * R_k^n(x')` for sample index `s` and parameter index `k`.
    pub fn mass(&self, s: usize, k: usize) -> f64 {
        self.mass[s][k]
    }

    pub fn evidence(&self, s: usize) -> f64 {
        self.evidence[s]
    }

    pub fn posterior_weight(&self, s: usize, k: usize) -> f64 {
        self.mass[s][k] / self.evidence[s]
    }

    /// One atom of the augmented measure: parameter `k`, sample `s`, and
    /// one more pair at grid cell `(i, j)`.
    pub fn entry(&self, s: usize, k: usize, i: usize, j: usize) -> f64 {
        self.mass[s][k] * self.family.prob(k, i, j)
    }

    /// The predictive probability of one more pair landing on `(i, j)`.
    pub fn predictive_joint(&self, s: usize, i: usize, j: usize) -> f64 {
        let mut acc = CompensatedSum::new();
        for k in 0..self.family.thetas().len() {
            acc.add(self.posterior_weight(s, k) * self.family.prob(k, i, j));
        }
        acc.value()
    }

    pub fn predictive_marginal1(&self, s: usize, i: usize) -> f64 {
        let mut acc = CompensatedSum::new();
        for k in 0..self.family.thetas().len() {
            acc.add(self.posterior_weight(s, k) * self.marginal1[k][i]);
        }
        acc.value()
    }

    /// The predictive conditional probability function over the second
    /// grid, or `None` when conditioning on a null first coordinate.
    pub fn predictive_conditional(&self, s: usize, i: usize) -> Option<Vec<f64>> {
        let d = self.predictive_marginal1(s, i);
        if d <= 0.0 {
            return None;
        }
        Some(
            (0..self.family.grid2().len())
                .map(|j| self.predictive_joint(s, i, j) / d)
                .collect(),
        )
    }

    fn theta_count(&self) -> usize {
        self.family.thetas().len()
    }

    /// The true conditional probability function at parameter `k` given
    /// the first coordinate lands on grid cell `i`.
    fn true_conditional(&self, k: usize, i: usize) -> Vec<f64> {
        let m = self.marginal1[k][i];
        (0..self.family.grid2().len())
            .map(|j| {
                if m > 0.0 {
                    self.family.prob(k, i, j) / m
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn strided_samples(&self) -> Vec<usize> {
        let total = self.samples.len();
        if total <= CROSS_CHECK_SAMPLES {
            return (0..total).collect();
        }
        let stride = total.div_ceil(CROSS_CHECK_SAMPLES);
        let mut picked: Vec<usize> = (0..total).step_by(stride).collect();
        if *picked.last().expect("non-empty") != total - 1 {
            picked.push(total - 1);
        }
        picked
    }
}

/// Violations of the six structural identities of the augmented measure,
/// one maximum absolute violation per identity:
///
/// 1. the parameter marginal is the prior;
/// 2. sample masses factor as prior weight times the product of pair
///    probabilities (recomputed through the generic model interface);
/// 3. the sample marginal sums to one;
/// 4. the conditional on the parameter given the sample matches the
///    posterior module;
/// 5. one more pair is independent of the sample given the parameter;
/// 6. the conditional on the pair given the sample matches the predictive
///    engine.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub violations: [f64; 6],
}

impl IdentityReport {
    pub fn max_violation(&self) -> f64 {
        self.violations.iter().fold(0.0, |a, &b| a.max(b))
    }

    pub fn pass(&self, tolerance: f64) -> bool {
        self.max_violation() <= tolerance
    }
}

/// Checks the six identities of the augmented measure against wholly
/// independent computations: the model trait for densities, the posterior
/// module for reweighting, the predictive engine for one more pair. The
/// cross-module identities (4 and 6) visit a deterministic strided subset
/// of at most 64 samples; the arithmetic identities visit everything.
pub fn check_identities(
    table: &JointTable,
    settings: &QuadratureSettings,
) -> Result<IdentityReport, OracleError> {
    let family = &table.family;
    let model: Arc<dyn ModelFamily> = Arc::new(family.clone());
    let prior = family.prior();
    let k_count = table.theta_count();
    let m1 = family.grid1().len();
    let m2 = family.grid2().len();
    let mut violations = [0.0f64; 6];

    for k in 0..k_count {
        let mut acc = CompensatedSum::new();
        for s in 0..table.sample_count() {
            acc.add(table.mass(s, k));
        }
        violations[0] = violations[0].max((acc.value() - family.weights()[k]).abs());
    }

    for s in 0..table.sample_count() {
        for k in 0..k_count {
            let theta = family.thetas()[k];
            let mut product = family.weights()[k];
            for &(i, j) in table.sample_pairs(s) {
                product *= model.joint_density(theta, family.grid1()[i], family.grid2()[j]);
            }
            violations[1] = violations[1].max((product - table.mass(s, k)).abs());
        }
    }

    let mut total = CompensatedSum::new();
    for s in 0..table.sample_count() {
        total.add(table.evidence(s));
    }
    violations[2] = (total.value() - 1.0).abs();

    for &s in &table.strided_samples() {
        let batch = table.sample_batch(s);
        let posterior = build_posterior(Arc::clone(&model), &prior, &batch, settings)?;
        let (_, weights) = posterior
            .finite_weights()
            .expect("finite prior gives finite posterior");
        for k in 0..k_count {
            violations[3] =
                violations[3].max((weights[k] - table.posterior_weight(s, k)).abs());
        }

        for k in 0..k_count {
            if table.mass(s, k) == 0.0 {
                continue;
            }
            for i in 0..m1 {
                for j in 0..m2 {
                    let conditional = table.entry(s, k, i, j) / table.mass(s, k);
                    violations[4] =
                        violations[4].max((conditional - family.prob(k, i, j)).abs());
                }
            }
        }

        let eval = PredictiveEvaluator::new(posterior);
        for i in 0..m1 {
            for j in 0..m2 {
                let engine = eval.joint_density(family.grid1()[i], family.grid2()[j])?;
                violations[5] =
                    violations[5].max((engine - table.predictive_joint(s, i, j)).abs());
            }
        }
    }

    Ok(IdentityReport { violations })
}

/// The exact conditional expectation of `h(X2)` for one more pair, given
/// the sample `s` and the first coordinate landing on grid cell `i`;
/// errors when that event has zero probability. With an indicator `h`
/// this is the exact counterpart of the engine's set-probability
/// estimate, with `h(x2) = x2` its regression estimate.
pub fn exact_conditional_expectation(
    table: &JointTable,
    s: usize,
    i: usize,
    h: impl Fn(f64) -> f64,
) -> Result<f64, OracleError> {
    let mut numerator = CompensatedSum::new();
    let mut denominator = CompensatedSum::new();
    for k in 0..table.theta_count() {
        for j in 0..table.family.grid2().len() {
            let atom = table.entry(s, k, i, j);
            numerator.add(atom * h(table.family.grid2()[j]));
            denominator.add(atom);
        }
    }
    if denominator.value() <= 0.0 {
        return Err(OracleError::NullConditioning {
            sample_index: s,
            x1: table.family.grid1()[i],
        });
    }
    Ok(numerator.value() / denominator.value())
}

/// Checks that resampling a whole `n`-pair sample from the predictive and
/// keeping only its first pair is the same as predicting one pair, by
/// full enumeration of the `n`-fold predictive. Returns the maximum
/// absolute violation over a strided subset of conditioning samples;
/// a zero-pair table has no first pair, so its violation is 0.
pub fn check_predictive_marginal_identity(table: &JointTable) -> f64 {
    if table.n == 0 {
        return 0.0;
    }
    let family = &table.family;
    let k_count = table.theta_count();
    let m1 = family.grid1().len();
    let m2 = family.grid2().len();
    let mut worst = 0.0f64;
    for &s in &table.strided_samples() {
        let mut first_pair = vec![vec![CompensatedSum::new(); m2]; m1];
        for u in 0..table.sample_count() {
            let (fi, fj) = table.sample_pairs(u)[0];
            let mut acc = CompensatedSum::new();
            for k in 0..k_count {
                let mut product = table.posterior_weight(s, k);
                for &(i, j) in table.sample_pairs(u) {
                    product *= family.prob(k, i, j);
                }
                acc.add(product);
            }
            first_pair[fi][fj].add(acc.value());
        }
        for (i, row) in first_pair.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                worst = worst.max((cell.value() - table.predictive_joint(s, i, j)).abs());
            }
        }
    }
    worst
}

/// What a finite-support estimator produces at one `(sample, x1 cell)`:
/// a probability function over the second grid and a regression value.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteEstimate {
    pub pmf: Vec<f64>,
    pub regression: f64,
}

impl FiniteEstimate {
    /// Builds an estimate from a probability function, taking the
    /// regression value as its mean over the grid.
    pub fn from_pmf(grid2: &[f64], pmf: Vec<f64>) -> FiniteEstimate {
        let regression = grid2.iter().zip(&pmf).map(|(x, p)| x * p).sum();
        FiniteEstimate { pmf, regression }
    }
}

pub trait FiniteCurveEstimator: Send + Sync {
    fn id(&self) -> String;
    fn estimate(&self, table: &JointTable, s: usize, i: usize) -> FiniteEstimate;
}

fn sq_tv_pmf(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for (a, b) in p.iter().zip(q) {
        acc.add((a - b).abs());
    }
    let tv = 0.5 * acc.value();
    tv * tv
}

fn sq_l1_pmf(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for (a, b) in p.iter().zip(q) {
        acc.add((a - b).abs());
    }
    let l1 = acc.value();
    l1 * l1
}

fn sq_linf_cdf(p: &[f64], q: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    let mut cp = 0.0;
    let mut cq = 0.0;
    for (a, b) in p.iter().zip(q) {
        cp += a;
        cq += b;
        worst = worst.max((cp - cq).abs());
    }
    worst * worst
}

fn pmf_loss(kind: LossKind, estimate: &FiniteEstimate, truth: &FiniteEstimate) -> f64 {
    match kind {
        LossKind::SqTotalVariation => sq_tv_pmf(&estimate.pmf, &truth.pmf),
        LossKind::SqL1Density => sq_l1_pmf(&estimate.pmf, &truth.pmf),
        LossKind::SqLinfCdf => sq_linf_cdf(&estimate.pmf, &truth.pmf),
        LossKind::SqErrorRegression => {
            let d = estimate.regression - truth.regression;
            d * d
        }
    }
}

/// The exact Bayes risk of an estimator: the sum over every (parameter,
/// sample, conditioning cell) atom of its loss against the true
/// conditional there, weighted by the augmented measure. Zero-mass atoms
/// are skipped, so estimators are never asked to condition on null
/// events. Samples are processed in parallel and reduced in index order,
/// making the result independent of the worker count.
pub fn exact_bayes_risk(
    table: &JointTable,
    estimator: &dyn FiniteCurveEstimator,
    loss: LossKind,
) -> f64 {
    let m1 = table.family.grid1().len();
    let per_sample: Vec<f64> = (0..table.sample_count())
        .into_par_iter()
        .map(|s| {
            let mut acc = CompensatedSum::new();
            for i in 0..m1 {
                let cell_mass: f64 = (0..table.theta_count())
                    .map(|k| table.mass(s, k) * table.marginal1[k][i])
                    .sum();
                if cell_mass <= 0.0 {
                    continue;
                }
                let estimate = estimator.estimate(table, s, i);
                for k in 0..table.theta_count() {
                    let weight = table.mass(s, k) * table.marginal1[k][i];
                    if weight == 0.0 {
                        continue;
                    }
                    let truth = FiniteEstimate::from_pmf(
                        table.family.grid2(),
                        table.true_conditional(k, i),
                    );
                    acc.add(weight * pmf_loss(loss, &estimate, &truth));
                }
            }
            acc.value()
        })
        .collect();
    let mut total = CompensatedSum::new();
    for v in per_sample {
        total.add(v);
    }
    total.value()
}

/// The risk-optimal estimator read straight off the table.
pub struct OracleBayes;

impl FiniteCurveEstimator for OracleBayes {
    fn id(&self) -> String {
        "bayes".into()
    }

    fn estimate(&self, table: &JointTable, s: usize, i: usize) -> FiniteEstimate {
        let pmf = table
            .predictive_conditional(s, i)
            .expect("risk sums skip null conditioning cells");
        FiniteEstimate::from_pmf(table.family.grid2(), pmf)
    }
}

/// A constant regression guess; its probability function is uniform. The
/// squared-error risk of this estimator, as a function of the constant,
/// is minimized exactly at the mean of the true regression under the
/// augmented measure.
pub struct ConstantRegression(pub f64);

impl FiniteCurveEstimator for ConstantRegression {
    fn id(&self) -> String {
        format!("constant({})", self.0)
    }

    fn estimate(&self, table: &JointTable, _s: usize, _i: usize) -> FiniteEstimate {
        let m = table.family.grid2().len();
        FiniteEstimate {
            pmf: vec![1.0 / m as f64; m],
            regression: self.0,
        }
    }
}

enum PoolKind {
    PlugInAt(usize),
    PriorPredictive,
    Uniform,
    ShrinkToUniform(f64),
    SignPattern { pattern: u64, magnitude: f64 },
    RandomTilt { member: u64, strength: f64 },
}

/// One member of the randomized competitor pool.
pub struct PoolCompetitor {
    label: String,
    kind: PoolKind,
    seed: u64,
}

impl FiniteCurveEstimator for PoolCompetitor {
    fn id(&self) -> String {
        self.label.clone()
    }

    fn estimate(&self, table: &JointTable, s: usize, i: usize) -> FiniteEstimate {
        let grid2 = table.family.grid2();
        let m = grid2.len();
        let uniform = vec![1.0 / m as f64; m];
        match &self.kind {
            PoolKind::PlugInAt(k) => {
                let pmf = if table.marginal1[*k][i] > 0.0 {
                    table.true_conditional(*k, i)
                } else {
                    uniform
                };
                FiniteEstimate::from_pmf(grid2, pmf)
            }
            PoolKind::PriorPredictive => {
                let mut denominator = 0.0;
                let mut cells = vec![0.0; m];
                for k in 0..table.theta_count() {
                    let w = table.family.weights()[k];
                    denominator += w * table.marginal1[k][i];
                    for (j, cell) in cells.iter_mut().enumerate() {
                        *cell += w * table.family.prob(k, i, j);
                    }
                }
                let pmf = if denominator > 0.0 {
                    cells.iter().map(|c| c / denominator).collect()
                } else {
                    uniform
                };
                FiniteEstimate::from_pmf(grid2, pmf)
            }
            PoolKind::Uniform => FiniteEstimate::from_pmf(grid2, uniform),
            PoolKind::ShrinkToUniform(lambda) => {
                let bayes = OracleBayes.estimate(table, s, i);
                let pmf = bayes
                    .pmf
                    .iter()
                    .map(|p| (1.0 - lambda) * p + lambda / m as f64)
                    .collect();
                FiniteEstimate::from_pmf(grid2, pmf)
            }
            PoolKind::SignPattern { pattern, magnitude } => {
                let bayes = OracleBayes.estimate(table, s, i);
                let mut pmf: Vec<f64> = bayes
                    .pmf
                    .iter()
                    .enumerate()
                    .map(|(j, p)| {
                        let sign = if (pattern >> (j % 64)) & 1 == 1 {
                            1.0
                        } else {
                            -1.0
                        };
                        (p + sign * magnitude).max(0.0)
                    })
                    .collect();
                renormalize(&mut pmf);
                FiniteEstimate::from_pmf(grid2, pmf)
            }
            PoolKind::RandomTilt { member, strength } => {
                let bayes = OracleBayes.estimate(table, s, i);
                let mut pmf: Vec<f64> = bayes
                    .pmf
                    .iter()
                    .enumerate()
                    .map(|(j, p)| {
                        let mut state = self
                            .seed
                            .wrapping_add(member.wrapping_mul(0x9E37_79B9_7F4A_7C15))
                            .wrapping_add((s as u64) << 32)
                            .wrapping_add((i as u64) << 16)
                            .wrapping_add(j as u64);
                        let u = splitmix64(&mut state) as f64 / u64::MAX as f64;
                        p * (strength * (2.0 * u - 1.0)).exp()
                    })
                    .collect();
                renormalize(&mut pmf);
                FiniteEstimate::from_pmf(grid2, pmf)
            }
        }
    }
}

fn renormalize(pmf: &mut [f64]) {
    let total: f64 = pmf.iter().sum();
    if total > 0.0 {
        for p in pmf.iter_mut() {
            *p /= total;
        }
    } else {
        let m = pmf.len() as f64;
        for p in pmf.iter_mut() {
            *p = 1.0 / m;
        }
    }
}

/// A deterministic pool of `count` challengers: plug-ins at every
/// parameter point, the prior predictive, the uniform guess, two
/// uniform-shrunk copies of the optimum, eight systematic sign-pattern
/// perturbations of magnitude 0.05, and seeded random tilts for the rest.
pub fn competitor_pool(table: &JointTable, count: usize, seed: u64) -> Vec<PoolCompetitor> {
    let mut pool = Vec::with_capacity(count);
    let push = |label: String, kind: PoolKind, pool: &mut Vec<PoolCompetitor>| {
        if pool.len() < count {
            pool.push(PoolCompetitor { label, kind, seed });
        }
    };
    for k in 0..table.theta_count() {
        push(
            format!("plug_in_theta[{k}]"),
            PoolKind::PlugInAt(k),
            &mut pool,
        );
    }
    push(
        "prior_predictive".into(),
        PoolKind::PriorPredictive,
        &mut pool,
    );
    push("uniform".into(), PoolKind::Uniform, &mut pool);
    for lambda in [0.25, 0.5] {
        push(
            format!("shrink_to_uniform({lambda})"),
            PoolKind::ShrinkToUniform(lambda),
            &mut pool,
        );
    }
    for pattern in 1..=8u64 {
        push(
            format!("sign_pattern({pattern:03b})"),
            PoolKind::SignPattern {
                pattern,
                magnitude: 0.05,
            },
            &mut pool,
        );
    }
    let mut member = 0u64;
    while pool.len() < count {
        member += 1;
        push(
            format!("random_tilt[{member}]"),
            PoolKind::RandomTilt {
                member,
                strength: 0.1 + 0.1 * (member % 5) as f64,
            },
            &mut pool,
        );
    }
    pool
}

/// The eight fixed sign-pattern perturbations of the optimum, the
/// competitors the exactness statement singles out: they differ from the
/// optimum on every positive-mass cell, so beating them must be strict.
pub fn systematic_perturbations(seed: u64) -> Vec<PoolCompetitor> {
    (1..=8u64)
        .map(|pattern| PoolCompetitor {
            label: format!("sign_pattern({pattern:03b})"),
            kind: PoolKind::SignPattern {
                pattern,
                magnitude: 0.05,
            },
            seed,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::two_point_family;
    use crate::integrate::golden_section_max;
    use approx::assert_relative_eq;

    fn settings() -> QuadratureSettings {
        QuadratureSettings::light()
    }

    fn single_theta_family() -> FiniteTableFamily {
        FiniteTableFamily::new(
            vec![0.5],
            vec![1.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            vec![0.1, 0.2, 0.3, 0.4],
        )
        .expect("valid table")
    }

    #[test]
    fn two_point_posterior_after_one_silent_pair() {
        let family = two_point_family();
        let table = build_joint_table(&family, 1).expect("small");
        let s = table
            .samples
            .iter()
            .position(|pairs| pairs == &[(0, 0)])
            .expect("sample ((0,0)) is enumerated");
        assert_relative_eq!(table.posterior_weight(s, 0), 0.8, epsilon = 1e-15);
        assert_relative_eq!(table.posterior_weight(s, 1), 0.2, epsilon = 1e-15);
        assert_relative_eq!(table.evidence(s), 0.625, epsilon = 1e-15);
    }

    #[test]
    fn caps_reject_oversized_requests() {
        let family = two_point_family();
        let err = build_joint_table(&family, 5).unwrap_err();
        assert_eq!(
            err,
            OracleError::SampleSizeTooLarge {
                n: 5,
                max: MAX_ORACLE_N
            }
        );

        let thetas: Vec<f64> = (0..16).map(|k| k as f64 / 16.0).collect();
        let weights = vec![1.0 / 16.0; 16];
        let grid: Vec<f64> = (0..8).map(f64::from).collect();
        let probs = vec![1.0 / 64.0; 16 * 64];
        let big = FiniteTableFamily::new(thetas, weights, grid.clone(), grid, probs)
            .expect("valid table");
        let err = build_joint_table(&big, 4).unwrap_err();
        assert!(matches!(err, OracleError::TooManyEntries { .. }));
    }

    #[test]
    fn identities_hold_on_the_two_point_model() {
        let family = two_point_family();
        for n in [0usize, 1, 2, 3] {
            let table = build_joint_table(&family, n).expect("small");
            let report = check_identities(&table, &settings()).expect("checks run");
            assert!(
                report.pass(1e-13),
                "n = {n}: violations {:?}",
                report.violations
            );
        }
    }

    #[test]
    fn identities_are_trivial_for_a_single_parameter() {
        let family = single_theta_family();
        let table = build_joint_table(&family, 2).expect("small");
        let report = check_identities(&table, &settings()).expect("checks run");
        assert!(report.max_violation() <= 1e-15);
        for s in 0..table.sample_count() {
            assert_eq!(table.posterior_weight(s, 0), 1.0);
        }
    }

    #[test]
    fn conditional_expectation_matches_the_engine() {
        let family = two_point_family();
        let table = build_joint_table(&family, 2).expect("small");
        let model: Arc<dyn ModelFamily> = Arc::new(family.clone());
        for &s in &[0usize, 3, 9, 15] {
            let batch = table.sample_batch(s);
            let eval =
                PredictiveEvaluator::from_parts(Arc::clone(&model), &family.prior(), &batch, &settings())
                    .expect("builds");
            for i in 0..family.grid1().len() {
                if table.predictive_marginal1(s, i) <= 0.0 {
                    continue;
                }
                let x1 = family.grid1()[i];
                let point = family.grid2()[1];
                let exact = exact_conditional_expectation(&table, s, i, |x2| {
                    if x2 == point {
                        1.0
                    } else {
                        0.0
                    }
                })
                .expect("positive mass");
                let engine = eval
                    .probability(x1, &crate::predictive::ObsSet::Points(vec![point]))
                    .expect("evaluates");
                assert_relative_eq!(exact, engine, epsilon = 1e-12);

                let exact_mean =
                    exact_conditional_expectation(&table, s, i, |x2| x2).expect("positive mass");
                let engine_mean = eval.regression(x1).expect("evaluates");
                assert_relative_eq!(exact_mean, engine_mean, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn conditioning_on_a_null_cell_errors() {
        let family = two_point_family();
        let table = build_joint_table(&family, 1).expect("small");
        let s = table
            .samples
            .iter()
            .position(|pairs| pairs == &[(1, 1)])
            .expect("sample ((1,1)) is enumerated");
        let err = exact_conditional_expectation(&table, s, 1, |_| 1.0);
        assert!(err.is_ok(), "theta=1 gives (1,*) mass");
        let singleton = single_theta_family();
        let zero_row = FiniteTableFamily::new(
            singleton.thetas().to_vec(),
            singleton.weights().to_vec(),
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            vec![0.5, 0.5, 0.0, 0.0],
        )
        .expect("valid table");
        let table = build_joint_table(&zero_row, 1).expect("small");
        let err = exact_conditional_expectation(&table, 0, 1, |_| 1.0).unwrap_err();
        assert!(matches!(err, OracleError::NullConditioning { .. }));
    }

    #[test]
    fn resampled_first_pair_matches_single_pair_prediction() {
        let family = two_point_family();
        for n in [1usize, 2, 3] {
            let table = build_joint_table(&family, n).expect("small");
            let violation = check_predictive_marginal_identity(&table);
            let budget = if n == 1 { 1e-15 } else { 1e-13 };
            assert!(violation <= budget, "n = {n}: violation {violation}");
        }
    }

    fn joint_regression_mean(table: &JointTable) -> f64 {
        let family = table.family();
        let mut mean = 0.0;
        for k in 0..table.theta_count() {
            for i in 0..family.grid1().len() {
                let truth =
                    FiniteEstimate::from_pmf(family.grid2(), table.true_conditional(k, i));
                mean += family.weights()[k] * table.marginal1[k][i] * truth.regression;
            }
        }
        mean
    }

    #[test]
    fn constant_regression_risk_bottoms_at_the_joint_mean() {
        let clustered = FiniteTableFamily::new(
            vec![0.4, 0.6],
            vec![0.5, 0.5],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            vec![
                0.2500, 0.2505, 0.2500, 0.2495,
                0.2505, 0.2495, 0.2490, 0.2510,
            ],
        )
        .expect("valid table");
        let table = build_joint_table(&clustered, 1).expect("small");
        let expected = joint_regression_mean(&table);
        let risk_of = |c: f64| {
            exact_bayes_risk(&table, &ConstantRegression(c), LossKind::SqErrorRegression)
        };
        let (argmin, _) = golden_section_max(|c| -risk_of(c), 0.4, 0.6, 200);
        assert_relative_eq!(argmin, expected, epsilon = 1e-10);

        let family = two_point_family();
        let table = build_joint_table(&family, 2).expect("small");
        let mean = joint_regression_mean(&table);
        assert_relative_eq!(mean, 0.25, epsilon = 1e-15);
        let table_risk = |c: f64| {
            exact_bayes_risk(&table, &ConstantRegression(c), LossKind::SqErrorRegression)
        };
        for delta in [1e-5, 1e-3, 0.1] {
            assert!(table_risk(mean) < table_risk(mean + delta));
            assert!(table_risk(mean) < table_risk(mean - delta));
        }
    }

    #[test]
    fn singleton_family_gives_zero_risk_to_its_own_conditionals() {
        let family = single_theta_family();
        let table = build_joint_table(&family, 2).expect("small");
        for loss in LossKind::all() {
            let risk = exact_bayes_risk(&table, &OracleBayes, loss);
            assert!(risk.abs() <= 1e-28, "{}: {risk}", loss.name());
        }
    }

    #[test]
    fn optimum_strictly_beats_systematic_perturbations() {
        let family = two_point_family();
        let table = build_joint_table(&family, 2).expect("small");
        for loss in LossKind::all() {
            let bayes_risk = exact_bayes_risk(&table, &OracleBayes, loss);
            for competitor in systematic_perturbations(9) {
                let risk = exact_bayes_risk(&table, &competitor, loss);
                assert!(
                    bayes_risk < risk,
                    "{} vs {}: {bayes_risk} !< {risk}",
                    loss.name(),
                    competitor.id()
                );
            }
        }
    }

    #[test]
    fn optimum_is_never_beaten_by_the_pool() {
        let family = two_point_family();
        let table = build_joint_table(&family, 2).expect("small");
        let pool = competitor_pool(&table, 200, 17);
        assert_eq!(pool.len(), 200);
        for loss in LossKind::all() {
            let bayes_risk = exact_bayes_risk(&table, &OracleBayes, loss);
            for competitor in &pool {
                let risk = exact_bayes_risk(&table, competitor, loss);
                assert!(
                    bayes_risk <= risk + 1e-15,
                    "{} vs {}: {bayes_risk} > {risk}",
                    loss.name(),
                    competitor.id()
                );
            }
        }
    }

    #[test]
    fn risk_is_worker_count_independent() {
        let family = two_point_family();
        let table = build_joint_table(&family, 3).expect("small");
        let reference = exact_bayes_risk(&table, &OracleBayes, LossKind::SqTotalVariation);
        for workers in [1usize, 3, 8] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .expect("pool");
            let risk = pool
                .install(|| exact_bayes_risk(&table, &OracleBayes, LossKind::SqTotalVariation));
            assert_eq!(risk.to_bits(), reference.to_bits());
        }
    }

    #[test]
    fn discrete_losses_agree_with_the_risk_module() {
        let p = [0.1, 0.2, 0.3, 0.4];
        let q = [0.4, 0.3, 0.2, 0.1];
        let grid = [0.0, 1.0, 2.0, 3.0];
        let support = crate::model::Support::Finite(grid.to_vec());
        let lookup = |table: [f64; 4]| {
            move |x: f64| {
                grid.iter()
                    .position(|&g| g == x)
                    .map_or(0.0, |j| table[j])
            }
        };
        let cdf = |table: [f64; 4]| {
            move |t: f64| -> f64 {
                grid.iter()
                    .zip(table)
                    .filter(|(g, _)| **g <= t)
                    .map(|(_, v)| v)
                    .sum()
            }
        };
        let tv = crate::risk::loss_sq_tv(&lookup(p), &lookup(q), &support, &settings())
            .expect("exact");
        assert_relative_eq!(tv, sq_tv_pmf(&p, &q), epsilon = 1e-15);
        let l1 = crate::risk::loss_sq_l1(&lookup(p), &lookup(q), &support, &settings())
            .expect("exact");
        assert_relative_eq!(l1, sq_l1_pmf(&p, &q), epsilon = 1e-15);
        let linf = crate::risk::loss_sq_linf(&cdf(p), &cdf(q), &support, &settings())
            .expect("exact");
        assert_relative_eq!(linf, sq_linf_cdf(&p, &q), epsilon = 1e-15);
    }

    #[test]
    fn prior_table_is_the_empty_sample_posterior() {
        let family = two_point_family();
        let table = build_joint_table(&family, 0).expect("small");
        assert_eq!(table.sample_count(), 1);
        assert_eq!(table.posterior_weight(0, 0), 0.5);
        assert_eq!(table.posterior_weight(0, 1), 0.5);
    }
}
