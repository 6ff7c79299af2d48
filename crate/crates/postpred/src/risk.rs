//! Risk measurement for conditional-object estimators: the four matched
//! losses, a common estimator abstraction with the reference strategies
//! (estimators and their challengers), and a paired Monte Carlo harness
//! whose output is independent of the worker count.
//!
//! Each estimated object carries its own loss: squared total variation
//! for the conditional distribution, squared `L1` distance for the
//! density, squared sup-distance for the CDF, squared error for the
//! regression value. On finite supports every loss is an exact sum; on
//! continuous supports the `L1`-type losses are quadrature integrals and
//! the sup-distance is taken over a quantile-spanning grid with local
//! refinement.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::families::{BuiltinFamily, FamilyError};
use crate::integrate::{golden_section_max, line_integral, CompensatedSum, QuadError, QuadratureSettings};
use crate::model::{sample_pair, DomainError, ModelFamily, ParamValue, SampleBatch, Support};
use crate::posterior::{build_posterior, PosteriorError};
use crate::predictive::{PredictiveError, PredictiveEvaluator};
use crate::prior::PriorSpec;
use crate::stream::{splitmix64, substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    SqTotalVariation,
    SqL1Density,
    SqLinfCdf,
    SqErrorRegression,
}

impl LossKind {
    pub fn all() -> [LossKind; 4] {
        [
            LossKind::SqTotalVariation,
            LossKind::SqL1Density,
            LossKind::SqLinfCdf,
            LossKind::SqErrorRegression,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::SqTotalVariation => "sq_tv",
            LossKind::SqL1Density => "sq_l1",
            LossKind::SqLinfCdf => "sq_linf",
            LossKind::SqErrorRegression => "sq_error",
        }
    }

    pub fn from_name(name: &str) -> Option<LossKind> {
        LossKind::all().into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiskError {
    #[error("estimated CDF decreases by {drop} near t = {at}")]
    DecreasingCdf { at: f64, drop: f64 },
    #[error("{reps} replications requested, at least 100 are needed")]
    TooFewReplications { reps: usize },
    #[error("{failed} of {reps} replications failed, more than the 1% budget")]
    TooManyFailures { failed: usize, reps: usize },
    #[error("estimator {id} is undefined here: {why}")]
    UndefinedEstimate { id: String, why: String },
    #[error("unknown estimator name {0:?}")]
    UnknownEstimator(String),
    #[error("report line {0:?} does not parse")]
    BadReportLine(String),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Predictive(#[from] PredictiveError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Family(#[from] FamilyError),
}

fn open_lo(lo: f64) -> f64 {
    if lo == f64::MIN_POSITIVE {
        0.0
    } else {
        lo
    }
}

/// Total variation distance between two conditional distributions,
/// squared. Exact half-sum on finite supports, `L1/2` quadrature on
/// intervals.
pub fn loss_sq_tv(
    est_density: &dyn Fn(f64) -> f64,
    true_density: &dyn Fn(f64) -> f64,
    support: &Support,
    settings: &QuadratureSettings,
) -> Result<f64, RiskError> {
    let l1 = l1_distance(est_density, true_density, support, settings)?;
    Ok((0.5 * l1) * (0.5 * l1))
}

/// `L1` distance between the conditional densities, squared.
pub fn loss_sq_l1(
    est_density: &dyn Fn(f64) -> f64,
    true_density: &dyn Fn(f64) -> f64,
    support: &Support,
    settings: &QuadratureSettings,
) -> Result<f64, RiskError> {
    let l1 = l1_distance(est_density, true_density, support, settings)?;
    Ok(l1 * l1)
}

fn l1_distance(
    est_density: &dyn Fn(f64) -> f64,
    true_density: &dyn Fn(f64) -> f64,
    support: &Support,
    settings: &QuadratureSettings,
) -> Result<f64, RiskError> {
    match support {
        Support::Finite(points) => {
            let mut acc = CompensatedSum::new();
            for &p in points {
                acc.add((est_density(p) - true_density(p)).abs());
            }
            Ok(acc.value())
        }
        Support::Interval { lo, hi } => {
            let lo = open_lo(*lo);
            let r = line_integral(
                |x| (est_density(x) - true_density(x)).abs(),
                (lo, *hi),
                settings,
            )?;
            Ok(r.value)
        }
    }
}

const LINF_GRID: usize = 512;
const LINF_REFINE: usize = 64;
const LINF_TAIL: f64 = 1e-4;
const CDF_DROP_TOL: f64 = 1e-9;

/// Solves `cdf(t) = p` by bracket expansion and bisection.
fn cdf_quantile(cdf: &dyn Fn(f64) -> f64, p: f64, support_lo: f64, support_hi: f64) -> f64 {
    let mut a;
    let mut b;
    if support_lo.is_finite() {
        a = support_lo;
        b = support_lo.abs().max(1.0);
        for _ in 0..200 {
            if cdf(b) >= p || b >= support_hi {
                break;
            }
            b = a + 2.0 * (b - a);
        }
        b = b.min(support_hi.max(a + 1.0));
    } else if support_hi.is_finite() {
        b = support_hi;
        a = -support_hi.abs().max(1.0);
        for _ in 0..200 {
            if cdf(a) <= p {
                break;
            }
            a = b - 2.0 * (b - a);
        }
    } else {
        a = -1.0;
        b = 1.0;
        for _ in 0..200 {
            if cdf(a) <= p {
                break;
            }
            a *= 2.0;
        }
        for _ in 0..200 {
            if cdf(b) >= p {
                break;
            }
            b *= 2.0;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if !(mid > a && mid < b) {
            break;
        }
        if cdf(mid) < p {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Sup-distance between the conditional CDFs, squared. On finite supports
/// the supremum is over the jump points; on intervals it is scanned over
/// a 512-point grid spanning the true CDF's central mass, refined with 64
/// points around the best cell. An estimated CDF that decreases by more
/// than `1e-9` between grid neighbors is rejected.
pub fn loss_sq_linf(
    est_cdf: &dyn Fn(f64) -> f64,
    true_cdf: &dyn Fn(f64) -> f64,
    support: &Support,
    _settings: &QuadratureSettings,
) -> Result<f64, RiskError> {
    match support {
        Support::Finite(points) => {
            let mut worst = 0.0f64;
            let mut prev = f64::NEG_INFINITY;
            for &p in points {
                let e = est_cdf(p);
                if e < prev - CDF_DROP_TOL {
                    return Err(RiskError::DecreasingCdf {
                        at: p,
                        drop: prev - e,
                    });
                }
                prev = e;
                worst = worst.max((e - true_cdf(p)).abs());
            }
            Ok(worst * worst)
        }
        Support::Interval { lo, hi } => {
            let lo = open_lo(*lo);
            let mut q_lo = cdf_quantile(true_cdf, LINF_TAIL, lo, *hi);
            let mut q_hi = cdf_quantile(true_cdf, 1.0 - LINF_TAIL, lo, *hi);
            let e_lo = cdf_quantile(est_cdf, LINF_TAIL, lo, *hi);
            let e_hi = cdf_quantile(est_cdf, 1.0 - LINF_TAIL, lo, *hi);
            if e_lo.is_finite() {
                q_lo = q_lo.min(e_lo);
            }
            if e_hi.is_finite() {
                q_hi = q_hi.max(e_hi);
            }
            let h = (q_hi - q_lo) / (LINF_GRID - 1) as f64;
            let mut worst = 0.0f64;
            let mut at = q_lo;
            let mut prev = f64::NEG_INFINITY;
            for i in 0..LINF_GRID {
                let t = q_lo + i as f64 * h;
                let e = est_cdf(t);
                if e < prev - CDF_DROP_TOL {
                    return Err(RiskError::DecreasingCdf {
                        at: t,
                        drop: prev - e,
                    });
                }
                prev = e;
                let d = (e - true_cdf(t)).abs();
                if d > worst {
                    worst = d;
                    at = t;
                }
            }
            let fine_lo = (at - h).max(q_lo);
            let fine_hi = (at + h).min(q_hi);
            let fh = (fine_hi - fine_lo) / (LINF_REFINE - 1) as f64;
            for i in 0..LINF_REFINE {
                let t = fine_lo + i as f64 * fh;
                worst = worst.max((est_cdf(t) - true_cdf(t)).abs());
            }
            Ok(worst * worst)
        }
    }
}

pub fn loss_sq_error(estimate: f64, truth: f64) -> f64 {
    let d = estimate - truth;
    d * d
}

/// The conditional objects an estimator produces at one `(sample, x1)`:
/// a conditional density over `x2`, its CDF, and the regression value.
pub struct CurveBundle {
    pub density: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub cdf: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub regression: f64,
}

pub trait CurveEstimator: Send + Sync {
    fn id(&self) -> String;
    fn estimate(&self, sample: &SampleBatch, x1: f64) -> Result<CurveBundle, RiskError>;
}

/// Loss of one estimate against the conditional distribution of the model
/// at `theta`, conditioning on `X1 = x1`.
pub fn scenario_loss(
    kind: LossKind,
    bundle: &CurveBundle,
    model: &dyn ModelFamily,
    theta: f64,
    x1: f64,
    settings: &QuadratureSettings,
) -> Result<f64, RiskError> {
    let support = model.obs_support().1;
    match kind {
        LossKind::SqTotalVariation => loss_sq_tv(
            &*bundle.density,
            &|x2| model.true_conditional_density(theta, x1, x2),
            &support,
            settings,
        ),
        LossKind::SqL1Density => loss_sq_l1(
            &*bundle.density,
            &|x2| model.true_conditional_density(theta, x1, x2),
            &support,
            settings,
        ),
        LossKind::SqLinfCdf => loss_sq_linf(
            &*bundle.cdf,
            &|t| model.true_conditional_cdf(theta, x1, t),
            &support,
            settings,
        ),
        LossKind::SqErrorRegression => Ok(loss_sq_error(
            bundle.regression,
            model.true_regression(theta, x1),
        )),
    }
}

/// The model's own conditional objects at a fixed parameter; the bundle
/// every plug-in strategy returns.
fn true_bundle(model: &Arc<dyn ModelFamily>, theta: f64, x1: f64) -> CurveBundle {
    let m1 = Arc::clone(model);
    let m2 = Arc::clone(model);
    CurveBundle {
        density: Box::new(move |x2| m1.true_conditional_density(theta, x1, x2)),
        cdf: Box::new(move |t| m2.true_conditional_cdf(theta, x1, t)),
        regression: model.true_regression(theta, x1),
    }
}

fn evaluator_bundle(eval: &Arc<PredictiveEvaluator>, x1: f64) -> Result<CurveBundle, RiskError> {
    let regression = eval.regression(x1)?;
    let e1 = Arc::clone(eval);
    let e2 = Arc::clone(eval);
    Ok(CurveBundle {
        density: Box::new(move |x2| e1.conditional_density(x1, x2).unwrap_or(f64::NAN)),
        cdf: Box::new(move |t| e2.conditional_cdf(x1, t).unwrap_or(f64::NAN)),
        regression,
    })
}

/// The risk-optimal estimator through the family's conjugate closed
/// forms; finite tabulated families go through exact enumeration instead.
pub struct BayesClosedForm {
    family: BuiltinFamily,
    settings: QuadratureSettings,
}

impl BayesClosedForm {
    pub fn new(family: BuiltinFamily, settings: QuadratureSettings) -> Self {
        BayesClosedForm { family, settings }
    }
}

impl CurveEstimator for BayesClosedForm {
    fn id(&self) -> String {
        "bayes".into()
    }

    fn estimate(&self, sample: &SampleBatch, x1: f64) -> Result<CurveBundle, RiskError> {
        match &self.family {
            BuiltinFamily::Gamma(f) => {
                let a = f.a_n(sample, x1)?;
                let m = 2.0 * sample.len() as f64 + 2.0;
                let regression = a / ((m - 1.0) * x1);
                let (fa, fm, fx) = (a, m, x1);
                let density = move |x2: f64| {
                    if x2 < 0.0 {
                        0.0
                    } else {
                        (fm.ln() + fx.ln() + fm * fa.ln() - (fm + 1.0) * (fx * x2 + fa).ln()).exp()
                    }
                };
                let (ca, cm, cx) = (a, m, x1);
                let cdf = move |t: f64| {
                    if t <= 0.0 {
                        0.0
                    } else {
                        -(-cm * (cx * t / ca).ln_1p()).exp_m1()
                    }
                };
                Ok(CurveBundle {
                    density: Box::new(density),
                    cdf: Box::new(cdf),
                    regression,
                })
            }
            BuiltinFamily::Coin(f) => {
                if x1 != 0.0 && x1 != 1.0 {
                    return Err(RiskError::UndefinedEstimate {
                        id: self.id(),
                        why: format!("x1 = {x1} is not binary"),
                    });
                }
                let k1 = x1 as u8;
                let p0 = f.conditional_pf_cf(sample, k1, 0)?;
                let p1 = f.conditional_pf_cf(sample, k1, 1)?;
                Ok(discrete_bundle(vec![0.0, 1.0], vec![p0, p1]))
            }
            BuiltinFamily::Normal(f) => {
                let pred = f.predictive_params(sample);
                let mean = pred.conditional_mean(x1);
                let var = pred.conditional_variance();
                let sd = var.sqrt();
                let density = move |x2: f64| {
                    let z = (x2 - mean) / sd;
                    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
                };
                let cdf = move |t: f64| crate::families::normal_cdf((t - mean) / sd);
                Ok(CurveBundle {
                    density: Box::new(density),
                    cdf: Box::new(cdf),
                    regression: mean,
                })
            }
            BuiltinFamily::Finite(f) => {
                let eval = Arc::new(PredictiveEvaluator::from_parts(
                    Arc::new(f.clone()),
                    &f.prior(),
                    sample,
                    &self.settings,
                )?);
                let points = f.grid2().to_vec();
                let pmf: Result<Vec<f64>, _> = points
                    .iter()
                    .map(|&p| eval.conditional_density(x1, p))
                    .collect();
                Ok(discrete_bundle(points, pmf?))
            }
        }
    }
}

/// Step-function bundle over an ascending finite support.
fn discrete_bundle(points: Vec<f64>, pmf: Vec<f64>) -> CurveBundle {
    let regression: f64 = points.iter().zip(&pmf).map(|(p, w)| p * w).sum();
    let d_points = points.clone();
    let d_pmf = pmf.clone();
    let density = move |x2: f64| {
        d_points
            .iter()
            .position(|&p| p == x2)
            .map_or(0.0, |j| d_pmf[j])
    };
    let cdf = move |t: f64| {
        points
            .iter()
            .zip(&pmf)
            .filter(|(p, _)| **p <= t)
            .map(|(_, w)| w)
            .sum()
    };
    CurveBundle {
        density: Box::new(density),
        cdf: Box::new(cdf),
        regression,
    }
}

/// The same estimator through the generic numeric engine; exists to pit
/// the quadrature route against the closed forms.
pub struct BayesNumeric {
    model: Arc<dyn ModelFamily>,
    prior: PriorSpec,
    settings: QuadratureSettings,
}

impl BayesNumeric {
    pub fn new(model: Arc<dyn ModelFamily>, prior: PriorSpec, settings: QuadratureSettings) -> Self {
        BayesNumeric {
            model,
            prior,
            settings,
        }
    }
}

impl CurveEstimator for BayesNumeric {
    fn id(&self) -> String {
        "bayes_numeric".into()
    }

    fn estimate(&self, sample: &SampleBatch, x1: f64) -> Result<CurveBundle, RiskError> {
        let eval = Arc::new(PredictiveEvaluator::from_parts(
            Arc::clone(&self.model),
            &self.prior,
            sample,
            &self.settings,
        )?);
        evaluator_bundle(&eval, x1)
    }
}

/// Plug-in challenger: the model's own objects at the reweighted mean of
/// the parameter (snapped to the nearest point for finite spaces).
pub struct PlugInPosteriorMean {
    model: Arc<dyn ModelFamily>,
    prior: PriorSpec,
    settings: QuadratureSettings,
}

impl PlugInPosteriorMean {
    pub fn new(model: Arc<dyn ModelFamily>, prior: PriorSpec, settings: QuadratureSettings) -> Self {
        PlugInPosteriorMean {
            model,
            prior,
            settings,
        }
    }
}

impl CurveEstimator for PlugInPosteriorMean {
    fn id(&self) -> String {
        "plug_in_posterior_mean".into()
    }

    fn estimate(&self, sample: &SampleBatch, x1: f64) -> Result<CurveBundle, RiskError> {
        let posterior = build_posterior(
            Arc::clone(&self.model),
            &self.prior,
            sample,
            &self.settings,
        )?;
        let mut theta = posterior.mean()?;
        if let Support::Finite(points) = self.model.param_support() {
            theta = points
                .iter()
                .copied()
                .min_by(|a, b| (a - theta).abs().total_cmp(&(b - theta).abs()))
                .expect("finite parameter spaces are non-empty");
        }
        Ok(true_bundle(&self.model, theta, x1))
    }
}

/// Plug-in challenger: the model's own objects at the maximizer of the
/// joint sample density.
pub struct PlugInMle {
    model: Arc<dyn ModelFamily>,
    prior: PriorSpec,
    settings: QuadratureSettings,
}

impl PlugInMle {
    pub fn new(model: Arc<dyn ModelFamily>, prior: PriorSpec, settings: QuadratureSettings) -> Self {
        PlugInMle {
            model,
            prior,
            settings,
        }
    }
}

impl CurveEstimator for PlugInMle {
    fn id(&self) -> String {
        "plug_in_mle".into()
    }

    fn estimate(&self, sample: &SampleBatch, x1: f64) -> Result<CurveBundle, RiskError> {
        if sample.is_empty() {
            return Err(RiskError::UndefinedEstimate {
                id: self.id(),
                why: "the likelihood of an empty sample is flat".into(),
            });
        }
        let log_f =
            |theta: f64| crate::model::log_joint_sample_density(self.model.as_ref(), theta, sample);
        let theta = match self.model.param_support() {
            Support::Finite(points) => points
                .iter()
                .copied()
                .max_by(|a, b| log_f(*a).total_cmp(&log_f(*b)))
                .expect("finite parameter spaces are non-empty"),
            Support::Interval { .. } => {
                let (lo, hi) = self
                    .prior
                    .truncated_interval(self.settings.truncation_mass)
                    .map_or_else(
                        || {
                            let b = self.prior.support().bounds();
                            (b.0, b.1)
                        },
                        |b| b,
                    );
                let scan = 129;
                let h = (hi - lo) / scan as f64;
                let mut best = lo + 0.5 * h;
                let mut best_v = f64::NEG_INFINITY;
                for i in 0..scan {
                    let t = lo + (i as f64 + 0.5) * h;
                    let v = log_f(t);
                    if v > best_v {
                        best_v = v;
                        best = t;
                    }
                }
                if best_v == f64::NEG_INFINITY {
                    return Err(RiskError::UndefinedEstimate {
                        id: self.id(),
                        why: "the sample density vanishes everywhere scanned".into(),
                    });
                }
                golden_section_max(log_f, (best - h).max(lo), (best + h).min(hi), 80).0
            }
        };
        Ok(true_bundle(&self.model, theta, x1))
    }
}

/// Challenger that ignores the sample: the estimate from no data at all.
pub struct PriorPredictive {
    inner: BayesClosedForm,
}

impl PriorPredictive {
    pub fn new(family: BuiltinFamily, settings: QuadratureSettings) -> Self {
        PriorPredictive {
            inner: BayesClosedForm::new(family, settings),
        }
    }
}

impl CurveEstimator for PriorPredictive {
    fn id(&self) -> String {
        "prior_predictive".into()
    }

    fn estimate(&self, _sample: &SampleBatch, x1: f64) -> Result<CurveBundle, RiskError> {
        self.inner.estimate(&SampleBatch::empty(), x1)
    }
}

/// Challenger that shifts the risk-optimal estimate by `epsilon`:
/// translation on continuous supports, mass moved to the top point on
/// finite supports. `epsilon = 0` reproduces the optimum exactly.
pub struct PerturbedBayes {
    inner: BayesClosedForm,
    epsilon: f64,
    support2: Support,
}

impl PerturbedBayes {
    pub fn new(family: BuiltinFamily, epsilon: f64, settings: QuadratureSettings) -> Self {
        let support2 = family.model().obs_support().1;
        PerturbedBayes {
            inner: BayesClosedForm::new(family, settings),
            epsilon,
            support2,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl CurveEstimator for PerturbedBayes {
    fn id(&self) -> String {
        format!("perturbed_bayes({})", self.epsilon)
    }

    fn estimate(&self, sample: &SampleBatch, x1: f64) -> Result<CurveBundle, RiskError> {
        let base = self.inner.estimate(sample, x1)?;
        let eps = self.epsilon;
        match &self.support2 {
            Support::Interval { .. } => {
                let d = base.density;
                let c = base.cdf;
                Ok(CurveBundle {
                    density: Box::new(move |x2| d(x2 - eps)),
                    cdf: Box::new(move |t| c(t - eps)),
                    regression: base.regression + eps,
                })
            }
            Support::Finite(points) => {
                let mut pmf: Vec<f64> = points.iter().map(|&p| (base.density)(p)).collect();
                let last = pmf.len() - 1;
                let moved: f64 = pmf[..last].iter().map(|p| eps * p).sum();
                for p in pmf[..last].iter_mut() {
                    *p *= 1.0 - eps;
                }
                pmf[last] += moved;
                Ok(discrete_bundle(points.clone(), pmf))
            }
        }
    }
}

/// Builds a named estimator. Recognized names: `bayes`, `bayes_numeric`,
/// `plug_in_posterior_mean`, `plug_in_mle`, `prior_predictive`, and
/// `perturbed_bayes(<epsilon>)`.
pub fn estimator_from_name(
    name: &str,
    family: &BuiltinFamily,
    prior: &PriorSpec,
    settings: &QuadratureSettings,
) -> Result<Arc<dyn CurveEstimator>, RiskError> {
    let model = family.model_arc();
    match name {
        "bayes" => Ok(Arc::new(BayesClosedForm::new(
            family.clone(),
            settings.clone(),
        ))),
        "bayes_numeric" => Ok(Arc::new(BayesNumeric::new(
            model,
            prior.clone(),
            settings.clone(),
        ))),
        "plug_in_posterior_mean" => Ok(Arc::new(PlugInPosteriorMean::new(
            model,
            prior.clone(),
            settings.clone(),
        ))),
        "plug_in_mle" => Ok(Arc::new(PlugInMle::new(
            model,
            prior.clone(),
            settings.clone(),
        ))),
        "prior_predictive" => Ok(Arc::new(PriorPredictive::new(
            family.clone(),
            settings.clone(),
        ))),
        other => {
            if let Some(arg) = other
                .strip_prefix("perturbed_bayes(")
                .and_then(|s| s.strip_suffix(')'))
            {
                let eps: f64 = arg
                    .trim()
                    .parse()
                    .map_err(|_| RiskError::UnknownEstimator(other.into()))?;
                if !(eps.is_finite() && (0.0..1.0).contains(&eps)) {
                    return Err(RiskError::UnknownEstimator(other.into()));
                }
                return Ok(Arc::new(PerturbedBayes::new(
                    family.clone(),
                    eps,
                    settings.clone(),
                )));
            }
            Err(RiskError::UnknownEstimator(other.into()))
        }
    }
}

/// One Monte Carlo risk study: the sampling scenario and its budget.
#[derive(Clone)]
pub struct RiskRequest {
    pub model: Arc<dyn ModelFamily>,
    pub prior: PriorSpec,
    pub n: usize,
    pub loss: LossKind,
    pub replications: usize,
    pub x1_per_rep: usize,
    pub seed: u64,
    pub settings: QuadratureSettings,
}

impl RiskRequest {
    pub fn new(model: Arc<dyn ModelFamily>, prior: PriorSpec, n: usize, loss: LossKind) -> Self {
        RiskRequest {
            model,
            prior,
            n,
            loss,
            replications: 1000,
            x1_per_rep: 1,
            seed: 1,
            settings: QuadratureSettings::light(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub estimator: String,
    pub loss: LossKind,
    pub n: usize,
    pub replications: usize,
    pub failed: usize,
    pub mean_risk: f64,
    pub std_error: f64,
    pub seed_digest: u64,
}

impl RiskReport {
    /// One-line serialization; floats round-trip exactly.
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.estimator,
            self.loss.name(),
            self.n,
            self.replications,
            self.failed,
            self.mean_risk,
            self.std_error,
            self.seed_digest
        )
    }

    pub fn from_line(line: &str) -> Result<RiskReport, RiskError> {
        let bad = || RiskError::BadReportLine(line.into());
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.len() != 8 {
            return Err(bad());
        }
        Ok(RiskReport {
            estimator: parts[0].into(),
            loss: LossKind::from_name(parts[1]).ok_or_else(bad)?,
            n: parts[2].parse().map_err(|_| bad())?,
            replications: parts[3].parse().map_err(|_| bad())?,
            failed: parts[4].parse().map_err(|_| bad())?,
            mean_risk: parts[5].parse().map_err(|_| bad())?,
            std_error: parts[6].parse().map_err(|_| bad())?,
            seed_digest: parts[7].parse().map_err(|_| bad())?,
        })
    }
}

/// Mean and standard error of the paired per-replication difference
/// `other - baseline`; negative means the challenger did better.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedMargin {
    pub estimator: String,
    pub mean_diff: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub reports: Vec<RiskReport>,
    /// One margin per non-baseline estimator, against `reports[0]`.
    pub margins: Vec<PairedMargin>,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(*v);
    }
    let mean = acc.value() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let mut sq = CompensatedSum::new();
    for v in values {
        let d = v - mean;
        sq.add(d * d);
    }
    (mean, (sq.value() / (m * (m - 1.0))).sqrt())
}

/// Paired Monte Carlo risk comparison. Every replication draws one
/// parameter from the prior, one sample of `n` pairs, and `x1_per_rep`
/// conditioning points, then evaluates every estimator on that same
/// scenario. Replications use per-index substreams, so the output is
/// identical for any worker count. A replication that fails for any
/// estimator is dropped for all of them; more than 1% such failures
/// aborts the study.
pub fn compare(
    request: &RiskRequest,
    estimators: &[Arc<dyn CurveEstimator>],
) -> Result<ComparisonReport, RiskError> {
    if request.replications < 100 {
        return Err(RiskError::TooFewReplications {
            reps: request.replications,
        });
    }
    assert!(!estimators.is_empty(), "at least one estimator");
    assert!(request.x1_per_rep >= 1, "at least one conditioning draw");

    let per_rep: Vec<Result<Vec<f64>, RiskError>> = (0..request.replications)
        .into_par_iter()
        .map(|rep| run_replication(request, estimators, rep as u64))
        .collect();

    let mut losses: Vec<Vec<f64>> = vec![Vec::new(); estimators.len()];
    let mut failed = 0usize;
    for rep in per_rep {
        match rep {
            Ok(row) => {
                for (dst, v) in losses.iter_mut().zip(row) {
                    dst.push(v);
                }
            }
            Err(_) => failed += 1,
        }
    }
    if failed * 100 > request.replications {
        return Err(RiskError::TooManyFailures {
            failed,
            reps: request.replications,
        });
    }

    let mut digest = request.seed;
    for token in [
        request.n as u64,
        request.replications as u64,
        request.x1_per_rep as u64,
        request.loss.name().len() as u64,
    ] {
        digest ^= token;
        digest = splitmix64(&mut digest);
    }

    let reports: Vec<RiskReport> = estimators
        .iter()
        .zip(&losses)
        .map(|(est, vals)| {
            let (mean_risk, std_error) = mean_and_se(vals);
            RiskReport {
                estimator: est.id(),
                loss: request.loss,
                n: request.n,
                replications: request.replications,
                failed,
                mean_risk,
                std_error,
                seed_digest: digest,
            }
        })
        .collect();

    let base = &losses[0];
    let margins: Vec<PairedMargin> = estimators
        .iter()
        .zip(&losses)
        .skip(1)
        .map(|(est, vals)| {
            let diffs: Vec<f64> = vals.iter().zip(base).map(|(a, b)| a - b).collect();
            let (mean_diff, std_error) = mean_and_se(&diffs);
            PairedMargin {
                estimator: est.id(),
                mean_diff,
                std_error,
            }
        })
        .collect();

    Ok(ComparisonReport { reports, margins })
}

fn run_replication(
    request: &RiskRequest,
    estimators: &[Arc<dyn CurveEstimator>],
    rep: u64,
) -> Result<Vec<f64>, RiskError> {
    let mut rng = substream(request.seed, rep);
    let theta = request.prior.sample(&mut rng);
    let param = ParamValue::new(theta)?;
    let mut pairs = Vec::with_capacity(request.n);
    for _ in 0..request.n {
        let obs = sample_pair(request.model.as_ref(), param, &mut rng)?;
        pairs.push((obs.x1, obs.x2));
    }
    let sample = SampleBatch::from_pairs(&pairs)?;
    let x1s: Vec<f64> = (0..request.x1_per_rep)
        .map(|_| request.model.sample_x1(theta, &mut rng))
        .collect();

    let mut row = Vec::with_capacity(estimators.len());
    for est in estimators {
        let mut acc = CompensatedSum::new();
        for &x1 in &x1s {
            let bundle = est.estimate(&sample, x1)?;
            let loss = scenario_loss(
                request.loss,
                &bundle,
                request.model.as_ref(),
                theta,
                x1,
                &request.settings,
            )?;
            if !loss.is_finite() {
                return Err(RiskError::UndefinedEstimate {
                    id: est.id(),
                    why: format!("non-finite loss at x1 = {x1}"),
                });
            }
            acc.add(loss);
        }
        row.push(acc.value() / request.x1_per_rep as f64);
    }
    Ok(row)
}

/// Risk of a single estimator under the request's scenario.
pub fn estimate_bayes_risk(
    request: &RiskRequest,
    estimator: Arc<dyn CurveEstimator>,
) -> Result<RiskReport, RiskError> {
    let report = compare(request, &[estimator])?;
    Ok(report.reports.into_iter().next().expect("one estimator"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::GammaExpFamily;
    use approx::assert_relative_eq;

    fn settings() -> QuadratureSettings {
        QuadratureSettings::light()
    }

    #[test]
    fn discrete_tv_of_two_coins() {
        let support = Support::Finite(vec![0.0, 1.0]);
        let p = |x: f64| if x == 1.0 { 0.5 } else { 0.5 };
        let q = |x: f64| if x == 1.0 { 0.75 } else { 0.25 };
        let v = loss_sq_tv(&p, &q, &support, &settings()).expect("exact");
        assert_eq!(v, 0.0625);
        let l1 = loss_sq_l1(&p, &q, &support, &settings()).expect("exact");
        assert_eq!(l1, 0.25);
    }

    #[test]
    fn continuous_tv_of_two_exponentials() {
        let support = Support::Interval {
            lo: 0.0,
            hi: f64::INFINITY,
        };
        let p = |x: f64| (-x).exp();
        let q = |x: f64| 2.0 * (-2.0 * x).exp();
        let v = loss_sq_tv(&p, &q, &support, &QuadratureSettings::default()).expect("integrates");
        assert_relative_eq!(v, 0.0625, max_relative = 1e-6);
    }

    #[test]
    fn sup_distance_of_two_exponential_cdfs() {
        let support = Support::Interval {
            lo: 0.0,
            hi: f64::INFINITY,
        };
        let p = |t: f64| if t <= 0.0 { 0.0 } else { -(-t).exp_m1() };
        let q = |t: f64| if t <= 0.0 { 0.0 } else { -(-2.0 * t).exp_m1() };
        let v = loss_sq_linf(&p, &q, &support, &settings()).expect("scans");
        assert_relative_eq!(v, 0.0625, max_relative = 1e-6);
    }

    #[test]
    fn decreasing_cdf_is_rejected() {
        let support = Support::Interval {
            lo: 0.0,
            hi: f64::INFINITY,
        };
        let good = |t: f64| if t <= 0.0 { 0.0 } else { -(-t).exp_m1() };
        let bad = move |t: f64| good(t) * (1.0 - 0.001 * (20.0 * t).sin().max(0.0));
        let err = loss_sq_linf(&bad, &good, &support, &settings()).unwrap_err();
        assert!(matches!(err, RiskError::DecreasingCdf { .. }));
    }

    #[test]
    fn perturbation_zero_reproduces_the_optimum() {
        let f = GammaExpFamily::new(1.0).expect("valid");
        let family = BuiltinFamily::Gamma(f);
        let sample = SampleBatch::from_pairs(&[(2.0, 3.0), (1.0, 0.0)]).expect("valid");
        let bayes = BayesClosedForm::new(family.clone(), settings());
        let pert = PerturbedBayes::new(family, 0.0, settings());
        let a = bayes.estimate(&sample, 1.5).expect("estimates");
        let b = pert.estimate(&sample, 1.5).expect("estimates");
        for x2 in [0.0, 0.5, 1.0, 3.0] {
            assert_eq!((a.density)(x2), (b.density)(x2));
            assert_eq!((a.cdf)(x2), (b.cdf)(x2));
        }
        assert_eq!(a.regression, b.regression);
    }

    #[test]
    fn point_mass_prior_gives_zero_risk_to_the_numeric_optimum() {
        let f = GammaExpFamily::new(1.0).expect("valid");
        let model: Arc<dyn ModelFamily> = Arc::new(f);
        let prior = PriorSpec::point_mass(0.7).expect("valid");
        for loss in LossKind::all() {
            let mut request = RiskRequest::new(Arc::clone(&model), prior.clone(), 2, loss);
            request.replications = 100;
            request.seed = 7;
            let est = Arc::new(BayesNumeric::new(
                Arc::clone(&model),
                prior.clone(),
                settings(),
            ));
            let report = estimate_bayes_risk(&request, est).expect("runs");
            assert!(
                report.mean_risk.abs() < 1e-10,
                "{} risk {}",
                loss.name(),
                report.mean_risk
            );
        }
    }

    #[test]
    fn reports_round_trip_through_lines() {
        let report = RiskReport {
            estimator: "bayes".into(),
            loss: LossKind::SqLinfCdf,
            n: 5,
            replications: 2000,
            failed: 3,
            mean_risk: 0.012345678901234567,
            std_error: 3.2e-4,
            seed_digest: 0xDEADBEEF,
        };
        let line = report.to_line();
        let back = RiskReport::from_line(&line).expect("parses");
        assert_eq!(report, back);
        assert!(RiskReport::from_line("not,a,report").is_err());
    }

    #[test]
    fn results_do_not_depend_on_the_worker_count() {
        let f = GammaExpFamily::new(1.0).expect("valid");
        let family = BuiltinFamily::Gamma(f.clone());
        let model: Arc<dyn ModelFamily> = Arc::new(f.clone());
        let mut request = RiskRequest::new(
            Arc::clone(&model),
            f.prior(),
            3,
            LossKind::SqErrorRegression,
        );
        request.replications = 120;
        request.seed = 42;
        let estimators: Vec<Arc<dyn CurveEstimator>> = vec![
            Arc::new(BayesClosedForm::new(family.clone(), settings())),
            Arc::new(PerturbedBayes::new(family, 0.3, settings())),
        ];
        let mut lines = Vec::new();
        for workers in [1usize, 2, 7] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .expect("pool");
            let report = pool.install(|| compare(&request, &estimators).expect("runs"));
            let text: Vec<String> = report.reports.iter().map(RiskReport::to_line).collect();
            lines.push(text.join("\n"));
        }
        assert_eq!(lines[0], lines[1]);
        assert_eq!(lines[1], lines[2]);
    }

    #[test]
    fn the_optimum_beats_a_perturbed_copy_of_itself() {
        let f = GammaExpFamily::new(1.0).expect("valid");
        let family = BuiltinFamily::Gamma(f.clone());
        let model: Arc<dyn ModelFamily> = Arc::new(f.clone());
        let mut request = RiskRequest::new(Arc::clone(&model), f.prior(), 3, LossKind::SqL1Density);
        request.replications = 200;
        request.seed = 11;
        let estimators: Vec<Arc<dyn CurveEstimator>> = vec![
            Arc::new(BayesClosedForm::new(family.clone(), settings())),
            Arc::new(PerturbedBayes::new(family, 0.4, settings())),
        ];
        let report = compare(&request, &estimators).expect("runs");
        let margin = &report.margins[0];
        assert!(
            margin.mean_diff > 3.0 * margin.std_error,
            "diff {} se {}",
            margin.mean_diff,
            margin.std_error
        );
    }

    #[test]
    fn standard_error_shrinks_like_the_square_root_of_the_budget() {
        let f = GammaExpFamily::new(1.0).expect("valid");
        let model: Arc<dyn ModelFamily> = Arc::new(f.clone());
        let run = |reps: usize| {
            let mut request =
                RiskRequest::new(Arc::clone(&model), f.prior(), 2, LossKind::SqLinfCdf);
            request.replications = reps;
            request.seed = 5;
            let est = Arc::new(BayesClosedForm::new(
                BuiltinFamily::Gamma(f.clone()),
                settings(),
            ));
            estimate_bayes_risk(&request, est).expect("runs").std_error
        };
        let se_small = run(400);
        let se_big = run(1600);
        let ratio = se_big / se_small;
        assert!(
            (0.4..=0.6).contains(&ratio),
            "ratio {ratio} outside [0.4, 0.6]"
        );
    }

    #[test]
    fn estimator_names_parse() {
        let f = GammaExpFamily::new(1.0).expect("valid");
        let family = BuiltinFamily::Gamma(f.clone());
        let prior = f.prior();
        for name in [
            "bayes",
            "bayes_numeric",
            "plug_in_posterior_mean",
            "plug_in_mle",
            "prior_predictive",
            "perturbed_bayes(0.25)",
        ] {
            let est =
                estimator_from_name(name, &family, &prior, &settings()).expect("known name");
            assert_eq!(est.id(), name);
        }
        assert!(estimator_from_name("bogus", &family, &prior, &settings()).is_err());
        assert!(estimator_from_name("perturbed_bayes(2.0)", &family, &prior, &settings()).is_err());
    }
}
