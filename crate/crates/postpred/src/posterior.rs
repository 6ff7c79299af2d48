//! The reweighted parameter distribution after observing a sample: its
//! density with respect to the prior is the normalized joint sample
//! density, `r*(theta) = K f(theta | sample)` with
//! `K = 1 / integral of f dQ`. Every estimated object downstream is an
//! expectation against this distribution.
//!
//! Finite priors are reweighted exactly. Continuous priors go through
//! composite quadrature in joint log space: the exponent
//! `g(theta) = log f + log q` is scanned and peak-refined, the integration
//! domain starts at the prior's quantile truncation and grows outward
//! while the exponent still rises at a boundary (so a sample far from the
//! prior bulk is not silently cut off), and panel breakpoints are pinned
//! at `peak +- 6` curvature standard deviations.

use std::sync::Arc;

use thiserror::Error;

use crate::integrate::{
    golden_section_max, integrate_breakpoints, CompensatedSum, IntegralResult, QuadError,
    QuadratureSettings,
};
use crate::model::{log_joint_sample_density, DomainError, ModelFamily, SampleBatch, Support};
use crate::prior::PriorSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PosteriorError {
    #[error("sample has zero density under every parameter the prior supports")]
    ImpossibleSample,
    #[error("prior puts mass at theta = {theta}, outside the parameter support")]
    SupportMismatch { theta: f64 },
    #[error("continuous prior on a finite parameter space")]
    ContinuousPriorOnFiniteParams,
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

const SCAN_POINTS: usize = 129;
const EXTENSION_ROUNDS: usize = 48;
const PEAK_SD_SPAN: f64 = 6.0;

#[derive(Clone)]
enum Weights {
    Finite {
        points: Vec<f64>,
        posterior: Vec<f64>,
    },
    Continuous {
        breaks: Vec<f64>,
    },
}

#[derive(Clone)]
pub struct Posterior {
    model: Arc<dyn ModelFamily>,
    prior: PriorSpec,
    sample: SampleBatch,
    settings: QuadratureSettings,
    log_normalizer: f64,
    /// Stabilizer subtracted inside the evidence integral; the evidence
    /// itself is `exp(log_stab) * evidence.value`.
    log_stab: f64,
    evidence: IntegralResult,
    weights: Weights,
}

/// Lower interval bounds use `f64::MIN_POSITIVE` to mean "open at 0";
/// translate that back when comparing supports.
fn open_adjusted_lo(lo: f64) -> f64 {
    if lo == f64::MIN_POSITIVE {
        0.0
    } else {
        lo
    }
}

fn check_support(model: &dyn ModelFamily, prior: &PriorSpec) -> Result<(), PosteriorError> {
    let param = model.param_support();
    match (&param, prior.support()) {
        (Support::Interval { lo, hi }, Support::Interval { lo: plo, hi: phi }) => {
            if plo < open_adjusted_lo(*lo) {
                return Err(PosteriorError::SupportMismatch { theta: plo });
            }
            if phi > *hi {
                return Err(PosteriorError::SupportMismatch { theta: phi });
            }
            Ok(())
        }
        (Support::Interval { .. }, Support::Finite(points)) => {
            for p in points {
                if !param.contains(p) {
                    return Err(PosteriorError::SupportMismatch { theta: p });
                }
            }
            Ok(())
        }
        (Support::Finite(params), Support::Finite(points)) => {
            for p in points {
                if !params.iter().any(|v| *v == p) {
                    return Err(PosteriorError::SupportMismatch { theta: p });
                }
            }
            Ok(())
        }
        (Support::Finite(_), _) => Err(PosteriorError::ContinuousPriorOnFiniteParams),
    }
}

pub fn build_posterior(
    model: Arc<dyn ModelFamily>,
    prior: &PriorSpec,
    sample: &SampleBatch,
    settings: &QuadratureSettings,
) -> Result<Posterior, PosteriorError> {
    settings.validate()?;
    sample.validate_for(model.as_ref())?;
    check_support(model.as_ref(), prior)?;

    if let PriorSpec::Finite { points, weights } = prior {
        return build_finite(model, prior.clone(), points, weights, sample, settings);
    }
    build_continuous(model, prior.clone(), sample, settings)
}

fn build_finite(
    model: Arc<dyn ModelFamily>,
    prior: PriorSpec,
    points: &[f64],
    prior_weights: &[f64],
    sample: &SampleBatch,
    settings: &QuadratureSettings,
) -> Result<Posterior, PosteriorError> {
    if sample.is_empty() {
        return Ok(Posterior {
            model,
            prior,
            sample: sample.clone(),
            settings: settings.clone(),
            log_normalizer: 0.0,
            log_stab: 0.0,
            evidence: IntegralResult::exact(1.0),
            weights: Weights::Finite {
                points: points.to_vec(),
                posterior: prior_weights.to_vec(),
            },
        });
    }

    let log_fs: Vec<f64> = points
        .iter()
        .map(|&t| log_joint_sample_density(model.as_ref(), t, sample))
        .collect();
    let mut stab = f64::NEG_INFINITY;
    for (lf, w) in log_fs.iter().zip(prior_weights) {
        if *w > 0.0 && *lf > stab {
            stab = *lf;
        }
    }
    if !stab.is_finite() {
        return Err(PosteriorError::ImpossibleSample);
    }
    let mut total = CompensatedSum::new();
    let terms: Vec<f64> = log_fs
        .iter()
        .zip(prior_weights)
        .map(|(lf, w)| w * (lf - stab).exp())
        .collect();
    for t in &terms {
        total.add(*t);
    }
    let e = total.value();
    if !(e.is_finite() && e > 0.0) {
        return Err(PosteriorError::ImpossibleSample);
    }
    Ok(Posterior {
        model,
        prior,
        sample: sample.clone(),
        settings: settings.clone(),
        log_normalizer: -(stab + e.ln()),
        log_stab: stab,
        evidence: IntegralResult::exact(e),
        weights: Weights::Finite {
            points: points.to_vec(),
            posterior: terms.iter().map(|t| t / e).collect(),
        },
    })
}

fn build_continuous(
    model: Arc<dyn ModelFamily>,
    prior: PriorSpec,
    sample: &SampleBatch,
    settings: &QuadratureSettings,
) -> Result<Posterior, PosteriorError> {
    let (t_lo, t_hi) = prior
        .truncated_interval(settings.truncation_mass)
        .expect("continuous prior has a truncation interval");

    if sample.is_empty() {
        return Ok(Posterior {
            model,
            prior,
            sample: sample.clone(),
            settings: settings.clone(),
            log_normalizer: 0.0,
            log_stab: 0.0,
            evidence: IntegralResult::exact(1.0),
            weights: Weights::Continuous {
                breaks: vec![t_lo, t_hi],
            },
        });
    }

    let log_f = |theta: f64| log_joint_sample_density(model.as_ref(), theta, sample);
    let g = |theta: f64| log_f(theta) + prior.log_density(theta);

    let (param_lo, param_hi) = match model.param_support() {
        Support::Interval { lo, hi } => (open_adjusted_lo(lo), hi),
        Support::Finite(_) => unreachable!("finite parameter spaces take the finite path"),
    };

    // Scan the exponent; while its maximum sits on a boundary that can
    // still move, widen the domain so a posterior concentrated outside
    // the prior's quantile window is not cut off.
    let mut lo = t_lo;
    let mut hi = t_hi;
    let mut best_i = 0usize;
    let mut best_g = f64::NEG_INFINITY;
    for _ in 0..EXTENSION_ROUNDS {
        best_i = 0;
        best_g = f64::NEG_INFINITY;
        let h = (hi - lo) / SCAN_POINTS as f64;
        for i in 0..SCAN_POINTS {
            let t = lo + (i as f64 + 0.5) * h;
            let gv = g(t);
            if gv > best_g {
                best_g = gv;
                best_i = i;
            }
        }
        if best_i == 0 && lo > param_lo {
            lo = (lo - (hi - lo).max(1.0)).max(param_lo);
        } else if best_i == SCAN_POINTS - 1 && hi < param_hi {
            hi += (hi - lo).max(1.0);
        } else {
            break;
        }
    }
    if best_g == f64::NEG_INFINITY {
        return Err(PosteriorError::ImpossibleSample);
    }

    let h = (hi - lo) / SCAN_POINTS as f64;
    let t_best = lo + (best_i as f64 + 0.5) * h;
    let (peak, _) = golden_section_max(&g, (t_best - h).max(lo), (t_best + h).min(hi), 80);

    let span = hi - lo;
    let mut extras: Vec<f64> = Vec::new();
    let hc = span * 1e-5;
    if peak - hc > lo && peak + hc < hi {
        let second_diff = g(peak - hc) - 2.0 * g(peak) + g(peak + hc);
        let curvature = second_diff / (hc * hc);
        if curvature.is_finite() && curvature < 0.0 {
            let sd = (-1.0 / curvature).sqrt();
            extras.push(peak - PEAK_SD_SPAN * sd);
            extras.push(peak);
            extras.push(peak + PEAK_SD_SPAN * sd);
        }
    }
    extras.retain(|b| b.is_finite() && *b > lo && *b < hi);
    extras.sort_by(f64::total_cmp);
    let mut breaks = vec![lo];
    for b in extras {
        if b - breaks.last().expect("nonempty") > 1e-12 * span {
            breaks.push(b);
        }
    }
    if hi - breaks.last().expect("nonempty") > 1e-12 * span {
        breaks.push(hi);
    } else {
        *breaks.last_mut().expect("nonempty") = hi;
    }

    let stab = best_g.max(g(peak));
    let integrand = |theta: f64| (g(theta) - stab).exp();
    let evidence = integrate_breakpoints(integrand, &breaks, settings)?;
    if !(evidence.value.is_finite() && evidence.value > 0.0) {
        return Err(PosteriorError::ImpossibleSample);
    }
    let log_normalizer = -(stab + evidence.value.ln());

    Ok(Posterior {
        model,
        prior,
        sample: sample.clone(),
        settings: settings.clone(),
        log_normalizer,
        log_stab: stab,
        evidence,
        weights: Weights::Continuous { breaks },
    })
}

impl std::fmt::Debug for Posterior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Posterior")
            .field("family", &self.model.name())
            .field("n", &self.sample.len())
            .field("log_normalizer", &self.log_normalizer)
            .finish_non_exhaustive()
    }
}

impl Posterior {
    pub fn model(&self) -> &dyn ModelFamily {
        self.model.as_ref()
    }

    pub fn model_arc(&self) -> Arc<dyn ModelFamily> {
        Arc::clone(&self.model)
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn sample(&self) -> &SampleBatch {
        &self.sample
    }

    pub fn settings(&self) -> &QuadratureSettings {
        &self.settings
    }

    /// `log K = -log integral of f dQ`; exactly 0 for an empty sample.
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    /// Convergence record of the evidence integral (exact for finite
    /// priors). The stored value is stabilized by `exp(-log_stab)`.
    pub fn evidence(&self) -> &IntegralResult {
        &self.evidence
    }

    pub fn log_stab(&self) -> f64 {
        self.log_stab
    }

    /// Density of the reweighted distribution with respect to the prior.
    pub fn density(&self, theta: f64) -> f64 {
        (self.log_normalizer + log_joint_sample_density(self.model.as_ref(), theta, &self.sample))
            .exp()
    }

    /// Parameter points and their reweighted masses, when the prior is
    /// finite.
    pub fn finite_weights(&self) -> Option<(&[f64], &[f64])> {
        match &self.weights {
            Weights::Finite { points, posterior } => Some((points, posterior)),
            Weights::Continuous { .. } => None,
        }
    }

    /// Expectation of `phi` under the reweighted distribution: an exact
    /// weighted sum for finite priors, composite quadrature otherwise.
    pub fn expectation<F: Fn(f64) -> f64>(&self, phi: F) -> Result<IntegralResult, PosteriorError> {
        match &self.weights {
            Weights::Finite { points, posterior } => {
                let mut acc = CompensatedSum::new();
                for (p, w) in points.iter().zip(posterior) {
                    if *w == 0.0 {
                        continue;
                    }
                    let v = phi(*p);
                    if !v.is_finite() {
                        return Err(QuadError::NonFiniteIntegrand { at: *p }.into());
                    }
                    acc.add(w * v);
                }
                Ok(IntegralResult::exact(acc.value()))
            }
            Weights::Continuous { breaks } => {
                let model = self.model.as_ref();
                let inv_e = 1.0 / self.evidence.value;
                let f = |theta: f64| {
                    let g = log_joint_sample_density(model, theta, &self.sample)
                        + self.prior.log_density(theta);
                    phi(theta) * (g - self.log_stab).exp() * inv_e
                };
                Ok(integrate_breakpoints(f, breaks, &self.settings)?)
            }
        }
    }

    pub fn mean(&self) -> Result<f64, PosteriorError> {
        Ok(self.expectation(|t| t)?.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{
        two_point_family, BivariateNormalFamily, CoinPairFamily, GammaExpFamily,
    };
    use approx::assert_relative_eq;

    fn settings() -> QuadratureSettings {
        QuadratureSettings::default()
    }

    fn batch(pairs: &[(f64, f64)]) -> SampleBatch {
        SampleBatch::from_pairs(pairs).expect("valid")
    }

    #[test]
    fn coin_evidence_is_the_beta_integral() {
        // Sample ((1,1),(0,0)) has joint density theta^3 (1-theta) whose
        // integral over the uniform prior is B(4,2) = 1/20.
        let post = build_posterior(
            Arc::new(CoinPairFamily::new()),
            &PriorSpec::uniform01(),
            &batch(&[(1.0, 1.0), (0.0, 0.0)]),
            &settings(),
        )
        .expect("builds");
        assert_relative_eq!(post.log_normalizer(), 20.0f64.ln(), max_relative = 1e-10);
        assert_relative_eq!(post.density(0.5), 1.25, max_relative = 1e-9);
        assert!(post.evidence().converged);
    }

    #[test]
    fn empty_sample_is_the_identity_reweighting() {
        let gamma = GammaExpFamily::new(1.0).expect("valid");
        let post = build_posterior(
            Arc::new(gamma.clone()),
            &gamma.prior(),
            &SampleBatch::empty(),
            &settings(),
        )
        .expect("builds");
        assert_eq!(post.log_normalizer(), 0.0);
        assert_eq!(post.density(0.7), 1.0);
        assert_relative_eq!(
            post.mean().expect("integrates"),
            1.0,
            max_relative = 1e-8
        );
    }

    #[test]
    fn point_mass_prior_is_untouched() {
        let post = build_posterior(
            Arc::new(CoinPairFamily::new()),
            &PriorSpec::point_mass(0.8).expect("valid"),
            &batch(&[(1.0, 1.0)]),
            &settings(),
        )
        .expect("builds");
        assert_relative_eq!(post.density(0.8), 1.0, max_relative = 1e-12);
        assert_eq!(post.mean().expect("exact"), 0.8);
        let (points, weights) = post.finite_weights().expect("finite");
        assert_eq!(points, &[0.8]);
        assert_eq!(weights, &[1.0]);
    }

    #[test]
    fn gamma_posterior_matches_the_conjugate_form() {
        // Prior G(1, 1), sample ((2,3),(1,0)): the reweighted distribution
        // is Gamma(shape 5, rate 10).
        let gamma = GammaExpFamily::new(1.0).expect("valid");
        let post = build_posterior(
            Arc::new(gamma.clone()),
            &gamma.prior(),
            &batch(&[(2.0, 3.0), (1.0, 0.0)]),
            &settings(),
        )
        .expect("builds");
        assert_relative_eq!(
            post.expectation(|_| 1.0).expect("integrates").value,
            1.0,
            max_relative = 1e-8
        );
        assert_relative_eq!(post.mean().expect("integrates"), 0.5, max_relative = 1e-8);
        assert_relative_eq!(
            post.expectation(|t| t * t).expect("integrates").value,
            0.3,
            max_relative = 1e-7
        );
    }

    #[test]
    fn normal_posterior_matches_the_conjugate_form() {
        let f = BivariateNormalFamily::new(1.0, 0.0, 0.0, 1.0).expect("valid");
        let post = build_posterior(
            Arc::new(f.clone()),
            &f.prior(),
            &batch(&[(1.0, 2.0)]),
            &settings(),
        )
        .expect("builds");
        let mean = post.mean().expect("integrates");
        let second = post.expectation(|t| t * t).expect("integrates").value;
        assert_relative_eq!(mean, 1.0, max_relative = 1e-8);
        assert_relative_eq!(second - mean * mean, 1.0 / 3.0, max_relative = 1e-6);
    }

    #[test]
    fn finite_prior_follows_the_bayes_rule_directly() {
        let gamma = GammaExpFamily::new(1.0).expect("valid");
        let prior =
            PriorSpec::finite(vec![0.5, 1.5], vec![0.3, 0.7]).expect("valid");
        let post = build_posterior(
            Arc::new(gamma),
            &prior,
            &batch(&[(1.0, 1.0)]),
            &settings(),
        )
        .expect("builds");
        // f(theta) = theta^2 * 1 * exp(-2 theta).
        let f = |t: f64| t * t * (-2.0 * t).exp();
        let z = 0.3 * f(0.5) + 0.7 * f(1.5);
        let (points, weights) = post.finite_weights().expect("finite");
        assert_eq!(points, &[0.5, 1.5]);
        assert!((weights[0] - 0.3 * f(0.5) / z).abs() < 1e-12);
        assert!((weights[1] - 0.7 * f(1.5) / z).abs() < 1e-12);
        assert_relative_eq!(post.log_normalizer(), -z.ln(), max_relative = 1e-12);
        let mean = post.mean().expect("exact");
        assert!((mean - (0.5 * weights[0] + 1.5 * weights[1])).abs() < 1e-14);
    }

    #[test]
    fn impossible_samples_are_rejected() {
        let table = two_point_family();
        let err = build_posterior(
            Arc::new(table),
            &PriorSpec::point_mass(0.0).expect("valid"),
            &batch(&[(1.0, 1.0)]),
            &settings(),
        )
        .unwrap_err();
        assert_eq!(err, PosteriorError::ImpossibleSample);
    }

    #[test]
    fn support_mismatches_are_rejected() {
        let gamma = GammaExpFamily::new(1.0).expect("valid");
        let err = build_posterior(
            Arc::new(gamma.clone()),
            &PriorSpec::normal(0.0, 1.0).expect("valid"),
            &SampleBatch::empty(),
            &settings(),
        )
        .unwrap_err();
        assert!(matches!(err, PosteriorError::SupportMismatch { .. }));

        let err = build_posterior(
            Arc::new(CoinPairFamily::new()),
            &PriorSpec::gamma(1.0, 1.0).expect("valid"),
            &SampleBatch::empty(),
            &settings(),
        )
        .unwrap_err();
        assert!(matches!(err, PosteriorError::SupportMismatch { .. }));

        let err = build_posterior(
            Arc::new(two_point_family()),
            &PriorSpec::uniform01(),
            &SampleBatch::empty(),
            &settings(),
        )
        .unwrap_err();
        assert_eq!(err, PosteriorError::ContinuousPriorOnFiniteParams);

        let err = build_posterior(
            Arc::new(two_point_family()),
            &PriorSpec::finite(vec![0.0, 0.5], vec![0.5, 0.5]).expect("valid"),
            &SampleBatch::empty(),
            &settings(),
        )
        .unwrap_err();
        assert_eq!(err, PosteriorError::SupportMismatch { theta: 0.5 });
    }

    #[test]
    fn sequential_updating_is_consistent_for_the_gamma_family() {
        let gamma = GammaExpFamily::new(1.0).expect("valid");
        let model: Arc<dyn ModelFamily> = Arc::new(gamma.clone());
        let full = build_posterior(
            Arc::clone(&model),
            &gamma.prior(),
            &batch(&[(2.0, 3.0), (1.0, 0.0)]),
            &settings(),
        )
        .expect("builds");

        // After (2,3) the reweighted distribution is Gamma(3, rate 9).
        let staged_prior = PriorSpec::gamma(3.0, 1.0 / 9.0).expect("valid");
        let staged = build_posterior(
            Arc::clone(&model),
            &staged_prior,
            &batch(&[(1.0, 0.0)]),
            &settings(),
        )
        .expect("builds");

        assert_relative_eq!(
            full.mean().expect("integrates"),
            staged.mean().expect("integrates"),
            max_relative = 1e-8
        );
        for theta in [0.3, 0.5, 0.9] {
            let full_lebesgue = full.density(theta) * gamma.prior().density(theta);
            let staged_lebesgue = staged.density(theta) * staged_prior.density(theta);
            assert_relative_eq!(full_lebesgue, staged_lebesgue, max_relative = 1e-7);
        }
    }

    #[test]
    fn sequential_updating_is_consistent_for_finite_priors() {
        let table = Arc::new(two_point_family());
        let prior = table.prior();
        let full = build_posterior(
            Arc::clone(&table) as Arc<dyn ModelFamily>,
            &prior,
            &batch(&[(0.0, 0.0), (0.0, 0.0)]),
            &settings(),
        )
        .expect("builds");
        let first = build_posterior(
            Arc::clone(&table) as Arc<dyn ModelFamily>,
            &prior,
            &batch(&[(0.0, 0.0)]),
            &settings(),
        )
        .expect("builds");
        let (pts, w1) = first.finite_weights().expect("finite");
        let staged_prior = PriorSpec::finite(pts.to_vec(), w1.to_vec()).expect("valid");
        let staged = build_posterior(
            Arc::clone(&table) as Arc<dyn ModelFamily>,
            &staged_prior,
            &batch(&[(0.0, 0.0)]),
            &settings(),
        )
        .expect("builds");
        let (_, wf) = full.finite_weights().expect("finite");
        let (_, ws) = staged.finite_weights().expect("finite");
        for (a, b) in wf.iter().zip(ws) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn domain_extends_when_the_sample_conflicts_with_the_prior() {
        // Under N(0,1) the quantile window ends near 7, but the sample
        // (100, 100) pushes the reweighted mass to B1/(2 A1) = 200/3.
        let f = BivariateNormalFamily::new(1.0, 0.0, 0.0, 1.0).expect("valid");
        let post = build_posterior(
            Arc::new(f.clone()),
            &f.prior(),
            &batch(&[(100.0, 100.0)]),
            &settings(),
        )
        .expect("builds");
        assert_relative_eq!(
            post.mean().expect("integrates"),
            200.0 / 3.0,
            max_relative = 1e-8
        );
        assert_relative_eq!(
            post.expectation(|_| 1.0).expect("integrates").value,
            1.0,
            max_relative = 1e-8
        );
    }
}
