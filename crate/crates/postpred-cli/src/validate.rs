//! The `validate` subcommand. Finite families run the exact enumeration
//! suite: factorization identities, the predictive marginal identity and
//! exact risk optimality against systematic perturbations. Families with
//! closed forms run the closed-form versus quadrature agreement suite plus
//! density normalization and CDF shape checks on seeded random cases.

use postpred::oracle::{systematic_perturbations, OracleBayes};
use postpred::stream::substream;
use postpred::{
    build_joint_table, check_identities, check_predictive_marginal_identity, estimator_from_name,
    exact_bayes_risk, integrate::line_integral, BuiltinFamily, LossKind, QuadratureSettings,
    SampleBatch, Support,
};

use crate::config::{Resolved, RunConfig};
use crate::tables::{emit_tables, fmt_sig, Table};
use crate::AppError;

pub const IDENTITY_TOL: f64 = 1e-12;
pub const EXACT_AGREEMENT_TOL: f64 = 1e-12;
pub const NUMERIC_AGREEMENT_TOL: f64 = 1e-6;
pub const NORMALIZATION_TOL: f64 = 1e-6;
pub const MONOTONICITY_TOL: f64 = 1e-9;
pub const OPTIMALITY_TOL: f64 = 1e-15;

const IDENTITY_NAMES: [&str; 6] = [
    "prior_weight_split",
    "joint_mass_factorization",
    "evidence_normalization",
    "posterior_reweighting",
    "conditional_slice_consistency",
    "engine_joint_agreement",
];

/// One validation result: the statistic and the bound it must not exceed.
struct CheckRow {
    name: String,
    value: f64,
    tolerance: f64,
}

pub fn run(cfg: &RunConfig) -> Result<(), AppError> {
    let r = cfg.resolve(QuadratureSettings::default())?;
    if !r.canonical {
        return Err(AppError::Config(
            "validation is defined against the family's canonical prior; drop --prior".into(),
        ));
    }
    let seed = cfg.seed.unwrap_or(1);
    let n = cfg.n.unwrap_or(2);

    let rows = match &r.family {
        BuiltinFamily::Finite(_) => finite_checks(&r, n, seed)?,
        _ => continuous_checks(&r, n, seed)?,
    };

    let mut table = Table::new("validation", "check,value,tolerance,status");
    let mut failures = Vec::new();
    for row in &rows {
        let ok = row.value.is_finite() && row.value <= row.tolerance;
        if !ok {
            failures.push(row.name.clone());
        }
        table.rows.push(format!(
            "{},{},{},{}",
            row.name,
            fmt_sig(row.value),
            fmt_sig(row.tolerance),
            if ok { "pass" } else { "fail" }
        ));
    }
    emit_tables(&[(table, "")], cfg.out.as_deref())?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(AppError::Tolerance(format!(
            "validation failed: {}",
            failures.join(", ")
        )))
    }
}

fn finite_checks(r: &Resolved, n: usize, seed: u64) -> Result<Vec<CheckRow>, AppError> {
    let BuiltinFamily::Finite(family) = &r.family else {
        unreachable!("caller matched the finite variant");
    };
    let table = build_joint_table(family, n)?;
    let mut rows = Vec::new();

    let identities = check_identities(&table, &r.settings)?;
    for (name, value) in IDENTITY_NAMES.iter().zip(identities.violations) {
        rows.push(CheckRow {
            name: (*name).to_string(),
            value,
            tolerance: IDENTITY_TOL,
        });
    }
    rows.push(CheckRow {
        name: "predictive_marginal_identity".to_string(),
        value: check_predictive_marginal_identity(&table),
        tolerance: IDENTITY_TOL,
    });

    let competitors = systematic_perturbations(seed);
    for loss in LossKind::all() {
        let bayes_risk = exact_bayes_risk(&table, &OracleBayes, loss);
        let worst_excess = competitors
            .iter()
            .map(|c| bayes_risk - exact_bayes_risk(&table, c, loss))
            .fold(f64::NEG_INFINITY, f64::max);
        rows.push(CheckRow {
            name: format!("optimality_excess_{}", loss.name()),
            value: worst_excess,
            tolerance: OPTIMALITY_TOL,
        });
    }
    Ok(rows)
}

fn scaled_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn continuous_checks(r: &Resolved, n: usize, seed: u64) -> Result<Vec<CheckRow>, AppError> {
    let model = r.family.model();
    let closed = estimator_from_name("bayes", &r.family, &r.prior, &r.settings)?;
    let numeric = estimator_from_name("bayes_numeric", &r.family, &r.prior, &r.settings)?;
    let agreement_tol = match &r.family {
        BuiltinFamily::Coin(_) => EXACT_AGREEMENT_TOL,
        _ => NUMERIC_AGREEMENT_TOL,
    };
    let (_, s2) = model.obs_support();

    let mut max_regression = 0.0_f64;
    let mut max_density = 0.0_f64;
    let mut max_cdf = 0.0_f64;
    let mut max_normalization = 0.0_f64;
    let mut max_drop = 0.0_f64;
    let mut max_lower = 0.0_f64;
    let mut max_upper = 0.0_f64;

    for case in 0..6u64 {
        let mut rng = substream(seed, case);
        let theta = r.prior.sample(&mut rng);
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let x1 = model.sample_x1(theta, &mut rng);
                (x1, model.sample_x2_given(theta, x1, &mut rng))
            })
            .collect();
        let sample = SampleBatch::from_pairs(&pairs)?;
        let x1 = model.sample_x1(theta, &mut rng);
        let t_draws: Vec<f64> = (0..4)
            .map(|_| model.sample_x2_given(theta, x1, &mut rng))
            .collect();

        let cb = closed.estimate(&sample, x1)?;
        let nb = numeric.estimate(&sample, x1)?;
        max_regression = max_regression.max(scaled_diff(cb.regression, nb.regression));
        for &t in &t_draws {
            max_density = max_density.max(scaled_diff((cb.density)(t), (nb.density)(t)));
            max_cdf = max_cdf.max(scaled_diff((cb.cdf)(t), (nb.cdf)(t)));
        }

        match &s2 {
            Support::Finite(points) => {
                for bundle in [&cb, &nb] {
                    let total: f64 = points.iter().map(|&p| (bundle.density)(p)).sum();
                    max_normalization = max_normalization.max((total - 1.0).abs());
                }
            }
            Support::Interval { lo, hi } => {
                // The numeric bundle's density runs a parameter quadrature
                // per call, so the outer integral uses the light profile;
                // its tolerance is still an order under the check's.
                let outer = QuadratureSettings::light();
                for bundle in [&cb, &nb] {
                    let total = line_integral(|t| (bundle.density)(t), (*lo, *hi), &outer)?;
                    max_normalization = max_normalization.max((total.value - 1.0).abs());
                }
            }
        }

        let (ladder, far_lo, far_hi) = cdf_probe_points(&s2, &t_draws);
        for bundle in [&cb, &nb] {
            let mut previous = f64::NEG_INFINITY;
            for &t in &ladder {
                let value = (bundle.cdf)(t);
                if previous.is_finite() {
                    max_drop = max_drop.max(previous - value);
                }
                previous = previous.max(value);
            }
        }
        max_lower = max_lower.max(tail_deviation(&[&cb, &nb], far_lo, Tail::Lower));
        max_upper = max_upper.max(tail_deviation(&[&cb, &nb], far_hi, Tail::Upper));
    }

    Ok(vec![
        CheckRow {
            name: "engine_agreement_regression".to_string(),
            value: max_regression,
            tolerance: agreement_tol,
        },
        CheckRow {
            name: "engine_agreement_density".to_string(),
            value: max_density,
            tolerance: agreement_tol,
        },
        CheckRow {
            name: "engine_agreement_cdf".to_string(),
            value: max_cdf,
            tolerance: agreement_tol,
        },
        CheckRow {
            name: "density_normalization".to_string(),
            value: max_normalization,
            tolerance: NORMALIZATION_TOL,
        },
        CheckRow {
            name: "cdf_monotonicity".to_string(),
            value: max_drop,
            tolerance: MONOTONICITY_TOL,
        },
        CheckRow {
            name: "cdf_lower_limit".to_string(),
            value: max_lower,
            tolerance: NORMALIZATION_TOL,
        },
        CheckRow {
            name: "cdf_upper_limit".to_string(),
            value: max_upper,
            tolerance: NORMALIZATION_TOL,
        },
    ])
}

enum Tail {
    Lower,
    Upper,
}

/// Worst deviation of the CDFs from their limit (0 below, 1 above),
/// probing outward by doubling the offset from `start` until every bundle
/// is within a tenth of the check tolerance or the doubling budget runs
/// out. A tail too heavy to ever approach its limit keeps its deviation.
fn tail_deviation(bundles: &[&postpred::CurveBundle], start: f64, tail: Tail) -> f64 {
    let deviation_at = |t: f64| -> f64 {
        bundles
            .iter()
            .map(|b| {
                let value = (b.cdf)(t);
                if !value.is_finite() {
                    return f64::INFINITY;
                }
                match tail {
                    Tail::Lower => value.abs(),
                    Tail::Upper => (1.0 - value).abs(),
                }
            })
            .fold(0.0, f64::max)
    };
    let mut offset = start.abs().max(1.0);
    let mut best = deviation_at(start);
    for _ in 0..48 {
        if best <= NORMALIZATION_TOL / 10.0 {
            break;
        }
        let t = match tail {
            Tail::Lower => start - offset,
            Tail::Upper => start + offset,
        };
        best = best.min(deviation_at(t));
        offset *= 2.0;
    }
    best
}

/// Probe points for CDF shape checks: an increasing ladder through the
/// relevant range plus starting points for the limit probes.
fn cdf_probe_points(s2: &Support, t_draws: &[f64]) -> (Vec<f64>, f64, f64) {
    match s2 {
        Support::Finite(points) => {
            let first = points.first().copied().unwrap_or(0.0);
            let last = points.last().copied().unwrap_or(0.0);
            (points.clone(), first - 1.0, last)
        }
        Support::Interval { lo, hi } => {
            let tmin = t_draws.iter().copied().fold(f64::INFINITY, f64::min);
            let tmax = t_draws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let spread = (tmax - tmin).max(1.0);
            let closed_lo = if *lo == f64::MIN_POSITIVE { 0.0 } else { *lo };
            let ladder_lo = if closed_lo.is_finite() {
                closed_lo
            } else {
                tmin - 8.0 * spread
            };
            let ladder_hi = if hi.is_finite() {
                *hi
            } else {
                tmax + 8.0 * spread
            };
            let count = 9;
            let step = (ladder_hi - ladder_lo) / (count - 1) as f64;
            let ladder = (0..count).map(|i| ladder_lo + step * i as f64).collect();
            (ladder, ladder_lo, ladder_hi)
        }
    }
}
