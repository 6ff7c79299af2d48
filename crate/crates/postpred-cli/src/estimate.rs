//! The `estimate` subcommand: evaluate the estimated regression curve, and
//! optionally the conditional density and CDF, on grids, with an optional
//! closed-form versus quadrature cross-check.

use postpred::{
    estimator_from_name, BuiltinFamily, CurveBundle, CurveEstimator, QuadratureSettings,
    SampleBatch,
};
use std::sync::Arc;

use crate::config::{Engine, RunConfig};
use crate::tables::{emit_tables, fmt_sig, read_samples, Table};
use crate::AppError;

/// Largest scaled difference tolerated between the two engines.
pub const ENGINE_AGREEMENT_TOL: f64 = 1e-4;
/// Largest decrease tolerated in an emitted CDF column before it is an error;
/// smaller dips are monotonized away.
pub const CDF_DIP_TOL: f64 = 1e-9;

/// Picks the backend: an explicit request is honored when available, and
/// the default cross-checks both engines whenever closed forms apply.
pub fn choose_engine(
    requested: Option<Engine>,
    family: &BuiltinFamily,
    canonical: bool,
) -> Result<Engine, AppError> {
    let closed_ok = family.has_closed_forms() && canonical;
    match requested {
        Some(Engine::Numeric) => Ok(Engine::Numeric),
        Some(engine) => {
            if !family.has_closed_forms() {
                return Err(AppError::Config(format!(
                    "the {} family has no closed-form backend; use --engine numeric",
                    family.name()
                )));
            }
            if !canonical {
                return Err(AppError::Config(
                    "the closed-form backend is derived under the canonical prior; \
                     use --engine numeric or drop --prior"
                        .into(),
                ));
            }
            Ok(engine)
        }
        None => Ok(if closed_ok { Engine::Both } else { Engine::Numeric }),
    }
}

fn scaled_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

struct DiscrepancyTracker {
    max: f64,
    location: String,
    points: usize,
}

impl DiscrepancyTracker {
    fn new() -> Self {
        DiscrepancyTracker {
            max: 0.0,
            location: String::new(),
            points: 0,
        }
    }

    fn record(&mut self, a: f64, b: f64, location: impl Fn() -> String) {
        self.points += 1;
        let d = scaled_diff(a, b);
        if d > self.max || !d.is_finite() {
            self.max = d;
            self.location = location();
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<(), AppError> {
    let r = cfg.resolve(QuadratureSettings::default())?;
    let engine = choose_engine(cfg.engine, &r.family, r.canonical)?;
    let sample = match &cfg.samples {
        Some(path) => read_samples(path, r.family.model())?,
        None => SampleBatch::empty(),
    };
    let x1_grid = cfg.x1_grid.as_ref().ok_or_else(|| {
        AppError::Config("estimate needs --x1-grid (or x1_grid in the [run] section)".into())
    })?;
    let x1s = x1_grid.values();
    let ts = cfg.t_grid.as_ref().map(|g| g.values());

    let primary_name = if engine == Engine::Numeric {
        "bayes_numeric"
    } else {
        "bayes"
    };
    let primary: Arc<dyn CurveEstimator> =
        estimator_from_name(primary_name, &r.family, &r.prior, &r.settings)?;
    let shadow: Option<Arc<dyn CurveEstimator>> = if engine == Engine::Both {
        Some(estimator_from_name(
            "bayes_numeric",
            &r.family,
            &r.prior,
            &r.settings,
        )?)
    } else {
        None
    };

    let mut regression = Table::new("regression", "x1,regression");
    let mut density = Table::new("conditional_density", "x1,x2,density");
    let mut cdf = Table::new("conditional_cdf", "x1,t,cdf");
    let mut tracker = DiscrepancyTracker::new();

    for &x1 in &x1s {
        let bundle = primary.estimate(&sample, x1)?;
        let other: Option<CurveBundle> = shadow
            .as_ref()
            .map(|s| s.estimate(&sample, x1))
            .transpose()?;
        if let Some(o) = &other {
            tracker.record(bundle.regression, o.regression, || {
                format!("regression at x1 = {x1}")
            });
        }
        regression.rows.push(format!(
            "{},{}",
            fmt_sig(x1),
            fmt_sig(bundle.regression)
        ));
        let Some(ts) = &ts else { continue };

        let mut running_max = 0.0_f64;
        for &t in ts {
            let f = (bundle.density)(t);
            density
                .rows
                .push(format!("{},{},{}", fmt_sig(x1), fmt_sig(t), fmt_sig(f)));
            let raw = (bundle.cdf)(t);
            if raw < running_max - CDF_DIP_TOL {
                return Err(AppError::Tolerance(format!(
                    "estimated CDF decreases by {:.3e} at x1 = {x1}, t = {t}",
                    running_max - raw
                )));
            }
            running_max = running_max.max(raw).clamp(0.0, 1.0);
            cdf.rows.push(format!(
                "{},{},{}",
                fmt_sig(x1),
                fmt_sig(t),
                fmt_sig(running_max)
            ));
            if let Some(o) = &other {
                tracker.record(f, (o.density)(t), || {
                    format!("density at x1 = {x1}, x2 = {t}")
                });
                tracker.record(raw, (o.cdf)(t), || format!("CDF at x1 = {x1}, t = {t}"));
            }
        }
    }

    if shadow.is_some() {
        eprintln!(
            "engine agreement: max scaled discrepancy {:.3e} over {} evaluations",
            tracker.max, tracker.points
        );
        if !(tracker.max <= ENGINE_AGREEMENT_TOL) {
            return Err(AppError::Tolerance(format!(
                "closed-form and numeric engines disagree by {:.3e} ({}), tolerance {ENGINE_AGREEMENT_TOL:.0e}",
                tracker.max, tracker.location
            )));
        }
    }

    let mut tables = vec![(regression, "")];
    if ts.is_some() {
        tables.push((density, "_density"));
        tables.push((cdf, "_cdf"));
    }
    emit_tables(&tables, cfg.out.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{FamilySpec, Grid};

    fn gamma_cfg() -> RunConfig {
        RunConfig {
            family: Some(FamilySpec::Gamma { lambda: 1.0 }),
            ..RunConfig::default()
        }
    }

    #[test]
    fn engine_defaults_to_both_for_closed_form_families() {
        let r = gamma_cfg()
            .resolve(QuadratureSettings::default())
            .expect("resolve");
        let engine = choose_engine(None, &r.family, r.canonical).expect("engine");
        assert_eq!(engine, Engine::Both);
    }

    #[test]
    fn closed_form_engine_requires_canonical_prior() {
        use crate::config::PriorChoice;
        let cfg = RunConfig {
            prior: Some(PriorChoice::Gamma {
                shape: 2.0,
                scale: 1.0,
            }),
            ..gamma_cfg()
        };
        let r = cfg.resolve(QuadratureSettings::default()).expect("resolve");
        assert!(!r.canonical);
        let err = choose_engine(Some(Engine::ClosedForm), &r.family, r.canonical)
            .expect_err("closed form must be refused");
        assert!(matches!(err, AppError::Config(_)));
        let engine = choose_engine(None, &r.family, r.canonical).expect("default engine");
        assert_eq!(engine, Engine::Numeric);
    }

    #[test]
    fn estimate_emits_the_worked_regression_value() {
        let dir = tempfile::tempdir().expect("temp dir");
        let samples = dir.path().join("pairs.csv");
        std::fs::write(&samples, "2,3\n").expect("write samples");
        let out = dir.path().join("run.csv");
        let cfg = RunConfig {
            samples: Some(samples),
            x1_grid: Some(Grid::new(1.0, 1.0, 1).expect("grid")),
            out: Some(out.clone()),
            ..gamma_cfg()
        };
        run(&cfg).expect("estimate");
        let text = std::fs::read_to_string(&out).expect("read table");
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x1,regression"));
        let row = lines.next().expect("one data row");
        let reg: f64 = row.split(',').nth(1).expect("regression field").parse().expect("float");
        assert!((reg - 10.0 / 3.0).abs() < 1e-9, "regression {reg}");
    }
}
