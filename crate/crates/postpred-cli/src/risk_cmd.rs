//! The `risk` subcommand: paired Monte Carlo comparison of the posterior
//! predictive estimator against configured competitors, one table row per
//! estimator and loss, with the paired margin against the baseline.

use std::sync::Arc;

use postpred::{
    compare, estimator_from_name, CurveEstimator, LossKind, QuadratureSettings, RiskRequest,
};

use crate::config::{Engine, RunConfig};
use crate::tables::{emit_tables, fmt_sig, Table};
use crate::AppError;

pub const HEADER: &str =
    "estimator,loss,n,replications,failed,mean_risk,std_error,margin_mean,margin_se,seed_digest";

/// How many paired standard errors the baseline may trail a competitor
/// before the ordering is declared violated.
pub const ORDERING_SES: f64 = 3.0;

const DEFAULT_COMPETITORS: [&str; 4] = [
    "prior_predictive",
    "perturbed_bayes(0.2)",
    "plug_in_posterior_mean",
    "plug_in_mle",
];

fn needs_closed_forms(name: &str) -> bool {
    name == "bayes" || name == "prior_predictive" || name.starts_with("perturbed_bayes(")
}

pub fn run(cfg: &RunConfig) -> Result<(), AppError> {
    let r = cfg.resolve(QuadratureSettings::light())?;
    let n = cfg.n.unwrap_or(5);
    let reps = cfg.reps.unwrap_or(1000);
    let seed = cfg.seed.unwrap_or(1);
    let x1_per_rep = cfg.x1_per_rep.unwrap_or(1);
    let losses = cfg
        .losses
        .clone()
        .unwrap_or_else(|| LossKind::all().to_vec());

    let baseline = match cfg.engine {
        Some(Engine::Numeric) => "bayes_numeric",
        _ => {
            if r.family.has_closed_forms() && r.canonical {
                "bayes"
            } else {
                "bayes_numeric"
            }
        }
    };
    let competitor_names: Vec<String> = match &cfg.competitors {
        Some(names) => names.clone(),
        None if r.canonical => DEFAULT_COMPETITORS.iter().map(|s| s.to_string()).collect(),
        None => vec![
            "plug_in_posterior_mean".to_string(),
            "plug_in_mle".to_string(),
        ],
    };
    if !r.canonical {
        if let Some(bad) = competitor_names.iter().find(|n| needs_closed_forms(n)) {
            return Err(AppError::Config(format!(
                "competitor {bad:?} uses the family's canonical prior; drop it from \
                 --competitors or drop --prior"
            )));
        }
    }

    let mut estimators: Vec<Arc<dyn CurveEstimator>> =
        vec![estimator_from_name(baseline, &r.family, &r.prior, &r.settings)?];
    for name in &competitor_names {
        estimators.push(estimator_from_name(name, &r.family, &r.prior, &r.settings)?);
    }

    let mut table = Table::new("risk_comparison", HEADER);
    let mut violations: Vec<String> = Vec::new();
    for &loss in &losses {
        let request = RiskRequest {
            model: r.family.model_arc(),
            prior: r.prior.clone(),
            n,
            loss,
            replications: reps,
            x1_per_rep,
            seed,
            settings: r.settings.clone(),
        };
        let report = compare(&request, &estimators)?;
        for (i, rr) in report.reports.iter().enumerate() {
            let (margin_mean, margin_se) = if i == 0 {
                (0.0, 0.0)
            } else {
                let m = &report.margins[i - 1];
                (m.mean_diff, m.std_error)
            };
            table.rows.push(format!(
                "{},{},{},{},{},{},{},{},{},{}",
                rr.estimator,
                rr.loss.name(),
                rr.n,
                rr.replications,
                rr.failed,
                fmt_sig(rr.mean_risk),
                fmt_sig(rr.std_error),
                fmt_sig(margin_mean),
                fmt_sig(margin_se),
                rr.seed_digest
            ));
        }
        for margin in &report.margins {
            if margin.std_error > 0.0 && margin.mean_diff < -ORDERING_SES * margin.std_error {
                violations.push(format!(
                    "{} beats {baseline} on {} by {:.2} paired SEs",
                    margin.estimator,
                    loss.name(),
                    -margin.mean_diff / margin.std_error
                ));
            }
        }
    }

    emit_tables(&[(table, "")], cfg.out.as_deref())?;
    if !violations.is_empty() {
        return Err(AppError::Ordering(format!(
            "risk ordering violated: {}",
            violations.join("; ")
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::FamilySpec;

    #[test]
    fn singleton_parameter_space_gives_zero_risks() {
        let dir = tempfile::tempdir().expect("temp dir");
        let table_path = dir.path().join("single.family");
        std::fs::write(
            &table_path,
            "theta,0,0.5,1\np,0,0,0,0.25\np,0,0,1,0.25\np,0,1,0,0.25\np,0,1,1,0.25\n",
        )
        .expect("write family");
        let out = dir.path().join("risk.csv");
        let cfg = RunConfig {
            family: Some(FamilySpec::Finite { path: table_path }),
            n: Some(2),
            reps: Some(120),
            seed: Some(9),
            competitors: Some(vec!["bayes_numeric".to_string()]),
            out: Some(out.clone()),
            ..RunConfig::default()
        };
        run(&cfg).expect("risk command");
        let text = std::fs::read_to_string(&out).expect("read table");
        for line in text.lines().skip(1) {
            let mean: f64 = line.split(',').nth(5).expect("mean field").parse().expect("float");
            assert!(mean.abs() < 1e-12, "nonzero risk in {line}");
        }
    }
}
