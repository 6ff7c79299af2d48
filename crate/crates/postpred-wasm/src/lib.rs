//! Browser bindings for the posterior predictive estimators. The
//! [`demo`] module holds the host-testable logic behind plain string
//! errors; [`DemoModel`] is its thin `wasm_bindgen` wrapper, returning
//! curves as flat `[x0, y0, x1, y1, ...]` arrays for canvas plotting.

use wasm_bindgen::prelude::*;

pub mod demo {
    use std::sync::Arc;

    use postpred::{
        estimator_from_name, BuiltinFamily, CurveEstimator, QuadratureSettings, SampleBatch,
    };
    use postpred::families::{BivariateNormalFamily, CoinPairFamily, GammaExpFamily};

    /// One configured model: a family, its canonical prior baked into
    /// the exact estimator, and the conditioning sample.
    pub struct Demo {
        estimator: Arc<dyn CurveEstimator>,
        sample: SampleBatch,
    }

    fn parse_samples(family: &BuiltinFamily, text: &str) -> Result<SampleBatch, String> {
        let (s1, s2) = family.model_arc().obs_support();
        let mut pairs = Vec::new();
        for (index, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let mut next = |what: &str| -> Result<f64, String> {
                let field = fields
                    .next()
                    .map(str::trim)
                    .filter(|f| !f.is_empty())
                    .ok_or(format!("line {}: missing {what}", index + 1))?;
                field
                    .parse()
                    .map_err(|_| format!("line {}: {what} is not a number: {field}", index + 1))
            };
            let x1 = next("x1")?;
            let x2 = next("x2")?;
            if fields.next().is_some() {
                return Err(format!("line {}: expected two fields", index + 1));
            }
            if !s1.contains(x1) {
                return Err(format!("line {}: x1 = {x1} is outside the support", index + 1));
            }
            if !s2.contains(x2) {
                return Err(format!("line {}: x2 = {x2} is outside the support", index + 1));
            }
            pairs.push((x1, x2));
        }
        SampleBatch::from_pairs(&pairs).map_err(|e| e.to_string())
    }

    fn grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>, String> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(format!("bad range [{lo}, {hi}]"));
        }
        match count {
            0 => Err("empty grid".into()),
            1 if lo == hi => Ok(vec![lo]),
            1 => Err("a one-point grid needs lo = hi".into()),
            _ => Ok((0..count)
                .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
                .collect()),
        }
    }

    impl Demo {
        /// `kind` picks the family: `gamma` (with `param` the prior
        /// rate), `coin` (`param` unused) or `normal` (`param` the
        /// within-pair correlation). `samples` holds one `x1,x2` pair
        /// per line; `#` starts a comment.
        pub fn build(kind: &str, param: f64, samples: &str) -> Result<Demo, String> {
            let family = match kind {
                "gamma" => BuiltinFamily::Gamma(
                    GammaExpFamily::new(param).map_err(|e| e.to_string())?,
                ),
                "coin" => BuiltinFamily::Coin(CoinPairFamily::new()),
                "normal" => BuiltinFamily::Normal(
                    BivariateNormalFamily::new(1.0, param, 0.0, 1.0)
                        .map_err(|e| e.to_string())?,
                ),
                other => return Err(format!("unknown family: {other}")),
            };
            let sample = parse_samples(&family, samples)?;
            let estimator = estimator_from_name(
                "bayes",
                &family,
                &family.canonical_prior(),
                &QuadratureSettings::default(),
            )
            .map_err(|e| e.to_string())?;
            Ok(Demo { estimator, sample })
        }

        pub fn observation_count(&self) -> usize {
            self.sample.len()
        }

        /// `(x1, regression)` pairs over an evenly spaced grid.
        pub fn regression_points(
            &self,
            lo: f64,
            hi: f64,
            count: usize,
        ) -> Result<Vec<f64>, String> {
            let mut out = Vec::with_capacity(2 * count);
            for x1 in grid(lo, hi, count)? {
                let bundle = self
                    .estimator
                    .estimate(&self.sample, x1)
                    .map_err(|e| e.to_string())?;
                out.push(x1);
                out.push(bundle.regression);
            }
            Ok(out)
        }

        /// `(t, density)` pairs of the estimated conditional density of
        /// `X2` given `X1 = x1`.
        pub fn density_points(
            &self,
            x1: f64,
            lo: f64,
            hi: f64,
            count: usize,
        ) -> Result<Vec<f64>, String> {
            let bundle = self
                .estimator
                .estimate(&self.sample, x1)
                .map_err(|e| e.to_string())?;
            let mut out = Vec::with_capacity(2 * count);
            for t in grid(lo, hi, count)? {
                out.push(t);
                out.push((bundle.density)(t));
            }
            Ok(out)
        }

        /// `(t, cdf)` pairs of the estimated conditional CDF.
        pub fn cdf_points(
            &self,
            x1: f64,
            lo: f64,
            hi: f64,
            count: usize,
        ) -> Result<Vec<f64>, String> {
            let bundle = self
                .estimator
                .estimate(&self.sample, x1)
                .map_err(|e| e.to_string())?;
            let mut out = Vec::with_capacity(2 * count);
            for t in grid(lo, hi, count)? {
                out.push(t);
                out.push((bundle.cdf)(t));
            }
            Ok(out)
        }

        pub fn regression_at(&self, x1: f64) -> Result<f64, String> {
            Ok(self
                .estimator
                .estimate(&self.sample, x1)
                .map_err(|e| e.to_string())?
                .regression)
        }

        /// A plotting bound: the smallest probed `t` with at least 99.5%
        /// of the conditional mass below it.
        pub fn suggested_t_max(&self, x1: f64) -> Result<f64, String> {
            let bundle = self
                .estimator
                .estimate(&self.sample, x1)
                .map_err(|e| e.to_string())?;
            let mut t = bundle.regression.abs().max(1.0);
            for _ in 0..60 {
                if (bundle.cdf)(t) >= 0.995 {
                    return Ok(t);
                }
                t *= 2.0;
            }
            Ok(t)
        }
    }
}

/// A model the page interacts with; curves come back as flat
/// `[x0, y0, x1, y1, ...]` arrays.
#[wasm_bindgen]
pub struct DemoModel {
    inner: demo::Demo,
}

#[wasm_bindgen]
impl DemoModel {
    #[wasm_bindgen(constructor)]
    pub fn new(kind: &str, param: f64, samples: &str) -> Result<DemoModel, JsValue> {
        demo::Demo::build(kind, param, samples)
            .map(|inner| DemoModel { inner })
            .map_err(|e| JsValue::from_str(&e))
    }

    pub fn observation_count(&self) -> usize {
        self.inner.observation_count()
    }

    pub fn regression_curve(&self, lo: f64, hi: f64, count: usize) -> Result<Vec<f64>, JsValue> {
        self.inner
            .regression_points(lo, hi, count)
            .map_err(|e| JsValue::from_str(&e))
    }

    pub fn conditional_density_curve(
        &self,
        x1: f64,
        lo: f64,
        hi: f64,
        count: usize,
    ) -> Result<Vec<f64>, JsValue> {
        self.inner
            .density_points(x1, lo, hi, count)
            .map_err(|e| JsValue::from_str(&e))
    }

    pub fn conditional_cdf_curve(
        &self,
        x1: f64,
        lo: f64,
        hi: f64,
        count: usize,
    ) -> Result<Vec<f64>, JsValue> {
        self.inner
            .cdf_points(x1, lo, hi, count)
            .map_err(|e| JsValue::from_str(&e))
    }

    pub fn regression_at(&self, x1: f64) -> Result<f64, JsValue> {
        self.inner.regression_at(x1).map_err(|e| JsValue::from_str(&e))
    }

    pub fn suggested_t_max(&self, x1: f64) -> Result<f64, JsValue> {
        self.inner
            .suggested_t_max(x1)
            .map_err(|e| JsValue::from_str(&e))
    }
}
