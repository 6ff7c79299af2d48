//! Deterministic one-dimensional quadrature: composite Gauss-Legendre
//! panels with error estimation by panel doubling, monotone transforms for
//! unbounded domains, and prior expectations with quantile truncation.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

use crate::prior::PriorSpec;

/// Knobs for every quadrature in the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSettings {
    /// Gauss-Legendre nodes per panel.
    pub node_count: usize,
    /// Initial panels per segment between breakpoints.
    pub panel_count: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Prior tail mass allowed to be dropped when truncating an unbounded
    /// parameter domain.
    pub truncation_mass: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            node_count: 257,
            panel_count: 8,
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            truncation_mass: 1e-12,
        }
    }
}

impl QuadratureSettings {
    /// A cheaper profile for Monte Carlo inner loops, where statistical
    /// error dominates quadrature error.
    pub fn light() -> Self {
        QuadratureSettings {
            node_count: 33,
            panel_count: 2,
            abs_tol: 1e-9,
            rel_tol: 1e-7,
            truncation_mass: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<(), QuadError> {
        let ok = self.node_count >= 3
            && self.panel_count >= 1
            && self.abs_tol > 0.0
            && self.rel_tol > 0.0
            && self.truncation_mass > 0.0
            && self.truncation_mass < 1e-6;
        if ok {
            Ok(())
        } else {
            Err(QuadError::InvalidSettings(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("invalid quadrature settings: {0}")]
    InvalidSettings(String),
    #[error("integrand evaluated to a non-finite value at {at}")]
    NonFiniteIntegrand { at: f64 },
    #[error("invalid integration domain [{lo}, {hi}]")]
    BadDomain { lo: f64, hi: f64 },
}

/// A quadrature value with its refinement-based error estimate.
///
/// `converged == false` flags a value whose panel-doubling error estimate
/// never met the tolerances before the panel cap; the value is still the
/// finest refinement computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralResult {
    pub value: f64,
    pub error_estimate: f64,
    pub converged: bool,
    /// Panel multiplier at which refinement stopped (1, 2, 4, ..., 64).
    pub refinement: usize,
}

impl IntegralResult {
    pub(crate) fn exact(value: f64) -> Self {
        IntegralResult {
            value,
            error_estimate: 0.0,
            converged: true,
            refinement: 1,
        }
    }
}

/// Neumaier compensated summation; used wherever many terms of mixed
/// magnitude are reduced (quadrature panels, enumeration oracles).
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], cached per node count.
pub fn gauss_legendre(n: usize) -> Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().expect("gauss cache lock").get(&n) {
        return Arc::clone(rule);
    }
    let rule = Arc::new(compute_gauss_legendre(n));
    cache
        .lock()
        .expect("gauss cache lock")
        .insert(n, Arc::clone(&rule));
    rule
}

fn compute_gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 2, "need at least two nodes");
    let mut pairs = vec![(0.0, 0.0); n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        pairs[i] = (-z, w);
        pairs[n - 1 - i] = (z, w);
    }
    pairs
}

fn composite_pass<F: Fn(f64) -> f64>(
    f: &F,
    breaks: &[f64],
    panels_per_segment: usize,
    rule: &[(f64, f64)],
) -> Result<f64, QuadError> {
    let mut total = CompensatedSum::new();
    for seg in breaks.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let h = (b - a) / panels_per_segment as f64;
        for p in 0..panels_per_segment {
            let lo = a + p as f64 * h;
            let half = 0.5 * h;
            let mid = lo + half;
            for &(x, w) in rule {
                let at = mid + half * x;
                let v = f(at);
                if !v.is_finite() {
                    return Err(QuadError::NonFiniteIntegrand { at });
                }
                total.add(w * v * half);
            }
        }
    }
    Ok(total.value())
}

/// Integrates `f` over the segments delimited by `breaks` (sorted, finite),
/// refining by panel doubling until the change between refinements meets
/// the tolerances or the panel cap (64x) is reached.
pub fn integrate_breakpoints<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    settings: &QuadratureSettings,
) -> Result<IntegralResult, QuadError> {
    settings.validate()?;
    if breaks.len() < 2 {
        return Err(QuadError::BadDomain {
            lo: f64::NAN,
            hi: f64::NAN,
        });
    }
    for pair in breaks.windows(2) {
        if !(pair[0].is_finite() && pair[1].is_finite() && pair[0] <= pair[1]) {
            return Err(QuadError::BadDomain {
                lo: pair[0],
                hi: pair[1],
            });
        }
    }
    let rule = gauss_legendre(settings.node_count);
    let mut refinement = 1;
    let mut previous = composite_pass(&f, breaks, settings.panel_count, &rule)?;
    loop {
        refinement *= 2;
        let current = composite_pass(&f, breaks, settings.panel_count * refinement, &rule)?;
        let error = (current - previous).abs();
        let tolerance = settings.abs_tol.max(settings.rel_tol * current.abs());
        if error <= tolerance {
            return Ok(IntegralResult {
                value: current,
                error_estimate: error,
                converged: true,
                refinement,
            });
        }
        if refinement >= 64 {
            return Ok(IntegralResult {
                value: current,
                error_estimate: error,
                converged: false,
                refinement,
            });
        }
        previous = current;
    }
}

/// Integrates `f` over an interval, mapping unbounded ends through a
/// monotone rational transform to a bounded one.
pub fn line_integral<F: Fn(f64) -> f64>(
    f: F,
    domain: (f64, f64),
    settings: &QuadratureSettings,
) -> Result<IntegralResult, QuadError> {
    let (lo, hi) = domain;
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(QuadError::BadDomain { lo, hi });
    }
    if lo == hi {
        return Ok(IntegralResult::exact(0.0));
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => integrate_breakpoints(f, &[lo, hi], settings),
        (true, false) => {
            // x = lo + t/(1-t), t in [0,1)
            let g = move |t: f64| {
                let s = 1.0 - t;
                f(lo + t / s) / (s * s)
            };
            integrate_breakpoints(g, &[0.0, 1.0], settings)
        }
        (false, true) => {
            // x = hi - t/(1-t), t in [0,1)
            let g = move |t: f64| {
                let s = 1.0 - t;
                f(hi - t / s) / (s * s)
            };
            integrate_breakpoints(g, &[0.0, 1.0], settings)
        }
        (false, false) => {
            // x = t/(1-t^2), t in (-1,1)
            let g = move |t: f64| {
                let s = 1.0 - t * t;
                f(t / s) * (1.0 + t * t) / (s * s)
            };
            integrate_breakpoints(g, &[-1.0, 0.0, 1.0], settings)
        }
    }
}

/// `integral of g dQ`: exact weighted sum for finite priors, composite
/// quadrature over the quantile-truncated support otherwise.
pub fn prior_expectation<F: Fn(f64) -> f64>(
    g: F,
    prior: &PriorSpec,
    settings: &QuadratureSettings,
) -> Result<IntegralResult, QuadError> {
    prior_expectation_with_breaks(g, prior, settings, &[])
}

/// As [`prior_expectation`], with extra interior breakpoints inserted into
/// the panel layout (used to pin panels around a posterior peak).
pub fn prior_expectation_with_breaks<F: Fn(f64) -> f64>(
    g: F,
    prior: &PriorSpec,
    settings: &QuadratureSettings,
    extra_breaks: &[f64],
) -> Result<IntegralResult, QuadError> {
    settings.validate()?;
    if let PriorSpec::Finite { points, weights } = prior {
        let mut total = CompensatedSum::new();
        for (p, w) in points.iter().zip(weights) {
            let v = g(*p);
            if !v.is_finite() {
                return Err(QuadError::NonFiniteIntegrand { at: *p });
            }
            total.add(w * v);
        }
        return Ok(IntegralResult::exact(total.value()));
    }
    let (lo, hi) = prior
        .truncated_interval(settings.truncation_mass)
        .expect("continuous prior has a truncation interval");
    let mut breaks = vec![lo];
    let mut extras: Vec<f64> = extra_breaks
        .iter()
        .copied()
        .filter(|b| b.is_finite() && *b > lo && *b < hi)
        .collect();
    extras.sort_by(f64::total_cmp);
    let span = hi - lo;
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
    let weighted = |theta: f64| g(theta) * prior.density(theta);
    integrate_breakpoints(weighted, &breaks, settings)
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`;
/// returns `(argmax, max)`. Tolerant of plateaus and of `-inf` values at
/// the ends of the bracket.
pub(crate) fn golden_section_max<F: Fn(f64) -> f64>(
    f: F,
    mut a: f64,
    mut b: f64,
    iters: usize,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-14 * (1.0 + a.abs() + b.abs()) {
            break;
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
