//! Run configuration: family and prior selectors, grids, engine choice and
//! experiment knobs. Values come from an optional config file with
//! `[family]`, `[prior]`, `[integration]` and `[run]` sections, overridden
//! by command-line flags. Unknown sections and keys are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use postpred::families::{
    BivariateNormalFamily, CoinPairFamily, FiniteTableFamily, GammaExpFamily,
};
use postpred::{BuiltinFamily, LossKind, PriorSpec, QuadratureSettings};

use crate::AppError;

/// An inclusive evenly spaced grid, written `a:b:k` on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lo: f64,
    hi: f64,
    count: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self, AppError> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi || count == 0 {
            return Err(AppError::Config(format!(
                "invalid grid {lo}:{hi}:{count}; need finite lo <= hi and at least one point"
            )));
        }
        if count == 1 && lo != hi {
            return Err(AppError::Config(format!(
                "a single-point grid needs matching endpoints, got {lo}:{hi}:1"
            )));
        }
        Ok(Grid { lo, hi, count })
    }

    /// Parses the `a:b:k` form: `k` points evenly spaced from `a` to `b`.
    pub fn parse(spec: &str) -> Result<Self, AppError> {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(AppError::Config(format!(
                "grid {spec:?} does not match a:b:k"
            )));
        }
        let lo = parse_num::<f64>(parts[0], "grid start")?;
        let hi = parse_num::<f64>(parts[1], "grid end")?;
        let count = parse_num::<usize>(parts[2], "grid point count")?;
        Grid::new(lo, hi, count)
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.hi
                } else {
                    self.lo + step * i as f64
                }
            })
            .collect()
    }
}

/// Which backend evaluates the estimated curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    ClosedForm,
    Numeric,
    Both,
}

impl Engine {
    pub fn parse(name: &str) -> Result<Self, AppError> {
        match name.trim() {
            "closed-form" | "closed_form" => Ok(Engine::ClosedForm),
            "numeric" => Ok(Engine::Numeric),
            "both" => Ok(Engine::Both),
            other => Err(AppError::Config(format!(
                "unknown engine {other:?}; use closed-form, numeric or both"
            ))),
        }
    }
}

/// Family selector plus hyperparameters, before the family is built.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilySpec {
    Gamma { lambda: f64 },
    Coin,
    Normal { sigma: f64, rho: f64, mu: f64, tau: f64 },
    Finite { path: PathBuf },
}

impl FamilySpec {
    /// Parses the flag form: `gamma[:lambda=L]`, `coin`,
    /// `normal[:sigma=S,rho=R,mu=M,tau=T]` or `finite:<table path>`.
    pub fn parse(spec: &str) -> Result<Self, AppError> {
        let (kind, rest) = split_spec(spec);
        if kind == "finite" {
            let path = rest.ok_or_else(|| {
                AppError::Config("the finite family needs a table path: finite:<path>".into())
            })?;
            return Ok(FamilySpec::Finite { path: path.into() });
        }
        let params = parse_pairs(rest.unwrap_or(""), "family")?;
        FamilySpec::from_parts(kind, params)
    }

    /// Builds the selector from a kind name and key=value parameters, the
    /// shared path for both the flag form and the `[family]` section.
    pub fn from_parts(kind: &str, params: Vec<(String, String)>) -> Result<Self, AppError> {
        let mut bag = ParamBag::new("family", params)?;
        let spec = match kind {
            "gamma" => FamilySpec::Gamma {
                lambda: bag.take_f64("lambda", 1.0)?,
            },
            "coin" => FamilySpec::Coin,
            "normal" => FamilySpec::Normal {
                sigma: bag.take_f64("sigma", 1.0)?,
                rho: bag.take_f64("rho", 0.0)?,
                mu: bag.take_f64("mu", 0.0)?,
                tau: bag.take_f64("tau", 1.0)?,
            },
            "finite" => FamilySpec::Finite {
                path: bag.take_raw("path")?.into(),
            },
            other => {
                return Err(AppError::Config(format!(
                    "unknown family {other:?}; use gamma, coin, normal or finite"
                )))
            }
        };
        bag.finish()?;
        Ok(spec)
    }

    pub fn build(&self) -> Result<BuiltinFamily, AppError> {
        match self {
            FamilySpec::Gamma { lambda } => {
                Ok(BuiltinFamily::Gamma(GammaExpFamily::new(*lambda)?))
            }
            FamilySpec::Coin => Ok(BuiltinFamily::Coin(CoinPairFamily::new())),
            FamilySpec::Normal {
                sigma,
                rho,
                mu,
                tau,
            } => Ok(BuiltinFamily::Normal(BivariateNormalFamily::new(
                *sigma, *rho, *mu, *tau,
            )?)),
            FamilySpec::Finite { path } => {
                let text = fs::read_to_string(path).map_err(|e| {
                    AppError::Data(format!("cannot read family table {}: {e}", path.display()))
                })?;
                Ok(BuiltinFamily::Finite(FiniteTableFamily::from_text(&text)?))
            }
        }
    }
}

/// Prior selector, defaulting to the family's canonical prior.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorChoice {
    Canonical,
    Gamma { shape: f64, scale: f64 },
    Normal { mean: f64, variance: f64 },
    Uniform01,
    Point { at: f64 },
}

impl PriorChoice {
    /// Parses the flag form: `canonical`, `gamma:shape=A,scale=B`,
    /// `normal:mean=M,variance=V`, `uniform01` or `point:at=T`.
    pub fn parse(spec: &str) -> Result<Self, AppError> {
        let (kind, rest) = split_spec(spec);
        let params = parse_pairs(rest.unwrap_or(""), "prior")?;
        PriorChoice::from_parts(kind, params)
    }

    pub fn from_parts(kind: &str, params: Vec<(String, String)>) -> Result<Self, AppError> {
        let mut bag = ParamBag::new("prior", params)?;
        let choice = match kind {
            "canonical" => PriorChoice::Canonical,
            "gamma" => PriorChoice::Gamma {
                shape: bag.take_f64("shape", 1.0)?,
                scale: bag.take_f64("scale", 1.0)?,
            },
            "normal" => PriorChoice::Normal {
                mean: bag.take_f64("mean", 0.0)?,
                variance: bag.take_f64("variance", 1.0)?,
            },
            "uniform01" => PriorChoice::Uniform01,
            "point" => PriorChoice::Point {
                at: parse_num::<f64>(&bag.take_raw("at")?, "point prior location")?,
            },
            other => {
                return Err(AppError::Config(format!(
                    "unknown prior {other:?}; use canonical, gamma, normal, uniform01 or point"
                )))
            }
        };
        bag.finish()?;
        Ok(choice)
    }

    pub fn build(&self, family: &BuiltinFamily) -> Result<PriorSpec, AppError> {
        match self {
            PriorChoice::Canonical => Ok(family.canonical_prior()),
            PriorChoice::Gamma { shape, scale } => Ok(PriorSpec::gamma(*shape, *scale)?),
            PriorChoice::Normal { mean, variance } => Ok(PriorSpec::normal(*mean, *variance)?),
            PriorChoice::Uniform01 => Ok(PriorSpec::uniform01()),
            PriorChoice::Point { at } => Ok(PriorSpec::point_mass(*at)?),
        }
    }
}

/// Every flag the three subcommands accept. Flags that do not apply to a
/// subcommand are simply unused by it.
#[derive(Debug, Clone, Default, Args)]
pub struct FlagSet {
    /// Model family: gamma[:lambda=L], coin, normal[:sigma=S,rho=R,mu=M,tau=T], finite:<path>
    #[arg(long)]
    pub family: Option<String>,
    /// Prior: canonical, gamma:shape=A,scale=B, normal:mean=M,variance=V, uniform01, point:at=T
    #[arg(long)]
    pub prior: Option<String>,
    /// Config file with [family], [prior], [integration] and [run] sections
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sample file: one x1,x2 pair per line, # starts a comment
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Conditioning grid: k points evenly spaced from a to b
    #[arg(long = "x1-grid", value_name = "a:b:k")]
    pub x1_grid: Option<String>,
    /// Second-coordinate grid for the density and CDF tables
    #[arg(long = "t-grid", value_name = "a:b:k")]
    pub t_grid: Option<String>,
    /// Curve backend: closed-form, numeric or both (default: both when available)
    #[arg(long)]
    pub engine: Option<String>,
    /// Sample size per replication (risk) or per validation case
    #[arg(long)]
    pub n: Option<usize>,
    /// Monte Carlo replications for the risk comparison
    #[arg(long)]
    pub reps: Option<usize>,
    /// Root seed; every replication derives its own substream from it
    #[arg(long)]
    pub seed: Option<u64>,
    /// Conditioning draws per replication
    #[arg(long = "x1-per-rep")]
    pub x1_per_rep: Option<usize>,
    /// Comma list of losses: sq_tv, sq_l1, sq_linf, sq_error
    #[arg(long, value_name = "LIST")]
    pub losses: Option<String>,
    /// Comma list of competitor estimators, e.g. prior_predictive,perturbed_bayes(0.2)
    #[arg(long, value_name = "LIST")]
    pub competitors: Option<String>,
    /// Output file; estimate also writes *_density/*_cdf siblings when --t-grid is set
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// The merged configuration a command runs with.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub family: Option<FamilySpec>,
    pub prior: Option<PriorChoice>,
    pub settings: Option<QuadratureSettings>,
    pub samples: Option<PathBuf>,
    pub x1_grid: Option<Grid>,
    pub t_grid: Option<Grid>,
    pub engine: Option<Engine>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub x1_per_rep: Option<usize>,
    pub losses: Option<Vec<LossKind>>,
    pub competitors: Option<Vec<String>>,
    pub out: Option<PathBuf>,
}

/// A built family/prior pair with the settings a command should use.
pub struct Resolved {
    pub family: BuiltinFamily,
    pub prior: PriorSpec,
    /// Whether the prior equals the family's canonical prior, which is what
    /// the closed-form backend is derived under.
    pub canonical: bool,
    pub settings: QuadratureSettings,
}

impl RunConfig {
    /// Loads the config file named by `--config` (if any), then lets the
    /// remaining flags override it.
    pub fn load(flags: &FlagSet) -> Result<RunConfig, AppError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &flags.config {
            cfg.apply_file(path)?;
        }
        cfg.apply_flags(flags)?;
        Ok(cfg)
    }

    pub fn resolve(&self, fallback: QuadratureSettings) -> Result<Resolved, AppError> {
        let spec = self.family.as_ref().ok_or_else(|| {
            AppError::Config("no family selected; pass --family or a config file".into())
        })?;
        let family = spec.build()?;
        let prior = self
            .prior
            .clone()
            .unwrap_or(PriorChoice::Canonical)
            .build(&family)?;
        let canonical = prior == family.canonical_prior();
        let settings = self.settings.clone().unwrap_or(fallback);
        settings.validate()?;
        Ok(Resolved {
            family,
            prior,
            canonical,
            settings,
        })
    }

    fn apply_file(&mut self, path: &Path) -> Result<(), AppError> {
        let text = fs::read_to_string(path).map_err(|e| {
            AppError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut section = String::new();
        let mut family_kv: Vec<(String, String)> = Vec::new();
        let mut prior_kv: Vec<(String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    AppError::Config(format!("config line {line}: unterminated section header"))
                })?;
                section = name.trim().to_string();
                if !matches!(section.as_str(), "family" | "prior" | "integration" | "run") {
                    return Err(AppError::Config(format!(
                        "config line {line}: unknown section [{section}]"
                    )));
                }
                continue;
            }
            let (k, v) = body.split_once('=').ok_or_else(|| {
                AppError::Config(format!("config line {line}: expected key = value"))
            })?;
            let key = k.trim().to_string();
            let val = v.trim().to_string();
            match section.as_str() {
                "family" => family_kv.push((key, val)),
                "prior" => prior_kv.push((key, val)),
                "integration" => self.apply_integration_key(&key, &val, line)?,
                "run" => self.apply_run_key(&key, &val, line)?,
                _ => {
                    return Err(AppError::Config(format!(
                        "config line {line}: key {key:?} appears before any section"
                    )))
                }
            }
        }
        if !family_kv.is_empty() {
            self.family = Some(build_from_section("family", family_kv, FamilySpec::from_parts)?);
        }
        if !prior_kv.is_empty() {
            self.prior = Some(build_from_section("prior", prior_kv, PriorChoice::from_parts)?);
        }
        Ok(())
    }

    fn apply_integration_key(&mut self, key: &str, val: &str, line: usize) -> Result<(), AppError> {
        let s = self.settings.get_or_insert_with(QuadratureSettings::default);
        let at = |what: &str| format!("config line {line}: {what}");
        match key {
            "node_count" => s.node_count = parse_num(val, &at("node_count"))?,
            "panel_count" => s.panel_count = parse_num(val, &at("panel_count"))?,
            "abs_tol" => s.abs_tol = parse_num(val, &at("abs_tol"))?,
            "rel_tol" => s.rel_tol = parse_num(val, &at("rel_tol"))?,
            "truncation_mass" => s.truncation_mass = parse_num(val, &at("truncation_mass"))?,
            other => {
                return Err(AppError::Config(format!(
                    "config line {line}: unknown integration key {other:?}"
                )))
            }
        }
        Ok(())
    }

    fn apply_run_key(&mut self, key: &str, val: &str, line: usize) -> Result<(), AppError> {
        let at = |what: &str| format!("config line {line}: {what}");
        match key {
            "samples" => self.samples = Some(val.into()),
            "x1_grid" => self.x1_grid = Some(Grid::parse(val)?),
            "t_grid" => self.t_grid = Some(Grid::parse(val)?),
            "engine" => self.engine = Some(Engine::parse(val)?),
            "n" => self.n = Some(parse_num(val, &at("n"))?),
            "reps" => self.reps = Some(parse_num(val, &at("reps"))?),
            "seed" => self.seed = Some(parse_num(val, &at("seed"))?),
            "x1_per_rep" => self.x1_per_rep = Some(parse_num(val, &at("x1_per_rep"))?),
            "losses" => self.losses = Some(parse_losses(val)?),
            "competitors" => self.competitors = Some(parse_competitors(val)?),
            "out" => self.out = Some(val.into()),
            other => {
                return Err(AppError::Config(format!(
                    "config line {line}: unknown run key {other:?}"
                )))
            }
        }
        Ok(())
    }

    fn apply_flags(&mut self, flags: &FlagSet) -> Result<(), AppError> {
        if let Some(s) = &flags.family {
            self.family = Some(FamilySpec::parse(s)?);
        }
        if let Some(s) = &flags.prior {
            self.prior = Some(PriorChoice::parse(s)?);
        }
        if let Some(p) = &flags.samples {
            self.samples = Some(p.clone());
        }
        if let Some(s) = &flags.x1_grid {
            self.x1_grid = Some(Grid::parse(s)?);
        }
        if let Some(s) = &flags.t_grid {
            self.t_grid = Some(Grid::parse(s)?);
        }
        if let Some(s) = &flags.engine {
            self.engine = Some(Engine::parse(s)?);
        }
        if let Some(v) = flags.n {
            self.n = Some(v);
        }
        if let Some(v) = flags.reps {
            self.reps = Some(v);
        }
        if let Some(v) = flags.seed {
            self.seed = Some(v);
        }
        if let Some(v) = flags.x1_per_rep {
            self.x1_per_rep = Some(v);
        }
        if let Some(s) = &flags.losses {
            self.losses = Some(parse_losses(s)?);
        }
        if let Some(s) = &flags.competitors {
            self.competitors = Some(parse_competitors(s)?);
        }
        if let Some(p) = &flags.out {
            self.out = Some(p.clone());
        }
        Ok(())
    }
}

pub fn parse_losses(list: &str) -> Result<Vec<LossKind>, AppError> {
    let mut losses = Vec::new();
    for part in list.split(',') {
        let name = part.trim();
        if name.is_empty() {
            continue;
        }
        let loss = LossKind::from_name(name).ok_or_else(|| {
            AppError::Config(format!(
                "unknown loss {name:?}; use sq_tv, sq_l1, sq_linf or sq_error"
            ))
        })?;
        losses.push(loss);
    }
    if losses.is_empty() {
        return Err(AppError::Config("the loss list is empty".into()));
    }
    Ok(losses)
}

pub fn parse_competitors(list: &str) -> Result<Vec<String>, AppError> {
    let names: Vec<String> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    if names.is_empty() {
        return Err(AppError::Config("the competitor list is empty".into()));
    }
    Ok(names)
}

fn split_spec(spec: &str) -> (&str, Option<&str>) {
    match spec.split_once(':') {
        Some((kind, rest)) => (kind.trim(), Some(rest)),
        None => (spec.trim(), None),
    }
}

fn parse_pairs(rest: &str, owner: &str) -> Result<Vec<(String, String)>, AppError> {
    let mut pairs = Vec::new();
    for part in rest.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (k, v) = part.split_once('=').ok_or_else(|| {
            AppError::Config(format!("{owner} parameter {part:?} is not key=value"))
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn build_from_section<T>(
    owner: &str,
    mut kv: Vec<(String, String)>,
    from_parts: impl Fn(&str, Vec<(String, String)>) -> Result<T, AppError>,
) -> Result<T, AppError> {
    let pos = kv.iter().position(|(k, _)| k == "kind").ok_or_else(|| {
        AppError::Config(format!("the [{owner}] section needs a kind key"))
    })?;
    let (_, kind) = kv.remove(pos);
    from_parts(&kind, kv)
}

fn parse_num<T: std::str::FromStr>(text: &str, what: &str) -> Result<T, AppError> {
    text.trim()
        .parse::<T>()
        .map_err(|_| AppError::Config(format!("{what}: cannot parse {text:?} as a number")))
}

/// Parameter list with required-key and unknown-key checking.
struct ParamBag {
    owner: &'static str,
    entries: BTreeMap<String, String>,
}

impl ParamBag {
    fn new(owner: &'static str, params: Vec<(String, String)>) -> Result<Self, AppError> {
        let mut entries = BTreeMap::new();
        for (k, v) in params {
            if entries.insert(k.clone(), v).is_some() {
                return Err(AppError::Config(format!(
                    "{owner} parameter {k:?} given twice"
                )));
            }
        }
        Ok(ParamBag { owner, entries })
    }

    fn take_f64(&mut self, key: &str, default: f64) -> Result<f64, AppError> {
        match self.entries.remove(key) {
            Some(v) => parse_num(&v, &format!("{} parameter {key}", self.owner)),
            None => Ok(default),
        }
    }

    fn take_raw(&mut self, key: &str) -> Result<String, AppError> {
        self.entries.remove(key).ok_or_else(|| {
            AppError::Config(format!("{} parameter {key:?} is required", self.owner))
        })
    }

    fn finish(self) -> Result<(), AppError> {
        if let Some(key) = self.entries.keys().next() {
            return Err(AppError::Config(format!(
                "unknown {} parameter {key:?}",
                self.owner
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spec_round_trips() {
        let g = Grid::parse("0:2:5").expect("valid grid");
        assert_eq!(g.values(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        let single = Grid::parse("1:1:1").expect("single point grid");
        assert_eq!(single.values(), vec![1.0]);
    }

    #[test]
    fn bad_grids_are_rejected() {
        assert!(Grid::parse("1:2").is_err());
        assert!(Grid::parse("2:1:3").is_err());
        assert!(Grid::parse("1:2:0").is_err());
        assert!(Grid::parse("2:5:1").is_err());
    }

    #[test]
    fn family_specs_parse() {
        assert_eq!(
            FamilySpec::parse("gamma:lambda=2").expect("gamma spec"),
            FamilySpec::Gamma { lambda: 2.0 }
        );
        assert_eq!(FamilySpec::parse("coin").expect("coin spec"), FamilySpec::Coin);
        assert_eq!(
            FamilySpec::parse("normal:rho=0.5").expect("normal spec"),
            FamilySpec::Normal {
                sigma: 1.0,
                rho: 0.5,
                mu: 0.0,
                tau: 1.0
            }
        );
        assert_eq!(
            FamilySpec::parse("finite:demo/two_point.family").expect("finite spec"),
            FamilySpec::Finite {
                path: "demo/two_point.family".into()
            }
        );
        assert!(FamilySpec::parse("gamma:rate=2").is_err());
        assert!(FamilySpec::parse("weibull").is_err());
    }

    #[test]
    fn prior_specs_parse() {
        assert_eq!(
            PriorChoice::parse("gamma:shape=3,scale=0.5").expect("gamma prior"),
            PriorChoice::Gamma {
                shape: 3.0,
                scale: 0.5
            }
        );
        assert_eq!(
            PriorChoice::parse("point:at=0.7").expect("point prior"),
            PriorChoice::Point { at: 0.7 }
        );
        assert!(PriorChoice::parse("cauchy").is_err());
    }

    #[test]
    fn config_file_is_overridden_by_flags() {
        let dir = tempfile::tempdir().expect("temp dir");
        let path = dir.path().join("run.conf");
        fs::write(
            &path,
            "# demo\n[family]\nkind = gamma\nlambda = 2\n\n[run]\nseed = 7\nn = 3\n",
        )
        .expect("write config");
        let flags = FlagSet {
            config: Some(path),
            seed: Some(11),
            ..FlagSet::default()
        };
        let cfg = RunConfig::load(&flags).expect("load config");
        assert_eq!(cfg.family, Some(FamilySpec::Gamma { lambda: 2.0 }));
        assert_eq!(cfg.seed, Some(11));
        assert_eq!(cfg.n, Some(3));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().expect("temp dir");
        let path = dir.path().join("bad.conf");
        fs::write(&path, "[run]\nshoe_size = 44\n").expect("write config");
        let flags = FlagSet {
            config: Some(path.clone()),
            ..FlagSet::default()
        };
        let err = RunConfig::load(&flags).expect_err("unknown key must fail");
        assert!(matches!(err, AppError::Config(_)));
        assert!(err.to_string().contains("shoe_size"));

        fs::write(&path, "[misc]\nx = 1\n").expect("write config");
        let err = RunConfig::load(&flags).expect_err("unknown section must fail");
        assert!(err.to_string().contains("[misc]"));
    }
}
