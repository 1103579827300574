//! Flat `key = value` run configuration.
//!
//! Lines starting with `#` are comments; keys are made of letters, digits,
//! `_` and `.`. Every run writes its fully resolved configuration next to
//! its outputs, and parsing that file gives back the same settings.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use maxstable::gaussian::StableVariogram;
use maxstable::likelihood::ParameterState;
use maxstable::margins::GevField;
use maxstable::mcmc::{ChainConfig, Param, PartitionMode, PriorSpec, ScalarPrior};
use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Raw key/value pairs in key order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl FromStr for KeyValues {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in s.lines().enumerate() {
            let line = i + 1;
            let text = raw.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let Some((k, v)) = text.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    message: "expected key = value".into(),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty()
                || !k
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
            {
                return Err(Error::Parse {
                    line,
                    message: format!("invalid key {k:?}"),
                });
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Parse {
                    line,
                    message: format!("key {k:?} set twice"),
                });
            }
        }
        Ok(Self { entries })
    }
}

impl fmt::Display for KeyValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

impl KeyValues {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl fmt::Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn invalid(key: &str, v: &str) -> Error {
    Error::ConfigInvalid(format!("{key}: cannot use {v:?}"))
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| invalid(key, v))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_value(key, s.trim())).collect()
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// `normal(m,s)`, `lognormal(m,s)` or `uniform(a,b)`.
pub fn parse_prior(key: &str, v: &str) -> Result<ScalarPrior> {
    let (name, rest) = v.split_once('(').ok_or_else(|| invalid(key, v))?;
    let args = rest.strip_suffix(')').ok_or_else(|| invalid(key, v))?;
    let a: Vec<f64> = parse_list(key, args)?;
    if a.len() != 2 {
        return Err(invalid(key, v));
    }
    let p = match name.trim() {
        "normal" => ScalarPrior::Normal {
            mean: a[0],
            sd: a[1],
        },
        "lognormal" => ScalarPrior::LogNormal {
            mean_log: a[0],
            sd_log: a[1],
        },
        "uniform" => ScalarPrior::Uniform { lo: a[0], hi: a[1] },
        _ => return Err(invalid(key, v)),
    };
    p.validate()?;
    Ok(p)
}

pub fn format_prior(p: &ScalarPrior) -> String {
    match *p {
        ScalarPrior::Normal { mean, sd } => format!("normal({mean},{sd})"),
        ScalarPrior::LogNormal { mean_log, sd_log } => format!("lognormal({mean_log},{sd_log})"),
        ScalarPrior::Uniform { lo, hi } => format!("uniform({lo},{hi})"),
    }
}

/// `first:last` (inclusive) or a comma list.
fn parse_years(key: &str, v: &str) -> Result<Vec<i32>> {
    if let Some((a, b)) = v.split_once(':') {
        let (a, b): (i32, i32) = (parse_value(key, a.trim())?, parse_value(key, b.trim())?);
        if b < a || b - a > 10_000 {
            return Err(invalid(key, v));
        }
        return Ok((a..=b).collect());
    }
    parse_list(key, v)
}

fn format_years(ys: &[i32]) -> String {
    if ys.len() > 2 && ys.windows(2).all(|w| w[1] == w[0] + 1) {
        format!("{}:{}", ys[0], ys[ys.len() - 1])
    } else {
        join(ys)
    }
}

/// Blocks as `alpha|sigma,xi|lambda,kappa|delta`.
fn parse_blocks(key: &str, v: &str) -> Result<Vec<Vec<Param>>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split('|')
        .map(|b| {
            b.split(',')
                .map(|p| Param::parse(p.trim()).map_err(|_| invalid(key, v)))
                .collect()
        })
        .collect()
}

fn format_blocks(bs: &[Vec<Param>]) -> String {
    bs.iter()
        .map(|b| b.iter().map(|p| p.name()).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("|")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    M2,
    M3,
}

impl FromStr for FitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m2" => Ok(FitMode::M2),
            "m3" => Ok(FitMode::M3),
            _ => Err(invalid("fit.mode", s)),
        }
    }
}

impl fmt::Display for FitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitMode::M2 => "m2",
            FitMode::M3 => "m3",
        })
    }
}

/// Parameters used by `simulate`.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub alpha: f64,
    pub sigma: f64,
    pub xi: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub delta: f64,
    pub tau2: f64,
    /// Intercept first, then one coefficient per covariate.
    pub beta: Vec<f64>,
}

impl Truth {
    /// Model state with `U = Xβ`.
    pub fn state(&self, x: &DMatrix<f64>) -> Result<ParameterState> {
        if self.beta.len() != x.ncols() {
            return Err(Error::ConfigInvalid(format!(
                "truth.beta needs {} values",
                x.ncols()
            )));
        }
        let beta = DVector::from_vec(self.beta.clone());
        let field = GevField {
            u: x * &beta,
            beta,
            alpha: self.alpha,
            sigma: self.sigma,
            xi: self.xi,
            tau2: self.tau2,
            delta: self.delta,
            x: x.clone(),
        };
        field.validate()?;
        Ok(ParameterState {
            field,
            variogram: StableVariogram::new(self.lambda, self.kappa)?,
        })
    }
}

/// Fully resolved settings of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub stations: Option<String>,
    pub minima: Option<String>,
    pub partitions: Option<String>,
    pub samples: Option<String>,
    pub partition_draws: Option<String>,
    /// Covariate columns entering the design matrix; empty means all.
    pub covariates: Vec<String>,
    pub mode: FitMode,
    pub chain: ChainConfig,
    pub priors: PriorSpec,
    pub lag: u32,
    pub max_km: Option<f64>,
    pub truth: Truth,
    pub winters: Vec<i32>,
    pub missing_prob: f64,
    pub event_spread: u32,
    pub grid_resolution: f64,
    pub grid_points: Option<String>,
    pub predict_years: Vec<i32>,
    pub threshold: f64,
    pub n_draws: usize,
    pub n_sims: usize,
    /// Station groups by 1-based index.
    pub groups: BTreeMap<String, Vec<usize>>,
    pub bins: Vec<f64>,
    pub n_boot: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: 1,
            stations: None,
            minima: None,
            partitions: None,
            samples: None,
            partition_draws: None,
            covariates: Vec::new(),
            mode: FitMode::M3,
            chain: ChainConfig::default(),
            priors: PriorSpec::vague(1),
            lag: maxstable::declustering::DEFAULT_LAG,
            max_km: None,
            truth: Truth {
                alpha: -0.06,
                sigma: 3.5,
                xi: -0.1,
                lambda: 300.0,
                kappa: 1.0,
                delta: 250.0,
                tau2: 0.1,
                beta: vec![35.0],
            },
            winters: (1975..=2024).collect(),
            missing_prob: 0.0,
            event_spread: 1,
            grid_resolution: 10.0,
            grid_points: None,
            predict_years: vec![1980, 2016, 2030],
            threshold: maxstable::margins::DEFAULT_THRESHOLD,
            n_draws: 200,
            n_sims: 1000,
            groups: BTreeMap::new(),
            bins: vec![0.0, 50.0, 100.0, 200.0, 300.0, 400.0, 600.0, 1000.0],
            n_boot: 200,
        }
    }
}

const PARAM_KEYS: [&str; 6] = ["alpha", "sigma", "xi", "lambda", "kappa", "delta"];

impl Settings {
    /// Apply `kv` over the defaults. Unknown keys are errors.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut s = Settings::default();
        let mut beta_precision: Option<f64> = None;
        let mut beta_mean: Option<Vec<f64>> = None;
        for key in kv.keys() {
            let v = kv.get(key).unwrap_or_default();
            let opt = |v: &str| {
                if v.is_empty() {
                    None
                } else {
                    Some(v.to_string())
                }
            };
            match key {
                "seed" => s.seed = parse_value(key, v)?,
                "data.stations" => s.stations = opt(v),
                "data.minima" => s.minima = opt(v),
                "data.partitions" => s.partitions = opt(v),
                "data.samples" => s.samples = opt(v),
                "data.partition_draws" => s.partition_draws = opt(v),
                "data.covariates" => {
                    s.covariates = if v.is_empty() {
                        Vec::new()
                    } else {
                        v.split(',').map(|c| c.trim().to_string()).collect()
                    }
                }
                "fit.mode" => s.mode = v.parse()?,
                "mcmc.chains" => s.chain.n_chains = parse_value(key, v)?,
                "mcmc.iterations" => s.chain.n_iter = parse_value(key, v)?,
                "mcmc.burn_in" => s.chain.burn_in = parse_value(key, v)?,
                "mcmc.thin" => s.chain.thin = parse_value(key, v)?,
                "mcmc.partition_thin" => s.chain.partition_thin = parse_value(key, v)?,
                "mcmc.blocks" => s.chain.blocks = parse_blocks(key, v)?,
                "mcmc.u_block_size" => s.chain.u_block_size = parse_value(key, v)?,
                "mcmc.u_scale" => s.chain.u_scale = parse_value(key, v)?,
                "mcmc.u_with" => {
                    s.chain.u_with = if v.is_empty() {
                        Vec::new()
                    } else {
                        v.split(',')
                            .map(|p| Param::parse(p.trim()).map_err(|_| invalid(key, v)))
                            .collect::<Result<_>>()?
                    }
                }
                "mcmc.sweeps" => s.chain.sweeps_per_iter = parse_value(key, v)?,
                "mcmc.mvn_samples" => s.chain.n_samples = parse_value(key, v)?,
                "mcmc.adapt" => s.chain.adapt = parse_value(key, v)?,
                "mcmc.prior_only" => s.chain.prior_only = parse_value(key, v)?,
                "mcmc.fixed" => {
                    s.chain.fixed.scalars = if v.is_empty() {
                        Vec::new()
                    } else {
                        v.split(',')
                            .map(|p| Param::parse(p.trim()).map_err(|_| invalid(key, v)))
                            .collect::<Result<_>>()?
                    }
                }
                "prior.beta_precision" => beta_precision = Some(parse_value(key, v)?),
                "prior.beta_mean" => beta_mean = Some(parse_list(key, v)?),
                "prior.tau2_shape" => s.priors.tau2_shape = parse_value(key, v)?,
                "prior.tau2_rate" => s.priors.tau2_rate = parse_value(key, v)?,
                "decluster.lag" => s.lag = parse_value(key, v)?,
                "decluster.max_km" => {
                    s.max_km = if v.is_empty() {
                        None
                    } else {
                        Some(parse_value(key, v)?)
                    }
                }
                "truth.tau2" => s.truth.tau2 = parse_value(key, v)?,
                "truth.beta" => s.truth.beta = parse_list(key, v)?,
                "simulate.winters" => s.winters = parse_years(key, v)?,
                "simulate.missing_prob" => s.missing_prob = parse_value(key, v)?,
                "simulate.event_spread" => s.event_spread = parse_value(key, v)?,
                "grid.resolution" => s.grid_resolution = parse_value(key, v)?,
                "grid.points" => s.grid_points = opt(v),
                "predict.years" => s.predict_years = parse_years(key, v)?,
                "predict.threshold" => s.threshold = parse_value(key, v)?,
                "predict.draws" => s.n_draws = parse_value(key, v)?,
                "predict.sims" => s.n_sims = parse_value(key, v)?,
                "diagnose.bins" => s.bins = parse_list(key, v)?,
                "diagnose.bootstrap" => s.n_boot = parse_value(key, v)?,
                _ => {
                    if let Some(name) = key.strip_prefix("group.") {
                        let idx: Vec<usize> = parse_list(key, v)?;
                        if name.is_empty() || idx.is_empty() || idx.contains(&0) {
                            return Err(invalid(key, v));
                        }
                        s.groups.insert(name.to_string(), idx);
                    } else if let Some(p) = key
                        .strip_prefix("prior.")
                        .filter(|p| PARAM_KEYS.contains(p))
                    {
                        let prior = parse_prior(key, v)?;
                        match Param::parse(p)? {
                            Param::Alpha => s.priors.alpha = prior,
                            Param::Sigma => s.priors.sigma = prior,
                            Param::Xi => s.priors.xi = prior,
                            Param::Lambda => s.priors.lambda = prior,
                            Param::Kappa => s.priors.kappa = prior,
                            Param::Delta => s.priors.delta = prior,
                        }
                    } else if let Some(p) = key
                        .strip_prefix("mcmc.scale.")
                        .filter(|p| PARAM_KEYS.contains(p))
                    {
                        let p = Param::parse(p)?;
                        let x: f64 = parse_value(key, v)?;
                        s.chain.proposal_scales.retain(|(q, _)| *q != p);
                        s.chain.proposal_scales.push((p, x));
                    } else if let Some(p) = key
                        .strip_prefix("truth.")
                        .filter(|p| PARAM_KEYS.contains(p))
                    {
                        let x: f64 = parse_value(key, v)?;
                        match Param::parse(p)? {
                            Param::Alpha => s.truth.alpha = x,
                            Param::Sigma => s.truth.sigma = x,
                            Param::Xi => s.truth.xi = x,
                            Param::Lambda => s.truth.lambda = x,
                            Param::Kappa => s.truth.kappa = x,
                            Param::Delta => s.truth.delta = x,
                        }
                    } else {
                        return Err(Error::ConfigInvalid(format!("unknown key {key:?}")));
                    }
                }
            }
        }
        s.chain
            .proposal_scales
            .sort_by_key(|(p, _)| Param::ALL.iter().position(|q| q == p));
        let p = beta_mean
            .as_ref()
            .map_or(s.priors.beta_mean.len(), Vec::len);
        s.priors.beta_mean = DVector::from_vec(beta_mean.unwrap_or_else(|| vec![0.0; p]));
        let prec = beta_precision.unwrap_or(s.priors.beta_precision[(0, 0)]);
        s.priors.beta_precision = DMatrix::from_diagonal_element(p, p, prec);
        if !(0.0..1.0).contains(&s.missing_prob) {
            return Err(invalid(
                "simulate.missing_prob",
                &s.missing_prob.to_string(),
            ));
        }
        if !(s.grid_resolution > 0.0) {
            return Err(invalid("grid.resolution", &s.grid_resolution.to_string()));
        }
        if s.bins.len() < 2 || s.bins.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::ConfigInvalid(
                "diagnose.bins must be at least two increasing edges".into(),
            ));
        }
        Ok(s)
    }

    /// Adapt the β prior to `p` design columns, keeping a common precision.
    pub fn fit_beta_prior(&mut self, p: usize) {
        if self.priors.beta_mean.len() != p {
            let prec = self
                .priors
                .beta_precision
                .get((0, 0))
                .copied()
                .unwrap_or(1e-4);
            self.priors.beta_mean = DVector::zeros(p);
            self.priors.beta_precision = DMatrix::from_diagonal_element(p, p, prec);
        }
    }

    /// Every setting as key/value pairs.
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        let c = &self.chain;
        kv.set("seed", self.seed);
        for (k, v) in [
            ("data.stations", &self.stations),
            ("data.minima", &self.minima),
            ("data.partitions", &self.partitions),
            ("data.samples", &self.samples),
            ("data.partition_draws", &self.partition_draws),
            ("grid.points", &self.grid_points),
        ] {
            kv.set(k, v.clone().unwrap_or_default());
        }
        kv.set("data.covariates", self.covariates.join(","));
        kv.set("fit.mode", self.mode);
        kv.set("mcmc.chains", c.n_chains);
        kv.set("mcmc.iterations", c.n_iter);
        kv.set("mcmc.burn_in", c.burn_in);
        kv.set("mcmc.thin", c.thin);
        kv.set("mcmc.partition_thin", c.partition_thin);
        kv.set("mcmc.blocks", format_blocks(&c.blocks));
        kv.set("mcmc.u_block_size", c.u_block_size);
        kv.set("mcmc.u_scale", c.u_scale);
        kv.set(
            "mcmc.u_with",
            c.u_with
                .iter()
                .map(|p| p.name())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv.set("mcmc.sweeps", c.sweeps_per_iter);
        kv.set("mcmc.mvn_samples", c.n_samples);
        kv.set("mcmc.adapt", c.adapt);
        kv.set("mcmc.prior_only", c.prior_only);
        kv.set(
            "mcmc.fixed",
            c.fixed
                .scalars
                .iter()
                .map(|p| p.name())
                .collect::<Vec<_>>()
                .join(","),
        );
        for (p, x) in &c.proposal_scales {
            kv.set(&format!("mcmc.scale.{}", p.name()), x);
        }
        let pr = &self.priors;
        kv.set("prior.beta_mean", join(pr.beta_mean.as_slice()));
        kv.set(
            "prior.beta_precision",
            pr.beta_precision.get((0, 0)).copied().unwrap_or(0.0),
        );
        kv.set("prior.tau2_shape", pr.tau2_shape);
        kv.set("prior.tau2_rate", pr.tau2_rate);
        for p in Param::ALL {
            kv.set(&format!("prior.{}", p.name()), format_prior(&pr.scalar(p)));
        }
        kv.set("decluster.lag", self.lag);
        kv.set(
            "decluster.max_km",
            self.max_km.map_or(String::new(), |m| m.to_string()),
        );
        let t = &self.truth;
        for (p, x) in [
            ("alpha", t.alpha),
            ("sigma", t.sigma),
            ("xi", t.xi),
            ("lambda", t.lambda),
            ("kappa", t.kappa),
            ("delta", t.delta),
            ("tau2", t.tau2),
        ] {
            kv.set(&format!("truth.{p}"), x);
        }
        kv.set("truth.beta", join(&t.beta));
        kv.set("simulate.winters", format_years(&self.winters));
        kv.set("simulate.missing_prob", self.missing_prob);
        kv.set("simulate.event_spread", self.event_spread);
        kv.set("grid.resolution", self.grid_resolution);
        kv.set("predict.years", join(&self.predict_years));
        kv.set("predict.threshold", self.threshold);
        kv.set("predict.draws", self.n_draws);
        kv.set("predict.sims", self.n_sims);
        for (name, idx) in &self.groups {
            kv.set(&format!("group.{name}"), join(idx));
        }
        kv.set("diagnose.bins", join(&self.bins));
        kv.set("diagnose.bootstrap", self.n_boot);
        kv
    }

    /// Chain configuration with the partition mode of the fit.
    pub fn chain_config(
        &self,
        fixed_partitions: Option<Vec<maxstable::partitions::SetPartition>>,
    ) -> ChainConfig {
        let mut c = self.chain.clone();
        c.mode = match (self.mode, fixed_partitions) {
            (FitMode::M2, Some(p)) => PartitionMode::Fixed(p),
            _ => PartitionMode::Random,
        };
        c
    }
}

impl FromStr for Settings {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_key_values(&s.parse()?)
    }
}

impl fmt::Display for Settings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_key_values())
    }
}
