//! Gibbs-within-Metropolis sampler with pseudo-marginal likelihood estimates.
//!
//! One iteration updates, in order: the per-year partitions (random-partition
//! mode only), β and τ² from their conjugate full conditionals, the latent
//! location effects U, and each configured Metropolis–Hastings block.
//!
//! Every likelihood estimate is kept per year together with the seed that
//! produced it. A proposal is evaluated with a fresh seed and its estimates
//! replace the retained ones only on acceptance; the retained estimate of the
//! current state is never recomputed.

pub mod diagnostics;
pub mod prior;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal};
use rayon::prelude::*;

use crate::brown_resnick::MvnConfig;
use crate::error::{Error, Result};
use crate::gaussian::StableVariogram;
use crate::likelihood::{
    year_frechet, year_loglik_cached, Dataset, ParameterState, WorkspaceCache,
};
use crate::margins::{exponential_correlation, fit_gev_site, GevField};
use crate::partitions::{gibbs_sweep_with, SetPartition};

pub use diagnostics::{effective_sample_size, quantile, split_rhat, summarize, ParamSummary};
pub use prior::{Param, PriorSpec, ScalarPrior, Transform};

/// How partitions are treated.
#[derive(Debug, Clone, PartialEq)]
pub enum PartitionMode {
    /// Partitions are known (for example from declustering) and never change.
    Fixed(Vec<SetPartition>),
    /// Partitions are latent and updated by Gibbs sweeps.
    Random,
}

/// Parameters held at their initial values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixedParams {
    pub scalars: Vec<Param>,
    pub beta: bool,
    pub tau2: bool,
    pub u: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub n_chains: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in iteration.
    pub thin: usize,
    /// Keep partitions every `partition_thin` retained iterations.
    pub partition_thin: usize,
    pub blocks: Vec<Vec<Param>>,
    /// Initial random-walk standard deviations on the unconstrained scale.
    pub proposal_scales: Vec<(Param, f64)>,
    /// Sites per latent-effect block; 0 updates all sites jointly.
    pub u_block_size: usize,
    /// Multiplier of the initial latent-effect proposal.
    pub u_scale: f64,
    /// Margin scalars also moved jointly with the first latent-effect block,
    /// on top of their own blocks. The common level of `U` trades off
    /// against α, σ and ξ, and a joint move follows that ridge.
    pub u_with: Vec<Param>,
    pub sweeps_per_iter: usize,
    pub mode: PartitionMode,
    /// Normal-cdf Monte Carlo budget per likelihood term.
    pub n_samples: usize,
    /// Skip the likelihood entirely and sample the prior.
    pub prior_only: bool,
    pub fixed: FixedParams,
    /// Adapt proposals during burn-in.
    pub adapt: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_chains: 50,
            n_iter: 15_000,
            burn_in: 5_000,
            thin: 1,
            partition_thin: 10,
            blocks: vec![
                vec![Param::Alpha],
                vec![Param::Sigma, Param::Xi],
                vec![Param::Lambda, Param::Kappa],
                vec![Param::Delta],
            ],
            proposal_scales: vec![
                (Param::Alpha, 0.005),
                (Param::Sigma, 0.03),
                (Param::Xi, 0.1),
                (Param::Lambda, 0.1),
                (Param::Kappa, 0.1),
                (Param::Delta, 0.3),
            ],
            u_block_size: 0,
            u_scale: 1.0,
            u_with: vec![Param::Alpha, Param::Sigma, Param::Xi],
            sweeps_per_iter: 1,
            mode: PartitionMode::Random,
            n_samples: 1000,
            prior_only: false,
            fixed: FixedParams::default(),
            adapt: true,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        if self.n_chains == 0 || self.n_iter == 0 {
            return bad("n_chains and n_iter must be positive");
        }
        if self.burn_in >= self.n_iter {
            return bad("burn_in must be smaller than n_iter");
        }
        if self.thin == 0 || self.partition_thin == 0 {
            return bad("thinning intervals must be positive");
        }
        if self.n_samples == 0 {
            return bad("n_samples must be positive");
        }
        let mut seen = Vec::new();
        for b in &self.blocks {
            if b.is_empty() {
                return bad("empty parameter block");
            }
            for p in b {
                if seen.contains(p) {
                    return Err(Error::ConfigInvalid(format!(
                        "{} appears in two blocks",
                        p.name()
                    )));
                }
                if self.fixed.scalars.contains(p) {
                    return Err(Error::ConfigInvalid(format!(
                        "{} is fixed but also blocked",
                        p.name()
                    )));
                }
                seen.push(*p);
            }
        }
        for p in Param::ALL {
            if !seen.contains(&p) && !self.fixed.scalars.contains(&p) {
                return Err(Error::ConfigInvalid(format!(
                    "{} is in no block and not fixed",
                    p.name()
                )));
            }
        }
        for (k, p) in self.u_with.iter().enumerate() {
            if !matches!(p, Param::Alpha | Param::Sigma | Param::Xi) || self.u_with[..k].contains(p)
            {
                return Err(Error::ConfigInvalid(format!(
                    "{} cannot join the latent-effect block",
                    p.name()
                )));
            }
        }
        if let PartitionMode::Fixed(parts) = &self.mode {
            if parts.len() != data.n_years() {
                return bad("one fixed partition is needed per year");
            }
            for (p, y) in parts.iter().zip(&data.years) {
                if p.ground() != y.sites.as_slice() {
                    return Err(Error::ConfigInvalid(format!(
                        "partition of winter {} does not match its stations",
                        y.year
                    )));
                }
            }
        }
        Ok(())
    }

    fn initial_scale(&self, p: Param) -> f64 {
        self.proposal_scales
            .iter()
            .find(|(q, _)| *q == p)
            .map_or(0.1, |(_, s)| *s)
    }

    /// Scalars joining the first latent-effect block, without fixed ones.
    pub fn u_joint_scalars(&self) -> Vec<Param> {
        self.u_with
            .iter()
            .copied()
            .filter(|p| !self.fixed.scalars.contains(p))
            .collect()
    }

    /// Site blocks of the latent-effect update.
    pub fn u_blocks(&self, d: usize) -> Vec<Vec<usize>> {
        let size = if self.u_block_size == 0 {
            d
        } else {
            self.u_block_size.min(d)
        };
        (0..d)
            .collect::<Vec<_>>()
            .chunks(size)
            .map(|c| c.to_vec())
            .collect()
    }
}

/// Everything a kernel needs besides the chain itself.
#[derive(Debug, Clone, Copy)]
pub struct Model<'a> {
    pub data: &'a Dataset,
    pub priors: &'a PriorSpec,
    pub config: &'a ChainConfig,
}

/// Current state of one chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub params: ParameterState,
    pub partitions: Vec<SetPartition>,
    /// Retained per-year log-likelihood estimates.
    year_loglik: Vec<f64>,
    /// Evaluation seed that produced each retained estimate.
    year_seeds: Vec<u64>,
    pub iteration: usize,
    pub stream: u64,
    cache: WorkspaceCache,
    n_year_evals: usize,
}

impl ChainState {
    /// Start a chain, evaluating the likelihood once with a fresh seed.
    pub fn new<R: Rng + ?Sized>(
        model: &Model<'_>,
        params: ParameterState,
        partitions: Vec<SetPartition>,
        stream: u64,
        rng: &mut R,
    ) -> Result<Self> {
        params.field.validate()?;
        if partitions.len() != model.data.n_years() {
            return Err(Error::PartitionMismatch);
        }
        let cache = WorkspaceCache::new(&model.data.sites, params.variogram)?;
        let n = model.data.n_years();
        let mut chain = Self {
            params,
            partitions,
            year_loglik: vec![0.0; n],
            year_seeds: vec![0; n],
            iteration: 0,
            stream,
            cache,
            n_year_evals: 0,
        };
        if !model.config.prior_only {
            let seed = rng.next_u64();
            let field = chain.params.field.clone();
            let ll = evaluate_years(
                model,
                &field,
                &chain.partitions,
                &mut chain.cache,
                seed,
                &mut chain.n_year_evals,
            )?
            .ok_or_else(|| {
                Error::ConfigInvalid(
                    "initial state puts observations outside the GEV support".into(),
                )
            })?;
            chain.year_loglik = ll;
            chain.year_seeds = vec![seed; n];
        }
        Ok(chain)
    }

    /// Retained log-likelihood estimate.
    pub fn loglik(&self) -> f64 {
        self.year_loglik.iter().sum()
    }

    pub fn year_loglik(&self) -> &[f64] {
        &self.year_loglik
    }

    pub fn year_seeds(&self) -> &[u64] {
        &self.year_seeds
    }

    /// Number of single-year likelihood evaluations performed so far.
    pub fn n_year_evals(&self) -> usize {
        self.n_year_evals
    }

    pub fn scalar(&self, p: Param) -> f64 {
        let f = &self.params.field;
        match p {
            Param::Alpha => f.alpha,
            Param::Sigma => f.sigma,
            Param::Xi => f.xi,
            Param::Lambda => self.params.variogram.lambda(),
            Param::Kappa => self.params.variogram.kappa(),
            Param::Delta => f.delta,
        }
    }
}

fn set_scalar(state: &mut ParameterState, p: Param, x: f64) -> Result<()> {
    match p {
        Param::Alpha => state.field.alpha = x,
        Param::Sigma => state.field.sigma = x,
        Param::Xi => state.field.xi = x,
        Param::Delta => state.field.delta = x,
        Param::Lambda => state.variogram = StableVariogram::new(x, state.variogram.kappa())?,
        Param::Kappa => state.variogram = StableVariogram::new(state.variogram.lambda(), x)?,
    }
    Ok(())
}

/// Per-year log-likelihoods for `field`, or `None` if any observation falls
/// outside the GEV support. Support is checked before any normal-cdf work.
fn evaluate_years(
    model: &Model<'_>,
    field: &GevField,
    partitions: &[SetPartition],
    cache: &mut WorkspaceCache,
    eval_seed: u64,
    counter: &mut usize,
) -> Result<Option<Vec<f64>>> {
    if model
        .data
        .years
        .iter()
        .any(|y| year_frechet(y, field).is_none())
    {
        return Ok(None);
    }
    let mut out = Vec::with_capacity(partitions.len());
    for (yr, pi) in model.data.years.iter().zip(partitions) {
        *counter += 1;
        let e = year_loglik_cached(yr, pi, field, cache, model.config.n_samples, eval_seed)?;
        if !e.ln.is_finite() {
            return Ok(None);
        }
        out.push(e.ln);
    }
    Ok(Some(out))
}

/// `ln N(U; Xβ, τ² R(δ))` up to a constant.
pub fn gp_log_density(field: &GevField, coords: &[[f64; 2]]) -> Result<f64> {
    let r = exponential_correlation(coords, field.delta);
    let chol = crate::gaussian::cholesky_with_jitter(&r)?;
    let resid = &field.u - field.prior_mean();
    let quad = resid.dot(&chol.solve(&resid)) / field.tau2;
    let ln_det = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|x| x.ln())
            .sum::<f64>()
        + field.u.len() as f64 * field.tau2.ln();
    Ok(-0.5 * (quad + ln_det))
}

fn ln_prior_block(priors: &PriorSpec, block: &[Param], values: &[f64]) -> f64 {
    block
        .iter()
        .zip(values)
        .map(|(&p, &x)| priors.scalar(p).ln_density(x) + priors.transform(p).ln_jacobian(x))
        .sum()
}

/// Metropolis–Hastings step for a block given a proposal on the natural scale.
/// Proposals outside the model support or the prior support are rejected
/// without evaluating the likelihood. Returns whether the move was accepted.
pub fn mh_block_propose<R: Rng + ?Sized>(
    chain: &mut ChainState,
    model: &Model<'_>,
    block: &[Param],
    proposal: &[f64],
    rng: &mut R,
) -> Result<bool> {
    if block.len() != proposal.len() {
        return Err(Error::InvalidParameter(
            "proposal length differs from the block".into(),
        ));
    }
    let current: Vec<f64> = block.iter().map(|&p| chain.scalar(p)).collect();
    if current == proposal {
        // A proposal equal to the current state leaves the chain unchanged.
        return Ok(true);
    }
    for (&p, &x) in block.iter().zip(proposal) {
        if !model.priors.in_support(p, x) || !model.priors.transform(p).in_range(x) {
            return Ok(false);
        }
    }
    let ln_prior_new = ln_prior_block(model.priors, block, proposal);
    if !ln_prior_new.is_finite() {
        return Ok(false);
    }
    let ln_prior_old = ln_prior_block(model.priors, block, &current);
    let mut new_state = chain.params.clone();
    for (&p, &x) in block.iter().zip(proposal) {
        set_scalar(&mut new_state, p, x)?;
    }
    let mut log_ratio = ln_prior_new - ln_prior_old;
    if block.contains(&Param::Delta) {
        let coords = model.data.sites.coords();
        log_ratio += gp_log_density(&new_state.field, coords)?
            - gp_log_density(&chain.params.field, coords)?;
    }
    let touches_likelihood = block.iter().any(|p| *p != Param::Delta) && !model.config.prior_only;
    let dependence_changed = block
        .iter()
        .any(|p| matches!(p, Param::Lambda | Param::Kappa));
    let mut new_cache = None;
    let mut new_ll = None;
    let seed = rng.next_u64();
    if touches_likelihood {
        let mut cache = if dependence_changed {
            match WorkspaceCache::new(&model.data.sites, new_state.variogram) {
                Ok(c) => c,
                Err(e) if !e.is_validation() => return Ok(false),
                Err(e) => return Err(e),
            }
        } else {
            chain.cache.clone()
        };
        let ll = match evaluate_years(
            model,
            &new_state.field,
            &chain.partitions,
            &mut cache,
            seed,
            &mut chain.n_year_evals,
        ) {
            Ok(Some(ll)) => ll,
            Ok(None) => return Ok(false),
            Err(e) if !e.is_validation() => return Ok(false),
            Err(e) => return Err(e),
        };
        log_ratio += ll.iter().sum::<f64>() - chain.loglik();
        if dependence_changed {
            new_cache = Some(cache);
        } else {
            // Keep block geometry computed during the evaluation.
            chain.cache = cache;
        }
        new_ll = Some(ll);
    }
    let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
    if accept {
        chain.params = new_state;
        if let Some(c) = new_cache {
            chain.cache = c;
        }
        if let Some(ll) = new_ll {
            chain.year_loglik = ll;
            chain.year_seeds.iter_mut().for_each(|s| *s = seed);
        }
    }
    Ok(accept)
}

/// Gaussian random-walk step on the unconstrained scale with increment
/// `factor · N(0, I)`, where `factor` is lower triangular.
pub fn mh_block_update<R: Rng + ?Sized>(
    chain: &mut ChainState,
    model: &Model<'_>,
    block: &[Param],
    factor: &DMatrix<f64>,
    rng: &mut R,
) -> Result<bool> {
    let step = factor * DVector::from_fn(block.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let proposal: Vec<f64> = block
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let t = model.priors.transform(p);
            if step[i] == 0.0 {
                chain.scalar(p)
            } else {
                t.from_unconstrained(t.to_unconstrained(chain.scalar(p)) + step[i])
            }
        })
        .collect();
    mh_block_propose(chain, model, block, &proposal, rng)
}

/// Exact draws of β and τ² from their full conditionals.
pub fn conjugate_updates<R: Rng + ?Sized>(
    chain: &mut ChainState,
    model: &Model<'_>,
    rng: &mut R,
) -> Result<()> {
    let coords = model.data.sites.coords();
    let field = &mut chain.params.field;
    let r = exponential_correlation(coords, field.delta);
    let r_chol = crate::gaussian::cholesky_with_jitter(&r)?;
    if !model.config.fixed.beta {
        let (mean, cov_chol) = beta_conditional(field, model.priors, &r_chol)?;
        let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        field.beta = mean + cov_chol.l() * z;
    }
    if !model.config.fixed.tau2 {
        let (shape, rate) = tau2_conditional(field, model.priors, &r_chol);
        let g: f64 = rng.sample(
            Gamma::new(shape, 1.0 / rate).map_err(|e| Error::InvalidParameter(e.to_string()))?,
        );
        field.tau2 = 1.0 / g;
    }
    Ok(())
}

/// Mean and Cholesky factor of the covariance of `β | U, τ², δ`.
pub fn beta_conditional(
    field: &GevField,
    priors: &PriorSpec,
    r_chol: &Cholesky<f64, Dyn>,
) -> Result<(DVector<f64>, Cholesky<f64, Dyn>)> {
    let x = &field.x;
    let rinv_x = r_chol.solve(x);
    let rinv_u = r_chol.solve(&field.u);
    let precision = &priors.beta_precision + x.transpose() * &rinv_x / field.tau2;
    let rhs = &priors.beta_precision * &priors.beta_mean + x.transpose() * rinv_u / field.tau2;
    let p_chol = Cholesky::new(precision).ok_or(Error::NotPositiveDefinite)?;
    let mean = p_chol.solve(&rhs);
    let cov = p_chol.inverse();
    let cov = (&cov + cov.transpose()) * 0.5;
    let cov_chol = Cholesky::new(cov).ok_or(Error::NotPositiveDefinite)?;
    Ok((mean, cov_chol))
}

/// Shape and rate of the inverse-gamma full conditional of τ².
pub fn tau2_conditional(
    field: &GevField,
    priors: &PriorSpec,
    r_chol: &Cholesky<f64, Dyn>,
) -> (f64, f64) {
    let resid = &field.u - field.prior_mean();
    let quad = resid.dot(&r_chol.solve(&resid));
    (
        priors.tau2_shape + 0.5 * field.u.len() as f64,
        priors.tau2_rate + 0.5 * quad,
    )
}

/// Random-walk update of the latent effects on the sites of `block`
/// together with the scalars `with` (on their unconstrained scale). The
/// increment is `factor · N(0, I)`, latent effects first.
pub fn update_random_effects<R: Rng + ?Sized>(
    chain: &mut ChainState,
    model: &Model<'_>,
    block: &[usize],
    with: &[Param],
    factor: &DMatrix<f64>,
    rng: &mut R,
) -> Result<bool> {
    let dim = block.len() + with.len();
    if factor.shape() != (dim, dim) {
        return Err(Error::InvalidParameter(
            "proposal factor does not match the block".into(),
        ));
    }
    let step = factor * DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    if step.iter().all(|s| *s == 0.0) {
        return Ok(true);
    }
    let mut state = chain.params.clone();
    for (i, &j) in block.iter().enumerate() {
        state.field.u[j] += step[i];
    }
    let current: Vec<f64> = with.iter().map(|&p| chain.scalar(p)).collect();
    let mut proposal = Vec::with_capacity(with.len());
    for (k, &p) in with.iter().enumerate() {
        let t = model.priors.transform(p);
        let x = if step[block.len() + k] == 0.0 {
            current[k]
        } else {
            t.from_unconstrained(t.to_unconstrained(current[k]) + step[block.len() + k])
        };
        if !model.priors.in_support(p, x) || !t.in_range(x) {
            return Ok(false);
        }
        set_scalar(&mut state, p, x)?;
        proposal.push(x);
    }
    let ln_prior_new = ln_prior_block(model.priors, with, &proposal);
    if !ln_prior_new.is_finite() {
        return Ok(false);
    }
    let coords = model.data.sites.coords();
    let mut log_ratio = ln_prior_new - ln_prior_block(model.priors, with, &current)
        + gp_log_density(&state.field, coords)?
        - gp_log_density(&chain.params.field, coords)?;
    let mut new_ll = None;
    let seed = rng.next_u64();
    if !model.config.prior_only {
        let mut cache = chain.cache.clone();
        match evaluate_years(
            model,
            &state.field,
            &chain.partitions,
            &mut cache,
            seed,
            &mut chain.n_year_evals,
        )? {
            None => return Ok(false),
            Some(ll) => {
                log_ratio += ll.iter().sum::<f64>() - chain.loglik();
                new_ll = Some(ll);
            }
        }
        chain.cache = cache;
    }
    let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
    if accept {
        chain.params = state;
        if let Some(ll) = new_ll {
            chain.year_loglik = ll;
            chain.year_seeds.iter_mut().for_each(|s| *s = seed);
        }
    }
    Ok(accept)
}

/// Gibbs sweeps over every year's partition. Candidate weights share one
/// fresh seed per year and sweep. A year whose partition changed gets a
/// fresh likelihood estimate; the others keep theirs.
pub fn update_partitions<R: Rng + ?Sized>(
    chain: &mut ChainState,
    model: &Model<'_>,
    rng: &mut R,
) -> Result<()> {
    let field = chain.params.field.clone();
    for (i, yr) in model.data.years.iter().enumerate() {
        if yr.sites.len() < 2 {
            continue;
        }
        let (z, _) = year_frechet(yr, &field).ok_or(Error::OutOfSupport(f64::NAN))?;
        let mut pi = chain.partitions[i].clone();
        for _ in 0..model.config.sweeps_per_iter {
            let mvn = MvnConfig {
                n_samples: model.config.n_samples,
                seed: rng.next_u64(),
            };
            let ws = chain.cache.get(&yr.sites)?;
            pi = gibbs_sweep_with(&pi, &z, ws, mvn, rng)?;
        }
        if pi != chain.partitions[i] {
            let seed = rng.next_u64();
            chain.n_year_evals += 1;
            let e = year_loglik_cached(
                yr,
                &pi,
                &field,
                &mut chain.cache,
                model.config.n_samples,
                seed,
            )?;
            chain.partitions[i] = pi;
            chain.year_loglik[i] = e.ln;
            chain.year_seeds[i] = seed;
        }
    }
    Ok(())
}

/// Random-walk proposal with Robbins–Monro scale adaptation and an
/// empirical-covariance shape, both adapted during burn-in only.
///
/// The shape is refreshed at the end of every window of fixed length from
/// all positions recorded since the first window, which is discarded.
#[derive(Debug, Clone)]
pub struct AdaptiveProposal {
    dim: usize,
    log_scale: f64,
    base: DMatrix<f64>,
    factor: DMatrix<f64>,
    target: f64,
    n: usize,
    window_end: usize,
    window_len: usize,
    w_n: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl AdaptiveProposal {
    /// `base` is a lower-triangular initial factor.
    pub fn new(base: DMatrix<f64>) -> Self {
        let dim = base.nrows();
        let target = match dim {
            1 => 0.44,
            2..=4 => 0.35,
            _ => 0.234,
        };
        let first = 25 * dim.max(2);
        Self {
            dim,
            log_scale: 0.0,
            factor: base.clone(),
            base,
            target,
            n: 0,
            window_end: first,
            window_len: first,
            w_n: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
        }
    }

    pub fn factor(&self) -> DMatrix<f64> {
        &self.factor * self.log_scale.exp()
    }

    /// Record the outcome of a step and the current position (unconstrained).
    pub fn adapt(&mut self, accepted: bool, position: &DVector<f64>) {
        self.n += 1;
        let gain = 1.0 / (self.n as f64 + 10.0).powf(0.6);
        self.log_scale += gain * (if accepted { 1.0 } else { 0.0 } - self.target) * 2.0;
        self.log_scale = self.log_scale.clamp(-10.0, 10.0);
        self.w_n += 1;
        let delta = position - &self.mean;
        self.mean += &delta / self.w_n as f64;
        self.m2 += &delta * (position - &self.mean).transpose();
        if self.n < self.window_end {
            return;
        }
        let w = self.w_n as f64;
        let cov = &self.m2 / (w - 1.0);
        // Shrink towards the diagonal while few positions are pooled.
        let shrink = 5.0 * self.dim as f64 / (w + 5.0 * self.dim as f64);
        let diag = DMatrix::from_diagonal(&cov.diagonal());
        let cov = cov * (1.0 - shrink) + diag * shrink;
        let sd = 2.38 / (self.dim as f64).sqrt();
        let floor = self.base.diagonal().map(|b| (b * 1e-3).powi(2) + 1e-12);
        if let Some(c) = Cholesky::new(cov * (sd * sd) + DMatrix::from_diagonal(&floor)) {
            self.factor = c.l();
            self.log_scale = 0.0;
        }
        self.window_end = self.n + self.window_len;
        // The first window only escapes the starting point; later windows pool.
        if self.n == self.window_len {
            self.w_n = 0;
            self.mean.fill(0.0);
            self.m2.fill(0.0);
        }
    }
}

/// Rough starting values from per-station GEV fits of the negated minima.
pub fn initial_state(data: &Dataset) -> Result<ParameterState> {
    let d = data.n_sites();
    let mut per_site: Vec<Vec<f64>> = vec![Vec::new(); d];
    for y in &data.years {
        for (&s, &v) in y.sites.iter().zip(&y.minima) {
            per_site[s].push(-v);
        }
    }
    let mut u = DVector::zeros(d);
    let mut sigmas = Vec::with_capacity(d);
    for (j, xs) in per_site.iter().enumerate() {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0))
            .sqrt()
            .max(0.1);
        let (mu, sigma) = match fit_gev_site(xs) {
            Ok(f) if xs.len() >= 10 && f.params.sigma.is_finite() => (f.params.mu, f.params.sigma),
            _ => {
                let s = sd * 6f64.sqrt() / std::f64::consts::PI;
                (mean - 0.5772 * s, s)
            }
        };
        u[j] = mu;
        sigmas.push(sigma);
    }
    sigmas.sort_by(|a, b| a.total_cmp(b));
    let sigma = sigmas[d / 2];
    let x = data.x.clone();
    let beta = match (x.transpose() * &x).try_inverse() {
        Some(inv) => inv * x.transpose() * &u,
        None => DVector::zeros(x.ncols()),
    };
    let resid = &u - &x * &beta;
    let tau2 = (resid.norm_squared() / d as f64).max(0.1);
    let mut dists = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            dists.push(data.sites.distance(i, j));
        }
    }
    dists.sort_by(|a, b| a.total_cmp(b));
    let median = if dists.is_empty() {
        100.0
    } else {
        dists[dists.len() / 2].max(1.0)
    };
    let field = GevField {
        beta,
        u,
        alpha: 0.0,
        sigma,
        xi: 0.0,
        tau2,
        delta: median,
        x,
    };
    Ok(ParameterState {
        field,
        variogram: StableVariogram::new(median, 1.0)?,
    })
}

/// Retained draws of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub chain: usize,
    pub iterations: Vec<usize>,
    /// One row per retained iteration, columns as in `PosteriorSamples::names`.
    pub rows: Vec<Vec<f64>>,
    pub partitions: Vec<(usize, Vec<SetPartition>)>,
    /// Post-burn-in acceptance rate of each kernel.
    pub acceptance: Vec<(String, f64)>,
    pub n_year_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub names: Vec<String>,
    pub chains: Vec<ChainOutput>,
}

impl PosteriorSamples {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Per-chain draws of one column.
    pub fn chain_draws(&self, col: usize) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| c.rows.iter().map(|r| r[col]).collect())
            .collect()
    }

    pub fn merged(&self, col: usize) -> Vec<f64> {
        self.chains
            .iter()
            .flat_map(|c| c.rows.iter().map(move |r| r[col]))
            .collect()
    }

    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(|c| c.rows.len()).sum()
    }

    pub fn summary(&self) -> Vec<ParamSummary> {
        (0..self.names.len())
            .map(|c| summarize(&self.names[c], &self.chain_draws(c)))
            .collect()
    }
}

/// Column names of the sample table.
pub fn sample_names(data: &Dataset) -> Vec<String> {
    let mut names: Vec<String> = Param::ALL.iter().map(|p| p.name().to_string()).collect();
    names.push("tau2".into());
    names.extend((1..=data.x.ncols()).map(|k| format!("beta_{k}")));
    names.extend((1..=data.n_sites()).map(|k| format!("U_{k}")));
    names.push("loglik".into());
    names
}

fn sample_row(chain: &ChainState) -> Vec<f64> {
    let f = &chain.params.field;
    let mut row: Vec<f64> = Param::ALL.iter().map(|&p| chain.scalar(p)).collect();
    row.push(f.tau2);
    row.extend(f.beta.iter());
    row.extend(f.u.iter());
    row.push(chain.loglik());
    row
}

fn unconstrained(chain: &ChainState, priors: &PriorSpec, block: &[Param]) -> DVector<f64> {
    DVector::from_iterator(
        block.len(),
        block
            .iter()
            .map(|&p| priors.transform(p).to_unconstrained(chain.scalar(p))),
    )
}

/// Run one chain from `init` on the random stream `stream`.
pub fn run_chain(
    model: &Model<'_>,
    init: &ParameterState,
    stream: u64,
    master_seed: u64,
) -> Result<ChainOutput> {
    let cfg = model.config;
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    let start = disperse(model, init, stream, &mut rng);
    let parts = match &cfg.mode {
        PartitionMode::Fixed(p) => p.clone(),
        PartitionMode::Random => model
            .data
            .years
            .iter()
            .map(|y| SetPartition::singletons(&y.sites))
            .collect(),
    };
    let mut chain = ChainState::new(model, start, parts, stream, &mut rng)?;

    let mut blocks: Vec<(Vec<Param>, AdaptiveProposal)> = cfg
        .blocks
        .iter()
        .map(|b| {
            let diag = DVector::from_iterator(b.len(), b.iter().map(|&p| cfg.initial_scale(p)));
            (
                b.clone(),
                AdaptiveProposal::new(DMatrix::from_diagonal(&diag)),
            )
        })
        .collect();
    let u_blocks = cfg.u_blocks(model.data.n_sites());
    let joint = cfg.u_joint_scalars();
    let u_with = |k: usize| if k == 0 { joint.as_slice() } else { &[] };
    let mut u_props: Vec<AdaptiveProposal> = u_blocks
        .iter()
        .enumerate()
        .map(|(k, b)| AdaptiveProposal::new(u_initial_factor(model, &chain, b, u_with(k))))
        .collect();
    let n_kernels = blocks.len() + u_blocks.len();
    let mut accepts = vec![0usize; n_kernels];
    let mut tries = vec![0usize; n_kernels];

    let mut out = ChainOutput {
        chain: stream as usize,
        iterations: Vec::new(),
        rows: Vec::new(),
        partitions: Vec::new(),
        acceptance: Vec::new(),
        n_year_evals: 0,
    };
    for it in 0..cfg.n_iter {
        let adapting = cfg.adapt && it < cfg.burn_in;
        if matches!(cfg.mode, PartitionMode::Random) && !cfg.prior_only {
            update_partitions(&mut chain, model, &mut rng)?;
        }
        conjugate_updates(&mut chain, model, &mut rng)?;
        if !cfg.fixed.u {
            for (k, (b, prop)) in u_blocks.iter().zip(u_props.iter_mut()).enumerate() {
                let acc = update_random_effects(
                    &mut chain,
                    model,
                    b,
                    u_with(k),
                    &prop.factor(),
                    &mut rng,
                )?;
                if adapting {
                    let u = b.iter().map(|&j| chain.params.field.u[j]);
                    let pos = DVector::from_iterator(
                        b.len() + u_with(k).len(),
                        u.chain(
                            unconstrained(&chain, model.priors, u_with(k))
                                .iter()
                                .copied(),
                        ),
                    );
                    prop.adapt(acc, &pos);
                }
                if it >= cfg.burn_in {
                    tries[blocks.len() + k] += 1;
                    accepts[blocks.len() + k] += acc as usize;
                }
            }
        }
        for (k, (b, prop)) in blocks.iter_mut().enumerate() {
            let acc = mh_block_update(&mut chain, model, b, &prop.factor(), &mut rng)?;
            if adapting {
                let pos = unconstrained(&chain, model.priors, b);
                prop.adapt(acc, &pos);
            }
            if it >= cfg.burn_in {
                tries[k] += 1;
                accepts[k] += acc as usize;
            }
        }
        chain.iteration = it + 1;
        if it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 {
            let kept = out.rows.len();
            out.iterations.push(it);
            out.rows.push(sample_row(&chain));
            if kept % cfg.partition_thin == 0 {
                out.partitions.push((it, chain.partitions.clone()));
            }
        }
    }
    let mut names: Vec<String> = blocks
        .iter()
        .map(|(b, _)| b.iter().map(|p| p.name()).collect::<Vec<_>>().join("+"))
        .collect();
    names.extend(u_blocks.iter().enumerate().map(|(k, b)| {
        let mut n = format!("U[{}..={}]", b[0] + 1, b[b.len() - 1] + 1);
        for p in u_with(k) {
            n.push('+');
            n.push_str(p.name());
        }
        n
    }));
    out.acceptance = names
        .into_iter()
        .enumerate()
        .map(|(k, n)| {
            (
                n,
                if tries[k] > 0 {
                    accepts[k] as f64 / tries[k] as f64
                } else {
                    f64::NAN
                },
            )
        })
        .collect();
    out.n_year_evals = chain.n_year_evals;
    Ok(out)
}

/// Initial latent-effect proposal: roughly the posterior spread of each
/// station's location, `σ/√n_j`.
fn u_initial_factor(
    model: &Model<'_>,
    chain: &ChainState,
    block: &[usize],
    with: &[Param],
) -> DMatrix<f64> {
    let mut counts = vec![0usize; model.data.n_sites()];
    for y in &model.data.years {
        for &s in &y.sites {
            counts[s] += 1;
        }
    }
    let dim = block.len() + with.len();
    let scale = model.config.u_scale * 2.38 / (dim as f64).sqrt();
    let u = block.iter().map(|&j| {
        if model.config.prior_only {
            scale * chain.params.field.tau2.sqrt()
        } else {
            scale * chain.params.field.sigma / (counts[j].max(1) as f64).sqrt()
        }
    });
    let scalars = with
        .iter()
        .map(|&p| model.config.initial_scale(p) / (dim as f64).sqrt());
    DMatrix::from_diagonal(&DVector::from_iterator(dim, u.chain(scalars)))
}

/// Jitter the starting point per chain, keeping it inside the support.
fn disperse<R: Rng + ?Sized>(
    model: &Model<'_>,
    init: &ParameterState,
    stream: u64,
    rng: &mut R,
) -> ParameterState {
    if stream == 0 {
        return init.clone();
    }
    for _ in 0..50 {
        let mut s = init.clone();
        let mut ok = true;
        for p in Param::ALL {
            if model.config.fixed.scalars.contains(&p) {
                continue;
            }
            let t = model.priors.transform(p);
            let x = match p {
                Param::Alpha => s.field.alpha,
                Param::Sigma => s.field.sigma,
                Param::Xi => s.field.xi,
                Param::Lambda => s.variogram.lambda(),
                Param::Kappa => s.variogram.kappa(),
                Param::Delta => s.field.delta,
            };
            let jitter = match p {
                Param::Alpha => 0.01,
                Param::Xi => 0.3,
                _ => 0.2,
            };
            let y = t.from_unconstrained(
                t.to_unconstrained(x) + jitter * rng.sample::<f64, _>(StandardNormal),
            );
            ok &= set_scalar(&mut s, p, y).is_ok()
                && model.priors.scalar(p).ln_density(y).is_finite();
        }
        if !model.config.fixed.u {
            for u in s.field.u.iter_mut() {
                *u += 0.3 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        if ok
            && (model.config.prior_only
                || model
                    .data
                    .years
                    .iter()
                    .all(|y| year_frechet(y, &s.field).is_some()))
        {
            return s;
        }
    }
    init.clone()
}

/// Run independent chains in parallel and collect their retained draws.
pub fn run_chains(
    config: &ChainConfig,
    data: &Dataset,
    priors: &PriorSpec,
    init: Option<&ParameterState>,
    master_seed: u64,
) -> Result<PosteriorSamples> {
    priors.validate()?;
    config.validate(data)?;
    if priors.beta_mean.len() != data.x.ncols() {
        return Err(Error::ConfigInvalid(
            "beta prior length differs from the covariate count".into(),
        ));
    }
    let start = match init {
        Some(s) => s.clone(),
        None => initial_state(data)?,
    };
    let model = Model {
        data,
        priors,
        config,
    };
    let chains: Vec<ChainOutput> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(&model, &start, c as u64, master_seed))
        .collect::<Result<_>>()?;
    Ok(PosteriorSamples {
        names: sample_names(data),
        chains,
    })
}
