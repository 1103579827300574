//! GEV margins, the hierarchical location surface and forecast quantities.
//!
//! Minima are stored as observed. The GEV model is placed on the negated
//! minima `x = −y`, so every function taking an observed minimum negates it
//! first and every forecast is negated back before it is returned.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Below this magnitude the shape is treated as zero (Gumbel branch).
pub const GUMBEL_EPS: f64 = 1e-8;

/// Euler–Mascheroni constant, the Gumbel mean offset.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Default exceedance threshold in °C.
pub const DEFAULT_THRESHOLD: f64 = -36.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GevParams {
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GevKind {
    Cdf,
    Pdf,
    Quantile,
}

impl GevParams {
    pub fn new(mu: f64, sigma: f64, xi: f64) -> Result<Self> {
        if !(sigma > 0.0) || !mu.is_finite() || !xi.is_finite() || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "GEV needs finite parameters and sigma > 0, got ({mu}, {sigma}, {xi})"
            )));
        }
        Ok(Self { mu, sigma, xi })
    }

    fn is_gumbel(&self) -> bool {
        self.xi.abs() < GUMBEL_EPS
    }

    /// `1 + ξ(x−μ)/σ`, or `None` outside the support.
    fn bracket(&self, x: f64) -> Option<f64> {
        let w = 1.0 + self.xi * (x - self.mu) / self.sigma;
        (w > 0.0).then_some(w)
    }

    /// Lower and upper support endpoints.
    pub fn support(&self) -> (f64, f64) {
        if self.is_gumbel() {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else if self.xi > 0.0 {
            (self.mu - self.sigma / self.xi, f64::INFINITY)
        } else {
            (f64::NEG_INFINITY, self.mu - self.sigma / self.xi)
        }
    }

    /// The unit-Fréchet transform `{1 + ξ(x−μ)/σ}^{1/ξ}` and its derivative in `x`.
    pub fn frechet(&self, x: f64) -> Result<(f64, f64)> {
        if self.is_gumbel() {
            let f = ((x - self.mu) / self.sigma).exp();
            return if f > 0.0 && f.is_finite() {
                Ok((f, f / self.sigma))
            } else {
                Err(Error::OutOfSupport(x))
            };
        }
        let w = self.bracket(x).ok_or(Error::OutOfSupport(x))?;
        let f = w.powf(1.0 / self.xi);
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::OutOfSupport(x));
        }
        Ok((f, f / (w * self.sigma)))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if self.is_gumbel() {
            return (-(-(x - self.mu) / self.sigma).exp()).exp();
        }
        match self.bracket(x) {
            Some(w) => (-w.powf(-1.0 / self.xi)).exp(),
            None if self.xi > 0.0 => 0.0,
            None => 1.0,
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match self.frechet(x) {
            Ok((f, fp)) => -2.0 * f.ln() - 1.0 / f + fp.ln(),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "quantile level {p} outside (0, 1)"
            )));
        }
        let l = -p.ln();
        Ok(if self.is_gumbel() {
            self.mu - self.sigma * l.ln()
        } else {
            self.mu + self.sigma * (l.powf(-self.xi) - 1.0) / self.xi
        })
    }

    /// Mean, finite for `ξ < 1`.
    pub fn mean(&self) -> Result<f64> {
        if self.xi >= 1.0 {
            return Err(Error::ShapeTooLarge(self.xi));
        }
        Ok(self.mu + self.sigma * gamma_offset(self.xi))
    }

    /// Draw by inversion from a uniform variate in (0, 1).
    pub fn sample_from_uniform(&self, u: f64) -> f64 {
        self.quantile(u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
            .expect("clamped level")
    }
}

/// `{Γ(1−ξ) − 1}/ξ`, continuous through `ξ = 0`.
fn gamma_offset(xi: f64) -> f64 {
    if xi.abs() < 1e-6 {
        // Series: γ + ξ(γ²/2 + π²/12).
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        EULER_GAMMA + xi * (EULER_GAMMA * EULER_GAMMA / 2.0 + pi2 / 12.0)
    } else {
        (libm::tgamma(1.0 - xi) - 1.0) / xi
    }
}

/// Evaluate the GEV cdf, pdf or quantile. Arguments outside the support give
/// 0 or 1 for the cdf and 0 for the pdf.
pub fn gev_eval(p: &GevParams, y: f64, kind: GevKind) -> Result<f64> {
    match kind {
        GevKind::Cdf => Ok(p.cdf(y)),
        GevKind::Pdf => Ok(p.pdf(y)),
        GevKind::Quantile => p.quantile(y),
    }
}

/// Hierarchical marginal model on the negated scale:
/// `μ_j(t) = U_j + α t`, with `U ~ N(Xβ, τ² ρ)` and `ρ(h) = exp(−h/δ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GevField {
    pub beta: DVector<f64>,
    pub u: DVector<f64>,
    pub alpha: f64,
    pub sigma: f64,
    pub xi: f64,
    pub tau2: f64,
    pub delta: f64,
    pub x: DMatrix<f64>,
}

impl GevField {
    pub fn validate(&self) -> Result<()> {
        let d = self.u.len();
        if self.x.nrows() != d || self.x.ncols() != self.beta.len() {
            return Err(Error::InvalidParameter(format!(
                "covariate matrix is {}x{}, expected {d}x{}",
                self.x.nrows(),
                self.x.ncols(),
                self.beta.len()
            )));
        }
        if !(self.sigma > 0.0 && self.tau2 > 0.0 && self.delta > 0.0) {
            return Err(Error::InvalidParameter(
                "sigma, tau2 and delta must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Location of the negated minima at station `j`, `t` years after 2000-01-01.
    pub fn location(&self, j: usize, t: f64) -> f64 {
        self.u[j] + self.alpha * t
    }

    /// GEV parameters of the negated minima at station `j` and time `t`.
    pub fn params(&self, j: usize, t: f64) -> GevParams {
        GevParams {
            mu: self.location(j, t),
            sigma: self.sigma,
            xi: self.xi,
        }
    }

    /// Prior mean `Xβ` of the latent effects.
    pub fn prior_mean(&self) -> DVector<f64> {
        &self.x * &self.beta
    }
}

/// Exponential correlation matrix `exp(−‖s_i − s_j‖/δ)`.
pub fn exponential_correlation(coords: &[[f64; 2]], delta: f64) -> DMatrix<f64> {
    let n = coords.len();
    DMatrix::from_fn(n, n, |i, j| {
        (-crate::gaussian::distance(coords[i], coords[j]) / delta).exp()
    })
}

/// Unit-Fréchet value and Jacobian of the observed minimum `y` at station `j`.
pub fn frechet_pair(field: &GevField, j: usize, t: f64, y: f64) -> Result<(f64, f64)> {
    field.params(j, t).frechet(-y)
}

/// Mean winter minimum at station `j`, `t` years after 2000-01-01, in °C.
pub fn gev_mean_forecast(field: &GevField, j: usize, t: f64) -> Result<f64> {
    Ok(-field.params(j, t).mean()?)
}

/// Mean winter minimum for a location with latent effect `u0`.
pub fn mean_minimum(u0: f64, alpha: f64, sigma: f64, xi: f64, t: f64) -> Result<f64> {
    Ok(-GevParams {
        mu: u0 + alpha * t,
        sigma,
        xi,
    }
    .mean()?)
}

/// `Pr(minimum > threshold)` at station `j` and time `t`.
pub fn exceedance_prob(field: &GevField, j: usize, t: f64, threshold: f64) -> f64 {
    field.params(j, t).cdf(-threshold)
}

/// Maximum-likelihood GEV fit with Hessian-based standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GevFit {
    pub params: GevParams,
    /// Standard errors of (μ, σ, ξ).
    pub std_errors: [f64; 3],
    pub neg_log_lik: f64,
}

struct GevNll<'a> {
    data: &'a [f64],
}

impl GevNll<'_> {
    fn eval(&self, theta: &[f64]) -> f64 {
        let p = GevParams {
            mu: theta[0],
            sigma: theta[1].exp(),
            xi: theta[2],
        };
        let mut total = 0.0;
        for &x in self.data {
            let l = p.ln_pdf(x);
            if !l.is_finite() {
                return f64::INFINITY;
            }
            total -= l;
        }
        total
    }
}

impl CostFunction for GevNll<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.eval(theta))
    }
}

fn nelder_mead(nll: GevNll<'_>, start: [f64; 3], scale: f64) -> Option<(Vec<f64>, f64)> {
    let simplex = vec![
        start.to_vec(),
        vec![start[0] + 0.5 * scale, start[1], start[2]],
        vec![start[0], start[1] + 0.3, start[2]],
        vec![start[0], start[1], start[2] + 0.1],
    ];
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-12).ok()?;
    let res = Executor::new(nll, solver)
        .configure(|s| s.max_iters(5000))
        .run()
        .ok()?;
    let st = res.state();
    Some((st.get_best_param()?.clone(), st.get_best_cost()))
}

/// Fit a GEV to `samples` by maximum likelihood on `(μ, log σ, ξ)`.
///
/// The values are fitted as given; pass negated minima to estimate the
/// margin of the model.
pub fn fit_gev_site(samples: &[f64]) -> Result<GevFit> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::NonConvergence(format!(
            "{n} samples are too few for a GEV fit"
        )));
    }
    if n < 20 {
        log::warn!("fitting a GEV to only {n} samples");
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if !(sd > 1e-12 * mean.abs().max(1.0)) {
        return Err(Error::NonConvergence("samples are degenerate".into()));
    }
    // Fit on the standardized scale so that shifts and rescalings are exact.
    let data: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for xi0 in [0.0, -0.2, 0.2] {
        let start = [-0.45, (0.78f64).ln(), xi0];
        let mut cur = nelder_mead(GevNll { data: &data }, start, 1.0);
        // Restart from the optimum to escape premature simplex collapse.
        if let Some((p, _)) = &cur {
            cur = nelder_mead(GevNll { data: &data }, [p[0], p[1], p[2]], 0.2).or(cur);
        }
        if let Some((p, c)) = cur {
            if c.is_finite() && best.as_ref().map_or(true, |b| c < b.1) {
                best = Some((p, c));
            }
        }
    }
    let (theta, _) =
        best.ok_or_else(|| Error::NonConvergence("no finite likelihood found".into()))?;
    let nll = GevNll { data: &data };
    let theta = newton_polish(&nll, theta);
    let cost = nll.eval(&theta);
    let cov = hessian_inverse(&nll, &theta).ok_or_else(|| {
        Error::NonConvergence("observed information is not positive definite".into())
    })?;
    let sigma_std = theta[1].exp();
    let params = GevParams {
        mu: mean + sd * theta[0],
        sigma: sd * sigma_std,
        xi: theta[2],
    };
    let std_errors = [
        sd * cov[(0, 0)].sqrt(),
        sd * sigma_std * cov[(1, 1)].sqrt(),
        cov[(2, 2)].sqrt(),
    ];
    Ok(GevFit {
        params,
        std_errors,
        neg_log_lik: cost + n as f64 * sd.ln(),
    })
}

fn gradient(nll: &GevNll<'_>, theta: &[f64]) -> DVector<f64> {
    let h = 1e-5;
    DVector::from_fn(3, |i, _| {
        let mut p = theta.to_vec();
        let mut m = theta.to_vec();
        p[i] += h;
        m[i] -= h;
        (nll.eval(&p) - nll.eval(&m)) / (2.0 * h)
    })
}

/// Newton steps from the simplex optimum so the result does not depend on
/// the simplex stopping point.
fn newton_polish(nll: &GevNll<'_>, mut theta: Vec<f64>) -> Vec<f64> {
    let mut cost = nll.eval(&theta);
    for _ in 0..30 {
        let Some(cov) = hessian_inverse(nll, &theta) else {
            break;
        };
        let step = cov * gradient(nll, &theta);
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-4 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(step.iter())
                .map(|(a, s)| a - t * s)
                .collect();
            let c = nll.eval(&cand);
            if c <= cost {
                theta = cand;
                cost = c;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved || step.norm() * t < 1e-12 {
            break;
        }
    }
    theta
}

fn hessian_inverse(nll: &GevNll<'_>, theta: &[f64]) -> Option<DMatrix<f64>> {
    let h = 1e-4;
    let f = |t: &[f64]| nll.eval(t);
    let mut hess = DMatrix::zeros(3, 3);
    for i in 0..3 {
        for j in i..3 {
            let mut pp = theta.to_vec();
            let mut pm = theta.to_vec();
            let mut mp = theta.to_vec();
            let mut mm = theta.to_vec();
            pp[i] += h;
            pp[j] += h;
            pm[i] += h;
            pm[j] -= h;
            mp[i] -= h;
            mp[j] += h;
            mm[i] -= h;
            mm[j] -= h;
            let v = (f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let inv = hess.cholesky()?.inverse();
    (0..3)
        .all(|i| inv[(i, i)] > 0.0 && inv[(i, i)].is_finite())
        .then_some(inv)
}
