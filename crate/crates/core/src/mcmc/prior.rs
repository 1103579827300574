//! Prior distributions and parameter transforms.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Scalar parameters updated by Metropolis–Hastings blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Param {
    Alpha,
    Sigma,
    Xi,
    Lambda,
    Kappa,
    Delta,
}

impl Param {
    pub const ALL: [Param; 6] = [
        Param::Alpha,
        Param::Sigma,
        Param::Xi,
        Param::Lambda,
        Param::Kappa,
        Param::Delta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Alpha => "alpha",
            Param::Sigma => "sigma",
            Param::Xi => "xi",
            Param::Lambda => "lambda",
            Param::Kappa => "kappa",
            Param::Delta => "delta",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown parameter '{s}'")))
    }
}

/// Prior density of a scalar on its natural scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarPrior {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Normal on the log scale.
    LogNormal {
        mean_log: f64,
        sd_log: f64,
    },
}

impl ScalarPrior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScalarPrior::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            ScalarPrior::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            ScalarPrior::LogNormal { mean_log, sd_log } => {
                mean_log.is_finite() && sd_log > 0.0 && sd_log.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!("invalid prior {self:?}")))
        }
    }

    /// Log density up to a constant; `−∞` outside the support.
    pub fn ln_density(&self, x: f64) -> f64 {
        match *self {
            ScalarPrior::Uniform { lo, hi } => {
                if x > lo && x <= hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            ScalarPrior::Normal { mean, sd } => -0.5 * ((x - mean) / sd).powi(2) - sd.ln(),
            ScalarPrior::LogNormal { mean_log, sd_log } => {
                if x > 0.0 {
                    -0.5 * ((x.ln() - mean_log) / sd_log).powi(2) - sd_log.ln() - x.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// Cumulative distribution, used by prior-only checks.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            ScalarPrior::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            ScalarPrior::Normal { mean, sd } => crate::normal::cdf((x - mean) / sd),
            ScalarPrior::LogNormal { mean_log, sd_log } => {
                if x <= 0.0 {
                    0.0
                } else {
                    crate::normal::cdf((x.ln() - mean_log) / sd_log)
                }
            }
        }
    }
}

/// Map between a parameter and the unconstrained scale of its random walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Identity,
    Log,
    /// Logistic map onto `(lo, hi)`.
    Logit {
        lo: f64,
        hi: f64,
    },
}

impl Transform {
    pub fn to_unconstrained(&self, x: f64) -> f64 {
        match *self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
            Transform::Logit { lo, hi } => {
                let p = (x - lo) / (hi - lo);
                (p / (1.0 - p)).ln()
            }
        }
    }

    pub fn from_unconstrained(&self, t: f64) -> f64 {
        match *self {
            Transform::Identity => t,
            Transform::Log => t.exp(),
            Transform::Logit { lo, hi } => lo + (hi - lo) / (1.0 + (-t).exp()),
        }
    }

    /// `ln |dx/dt|` at natural value `x`.
    pub fn ln_jacobian(&self, x: f64) -> f64 {
        match *self {
            Transform::Identity => 0.0,
            Transform::Log => x.ln(),
            Transform::Logit { lo, hi } => ((x - lo) * (hi - x) / (hi - lo)).ln(),
        }
    }

    pub fn in_range(&self, x: f64) -> bool {
        match *self {
            Transform::Identity => x.is_finite(),
            Transform::Log => x > 0.0 && x.is_finite(),
            Transform::Logit { lo, hi } => x > lo && x < hi,
        }
    }
}

/// Priors of every model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub beta_mean: DVector<f64>,
    /// Prior precision of β; the zero matrix gives a flat prior.
    pub beta_precision: DMatrix<f64>,
    pub tau2_shape: f64,
    pub tau2_rate: f64,
    pub alpha: ScalarPrior,
    pub sigma: ScalarPrior,
    pub xi: ScalarPrior,
    pub lambda: ScalarPrior,
    pub kappa: ScalarPrior,
    pub delta: ScalarPrior,
}

impl PriorSpec {
    /// Vague defaults for `p` covariate columns.
    pub fn vague(p: usize) -> Self {
        Self {
            beta_mean: DVector::zeros(p),
            beta_precision: DMatrix::from_diagonal_element(p, p, 1e-4),
            tau2_shape: 2.0,
            tau2_rate: 1.0,
            alpha: ScalarPrior::Normal { mean: 0.0, sd: 1.0 },
            sigma: ScalarPrior::LogNormal {
                mean_log: 1.0,
                sd_log: 2.0,
            },
            xi: ScalarPrior::Uniform { lo: -0.5, hi: 0.5 },
            lambda: ScalarPrior::LogNormal {
                mean_log: 6.0,
                sd_log: 3.0,
            },
            kappa: ScalarPrior::Uniform { lo: 0.0, hi: 2.0 },
            delta: ScalarPrior::LogNormal {
                mean_log: 6.0,
                sd_log: 3.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.beta_mean.len();
        if self.beta_precision.shape() != (p, p) {
            return Err(Error::ConfigInvalid(
                "beta prior precision has the wrong shape".into(),
            ));
        }
        if self
            .beta_mean
            .iter()
            .chain(self.beta_precision.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::ConfigInvalid("beta prior must be finite".into()));
        }
        if !(self.tau2_shape > 0.0 && self.tau2_rate > 0.0) {
            return Err(Error::ConfigInvalid(
                "tau2 prior needs positive shape and rate".into(),
            ));
        }
        for p in Param::ALL {
            self.scalar(p).validate()?;
        }
        if let ScalarPrior::Uniform { lo, hi } = self.kappa {
            if lo < 0.0 || hi > 2.0 {
                return Err(Error::ConfigInvalid(
                    "kappa prior must lie within (0, 2]".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn scalar(&self, p: Param) -> ScalarPrior {
        match p {
            Param::Alpha => self.alpha,
            Param::Sigma => self.sigma,
            Param::Xi => self.xi,
            Param::Lambda => self.lambda,
            Param::Kappa => self.kappa,
            Param::Delta => self.delta,
        }
    }

    pub fn transform(&self, p: Param) -> Transform {
        match p {
            Param::Alpha => Transform::Identity,
            Param::Sigma | Param::Lambda | Param::Delta => Transform::Log,
            Param::Kappa => Transform::Logit { lo: 0.0, hi: 2.0 },
            Param::Xi => match self.xi {
                ScalarPrior::Uniform { lo, hi } => Transform::Logit { lo, hi },
                _ => Transform::Logit { lo: -0.5, hi: 0.5 },
            },
        }
    }

    /// Support of the model itself, independent of the prior.
    pub fn in_support(&self, p: Param, x: f64) -> bool {
        match p {
            Param::Kappa => x > 0.0 && x <= 2.0,
            Param::Sigma | Param::Lambda | Param::Delta => x > 0.0 && x.is_finite(),
            _ => x.is_finite(),
        }
    }
}
