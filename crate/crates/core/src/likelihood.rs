//! Hierarchical log-likelihood of observed winter minima and their partitions.

use std::collections::HashMap;

use chrono::{Duration, NaiveDate};
use nalgebra::DMatrix;

use crate::brown_resnick::{BrModel, DerivativeWorkspace, LogEstimate, MvnConfig};
use crate::error::{Error, Result};
use crate::gaussian::{SiteSet, StableVariogram};
use crate::margins::GevField;
use crate::partitions::SetPartition;
use crate::seed;

/// Length of the Dec–Mar window in a leap winter; days run 1..=122 from Dec 1.
pub const WINTER_DAYS: u32 = 122;

/// Years from 2000-01-01 to day `day` (1 = Dec 1) of the winter starting in
/// December of `winter`.
pub fn time_covariate(winter: i32, day: u32) -> Result<f64> {
    if day == 0 || day > WINTER_DAYS {
        return Err(Error::InvalidParameter(format!(
            "winter day {day} outside 1..={WINTER_DAYS}"
        )));
    }
    let start = NaiveDate::from_ymd_opt(winter, 12, 1)
        .ok_or_else(|| Error::InvalidParameter(format!("invalid winter {winter}")))?;
    let date = start + Duration::days(day as i64 - 1);
    let origin = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
    Ok((date - origin).num_days() as f64 / 365.25)
}

/// Observed minima of one winter, restricted to the stations that reported.
#[derive(Debug, Clone, PartialEq)]
pub struct YearData {
    pub year: i32,
    /// Observed station indices, increasing.
    pub sites: Vec<usize>,
    pub minima: Vec<f64>,
    /// Time covariate in years from 2000-01-01.
    pub t: Vec<f64>,
    /// Occurrence days per observed station (may list ties).
    pub days: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sites: SiteSet,
    /// Station covariates, one row per station, first column the intercept.
    pub x: DMatrix<f64>,
    pub years: Vec<YearData>,
}

impl Dataset {
    pub fn new(sites: SiteSet, x: DMatrix<f64>, years: Vec<YearData>) -> Result<Self> {
        let d = sites.len();
        if d > 64 {
            return Err(Error::DimensionTooLarge { dim: d, max: 64 });
        }
        if x.nrows() != d {
            return Err(Error::Schema(format!(
                "covariate matrix has {} rows for {d} stations",
                x.nrows()
            )));
        }
        let mut seen = vec![false; d];
        let mut ids = std::collections::HashSet::new();
        for y in &years {
            if !ids.insert(y.year) {
                return Err(Error::Schema(format!("winter {} appears twice", y.year)));
            }
            let n = y.sites.len();
            if n == 0 {
                return Err(Error::Schema(format!(
                    "winter {} has no observed station",
                    y.year
                )));
            }
            if y.minima.len() != n || y.t.len() != n || y.days.len() != n {
                return Err(Error::Schema(format!(
                    "winter {} has ragged columns",
                    y.year
                )));
            }
            if y.sites.windows(2).any(|w| w[0] >= w[1]) || y.sites[n - 1] >= d {
                return Err(Error::Schema(format!(
                    "winter {} has invalid station indices",
                    y.year
                )));
            }
            if y.minima.iter().chain(&y.t).any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!(
                    "winter {} has non-finite values",
                    y.year
                )));
            }
            for &s in &y.sites {
                seen[s] = true;
            }
        }
        if let Some(s) = seen.iter().position(|v| !v) {
            return Err(Error::Schema(format!(
                "station {} has no observed winter",
                sites.ids()[s]
            )));
        }
        Ok(Self { sites, x, years })
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    /// Number of observed minima.
    pub fn n_observed(&self) -> usize {
        self.years.iter().map(|y| y.sites.len()).sum()
    }
}

/// Marginal and dependence parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub field: GevField,
    pub variogram: StableVariogram,
}

/// Derivative workspaces for one variogram, shared between years with the
/// same observed station set.
#[derive(Debug, Clone)]
pub struct WorkspaceCache {
    model: BrModel,
    map: HashMap<u64, DerivativeWorkspace>,
}

impl WorkspaceCache {
    pub fn new(sites: &SiteSet, variogram: StableVariogram) -> Result<Self> {
        let model = BrModel::new(variogram, sites.clone(), MvnConfig::default())?;
        Ok(Self {
            model,
            map: HashMap::new(),
        })
    }

    pub fn variogram(&self) -> StableVariogram {
        self.model.variogram
    }

    pub fn get(&mut self, sites: &[usize]) -> Result<&mut DerivativeWorkspace> {
        let key = crate::partitions::mask(sites);
        if !self.map.contains_key(&key) {
            let ws = self.model.workspace(sites)?;
            self.map.insert(key, ws);
        }
        Ok(self.map.get_mut(&key).expect("inserted above"))
    }
}

/// Unit-Fréchet values and summed log-Jacobian of one year, or `None` when a
/// minimum falls outside the GEV support.
pub fn year_frechet(yr: &YearData, field: &GevField) -> Option<(Vec<f64>, f64)> {
    let mut z = Vec::with_capacity(yr.sites.len());
    let mut ln_jac = 0.0;
    for ((&s, &y), &t) in yr.sites.iter().zip(&yr.minima).zip(&yr.t) {
        let (f, fp) = crate::margins::frechet_pair(field, s, t, y).ok()?;
        z.push(f);
        ln_jac += fp.ln();
    }
    Some((z, ln_jac))
}

/// Seed of the normal-cdf estimates for one year of one evaluation.
pub fn year_seed(eval_seed: u64, year: i32) -> u64 {
    seed::derive(eval_seed, &[seed::tag::YEAR, year as i64 as u64])
}

/// Log-likelihood of one year using a prepared workspace cache.
pub fn year_loglik_cached(
    yr: &YearData,
    pi: &SetPartition,
    field: &GevField,
    cache: &mut WorkspaceCache,
    n_samples: usize,
    eval_seed: u64,
) -> Result<LogEstimate> {
    if pi.ground() != yr.sites.as_slice() {
        return Err(Error::PartitionMismatch);
    }
    let Some((z, ln_jac)) = year_frechet(yr, field) else {
        return Ok(LogEstimate {
            ln: f64::NEG_INFINITY,
            std_error: 0.0,
        });
    };
    let mvn = MvnConfig {
        n_samples,
        seed: year_seed(eval_seed, yr.year),
    };
    let ws = cache.get(&yr.sites)?;
    let d = ws.log_joint_density(&z, pi, mvn)?;
    Ok(LogEstimate {
        ln: d.ln + ln_jac,
        std_error: d.std_error,
    })
}

/// Log-likelihood of year `yr` (position in `data.years`).
pub fn year_loglik(
    data: &Dataset,
    yr: usize,
    pi: &SetPartition,
    state: &ParameterState,
    n_samples: usize,
    eval_seed: u64,
) -> Result<LogEstimate> {
    let year = data
        .years
        .get(yr)
        .ok_or_else(|| Error::InvalidParameter(format!("no year at position {yr}")))?;
    let mut cache = WorkspaceCache::new(&data.sites, state.variogram)?;
    year_loglik_cached(year, pi, &state.field, &mut cache, n_samples, eval_seed)
}

/// Per-year log-likelihoods with a shared cache.
pub fn year_logliks_cached(
    data: &Dataset,
    partitions: &[SetPartition],
    field: &GevField,
    cache: &mut WorkspaceCache,
    n_samples: usize,
    eval_seed: u64,
) -> Result<Vec<LogEstimate>> {
    if partitions.len() != data.years.len() {
        return Err(Error::PartitionMismatch);
    }
    data.years
        .iter()
        .zip(partitions)
        .map(|(yr, pi)| year_loglik_cached(yr, pi, field, cache, n_samples, eval_seed))
        .collect()
}

/// Sum of per-year log-likelihoods; `−∞` when any year is outside the support.
pub fn total_loglik(
    data: &Dataset,
    partitions: &[SetPartition],
    state: &ParameterState,
    n_samples: usize,
    eval_seed: u64,
) -> Result<LogEstimate> {
    let mut cache = WorkspaceCache::new(&data.sites, state.variogram)?;
    let per_year = year_logliks_cached(
        data,
        partitions,
        &state.field,
        &mut cache,
        n_samples,
        eval_seed,
    )?;
    Ok(sum_estimates(&per_year))
}

pub fn sum_estimates(xs: &[LogEstimate]) -> LogEstimate {
    let mut ln = 0.0;
    let mut var = 0.0;
    for x in xs {
        ln += x.ln;
        var += x.std_error * x.std_error;
    }
    LogEstimate {
        ln,
        std_error: var.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_covariate_origin() {
        // Day 32 of winter 1999 is 1 January 2000.
        assert_eq!(time_covariate(1999, 32).unwrap(), 0.0);
        assert!(time_covariate(1999, 0).is_err());
        assert!((time_covariate(2009, 32).unwrap() - 3653.0 / 365.25).abs() < 1e-12);
    }
}
