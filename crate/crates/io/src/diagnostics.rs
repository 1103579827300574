//! Plot-ready diagnostic tables: marginal and group QQ tables, partition
//! sizes and agreement with declustered partitions.

use std::collections::BTreeMap;

use maxstable::gaussian::StableVariogram;
use maxstable::likelihood::{Dataset, ParameterState};
use maxstable::margins::GevParams;
use maxstable::mcmc::quantile;
use maxstable::partitions::{rand_index, SetPartition};
use maxstable::seed;
use maxstable::simulation::{frechet_to_gev, simulate_with_field, PinnedField};
use rand::Rng;

use crate::samples::PartitionDraws;
use crate::Result;

/// One point of a QQ table: the `rank`-th smallest observed value against
/// the posterior-predictive mean and 95% band of the same order statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct QqRow {
    pub label: String,
    pub rank: usize,
    pub observed: f64,
    pub predicted: f64,
    pub lo: f64,
    pub hi: f64,
}

impl QqRow {
    pub fn inside(&self) -> bool {
        self.observed >= self.lo && self.observed <= self.hi
    }
}

fn order_statistics_table(label: &str, mut observed: Vec<f64>, sims: Vec<Vec<f64>>) -> Vec<QqRow> {
    observed.sort_by(|a, b| a.total_cmp(b));
    let n = observed.len();
    (0..n)
        .map(|k| {
            let mut col: Vec<f64> = sims.iter().map(|s| s[k]).collect();
            col.sort_by(|a, b| a.total_cmp(b));
            QqRow {
                label: label.to_string(),
                rank: k + 1,
                observed: observed[k],
                predicted: col.iter().sum::<f64>() / col.len() as f64,
                lo: quantile(&col, 0.025),
                hi: quantile(&col, 0.975),
            }
        })
        .collect()
}

/// Marginal QQ table per station. For every posterior draw a replicate of
/// the station's series is drawn at the observed time covariates.
pub fn marginal_qq<R: Rng + ?Sized>(
    data: &Dataset,
    draws: &[ParameterState],
    rng: &mut R,
) -> Vec<QqRow> {
    let mut out = Vec::new();
    for j in 0..data.n_sites() {
        let mut obs = Vec::new();
        let mut ts = Vec::new();
        for y in &data.years {
            if let Ok(k) = y.sites.binary_search(&j) {
                obs.push(y.minima[k]);
                ts.push(y.t[k]);
            }
        }
        if obs.is_empty() || draws.is_empty() {
            continue;
        }
        let sims: Vec<Vec<f64>> = draws
            .iter()
            .map(|s| {
                let mut v: Vec<f64> = ts
                    .iter()
                    .map(|&t| -s.field.params(j, t).sample_from_uniform(rng.random()))
                    .collect();
                v.sort_by(|a, b| a.total_cmp(b));
                v
            })
            .collect();
        out.extend(order_statistics_table(&data.sites.ids()[j], obs, sims));
    }
    out
}

/// Statistic of the minima of a station group within one winter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupStat {
    Min,
    Max,
    Mean,
}

impl GroupStat {
    pub const ALL: [GroupStat; 3] = [GroupStat::Min, GroupStat::Max, GroupStat::Mean];

    pub fn name(self) -> &'static str {
        match self {
            GroupStat::Min => "min",
            GroupStat::Max => "max",
            GroupStat::Mean => "mean",
        }
    }

    fn apply(self, v: &[f64]) -> f64 {
        match self {
            GroupStat::Min => v.iter().cloned().fold(f64::INFINITY, f64::min),
            GroupStat::Max => v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            GroupStat::Mean => v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

/// QQ table of a group statistic over the winters in which the whole group
/// was observed. Replicates are joint Brown–Resnick draws per winter.
pub fn group_qq(
    data: &Dataset,
    label: &str,
    group: &[usize],
    stat: GroupStat,
    draws: &[ParameterState],
    seed_value: u64,
) -> Result<Vec<QqRow>> {
    let coords: Vec<[f64; 2]> = group.iter().map(|&j| data.sites.coord(j)).collect();
    let mut obs = Vec::new();
    let mut ts: Vec<Vec<f64>> = Vec::new();
    for y in &data.years {
        let pos: Option<Vec<usize>> = group
            .iter()
            .map(|j| y.sites.binary_search(j).ok())
            .collect();
        if let Some(pos) = pos {
            obs.push(stat.apply(&pos.iter().map(|&k| y.minima[k]).collect::<Vec<_>>()));
            ts.push(pos.iter().map(|&k| y.t[k]).collect());
        }
    }
    if obs.is_empty() || draws.is_empty() {
        return Ok(Vec::new());
    }
    let mut cache: Option<(StableVariogram, PinnedField)> = None;
    let mut sims = Vec::with_capacity(draws.len());
    for (d, s) in draws.iter().enumerate() {
        if cache.as_ref().is_none_or(|(v, _)| *v != s.variogram) {
            cache = Some((s.variogram, PinnedField::new(&coords, &s.variogram)?));
        }
        let field = &cache.as_ref().unwrap().1;
        let mut v: Vec<f64> = ts
            .iter()
            .enumerate()
            .map(|(w, t)| {
                let draw =
                    simulate_with_field(field, seed::derive(seed_value, &[d as u64, w as u64]));
                let y: Vec<f64> = draw
                    .z
                    .iter()
                    .zip(group)
                    .zip(t)
                    .map(|((&z, &j), &tt)| {
                        let p: GevParams = s.field.params(j, tt);
                        -frechet_to_gev(z, &p)
                    })
                    .collect();
                stat.apply(&y)
            })
            .collect();
        v.sort_by(|a, b| a.total_cmp(b));
        sims.push(v);
    }
    Ok(order_statistics_table(
        &format!("{label}:{}", stat.name()),
        obs,
        sims,
    ))
}

/// Relative frequency of the number of blocks, per winter.
pub fn partition_sizes(data: &Dataset, draws: &PartitionDraws) -> Vec<(i32, usize, f64)> {
    let mut out = Vec::new();
    let n = draws.draws.len() as f64;
    for (k, y) in data.years.iter().enumerate() {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for (_, _, ps) in &draws.draws {
            *counts.entry(ps[k].len()).or_default() += 1;
        }
        out.extend(
            counts
                .into_iter()
                .map(|(size, c)| (y.year, size, c as f64 / n)),
        );
    }
    out
}

/// Posterior mean Rand index between sampled and reference partitions, per
/// winter.
pub fn rand_index_table(
    data: &Dataset,
    draws: &PartitionDraws,
    reference: &[SetPartition],
) -> Result<Vec<(i32, f64)>> {
    let mut out = Vec::with_capacity(data.n_years());
    for (k, y) in data.years.iter().enumerate() {
        let mut s = 0.0;
        for (_, _, ps) in &draws.draws {
            s += rand_index(&ps[k], &reference[k])?;
        }
        out.push((y.year, s / draws.draws.len().max(1) as f64));
    }
    Ok(out)
}
