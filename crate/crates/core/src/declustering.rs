//! Space-time single-linkage declustering of winter minima into partitions.

use std::collections::BTreeMap;

use petgraph::unionfind::UnionFind;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussian::SiteSet;
use crate::partitions::SetPartition;
use crate::seed;

/// Default linkage lag in days.
pub const DEFAULT_LAG: u32 = 5;

/// Occurrence days of one station's winter minimum. Days count from Dec 1.
#[derive(Debug, Clone, PartialEq)]
pub struct OccurrenceRecord {
    pub year: i32,
    pub site: usize,
    pub days: Vec<u32>,
    pub minimum: f64,
}

/// Pick one occurrence day uniformly at random.
pub fn resolve_ties(rec: &OccurrenceRecord, seed_value: u64) -> Result<u32> {
    match rec.days.len() {
        0 => Err(Error::EmptyDays),
        1 => Ok(rec.days[0]),
        n => {
            let mut rng = seed::rng_from(
                seed_value,
                &[seed::tag::YEAR, rec.year as u64, rec.site as u64],
            );
            Ok(rec.days[rng.random_range(0..n)])
        }
    }
}

/// Optional spatial cap: sites at least `max_km` apart are never linked.
#[derive(Debug, Clone, Copy)]
pub struct DistanceCap<'a> {
    pub sites: &'a SiteSet,
    pub max_km: f64,
}

/// Connected components of the link graph where two sites are joined when
/// their days differ by at most `lag` (and, with a cap, they are closer than
/// the cap distance).
pub fn decluster_year(
    sites: &[usize],
    days: &[u32],
    lag: u32,
    cap: Option<DistanceCap<'_>>,
) -> Result<SetPartition> {
    if sites.len() != days.len() {
        return Err(Error::InvalidParameter(
            "one resolved day is needed per site".into(),
        ));
    }
    let n = sites.len();
    let mut uf = UnionFind::<usize>::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if days[i].abs_diff(days[j]) > lag {
                continue;
            }
            if let Some(c) = cap {
                if c.sites.distance(sites[i], sites[j]) >= c.max_km {
                    continue;
                }
            }
            uf.union(i, j);
        }
    }
    let labels = uf.into_labeling();
    SetPartition::from_labels(sites, &labels)
}

/// Decluster every year, resolving ties with seeds keyed by (year, site).
pub fn decluster(
    records: &[OccurrenceRecord],
    lag: u32,
    cap: Option<DistanceCap<'_>>,
    seed_value: u64,
) -> Result<BTreeMap<i32, SetPartition>> {
    let mut by_year: BTreeMap<i32, (Vec<usize>, Vec<u32>)> = BTreeMap::new();
    for rec in records {
        let day = resolve_ties(rec, seed_value)?;
        let entry = by_year.entry(rec.year).or_default();
        entry.0.push(rec.site);
        entry.1.push(day);
    }
    by_year
        .into_iter()
        .map(|(year, (sites, days))| Ok((year, decluster_year(&sites, &days, lag, cap)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_of_days_links_transitively() {
        let p = decluster_year(&[0, 1, 2], &[1, 4, 7], 5, None).unwrap();
        assert_eq!(p.to_string(), "1,2,3");
    }

    #[test]
    fn gap_beyond_lag_separates() {
        let p = decluster_year(&[0, 1], &[1, 20], 5, None).unwrap();
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn empty_days_error() {
        let rec = OccurrenceRecord {
            year: 1990,
            site: 0,
            days: vec![],
            minimum: -30.0,
        };
        assert_eq!(resolve_ties(&rec, 1), Err(Error::EmptyDays));
    }
}
