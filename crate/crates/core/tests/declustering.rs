use maxstable::declustering::{
    decluster, decluster_year, resolve_ties, DistanceCap, OccurrenceRecord,
};
use maxstable::gaussian::SiteSet;
use maxstable::partitions::SetPartition;
use proptest::prelude::*;

#[test]
fn three_day_chain_forms_one_cluster() {
    let p = decluster_year(&[0, 1, 2], &[1, 4, 7], 5, None).unwrap();
    assert_eq!(p, SetPartition::single_block(&[0, 1, 2]));
}

#[test]
fn distance_cap_splits_far_station() {
    let sites = SiteSet::from_coords(vec![[0.0, 0.0], [50.0, 0.0], [400.0, 0.0]]).unwrap();
    let cap = DistanceCap {
        sites: &sites,
        max_km: 150.0,
    };
    let p = decluster_year(&[0, 1, 2], &[1, 4, 7], 5, Some(cap)).unwrap();
    assert_eq!(p.to_string(), "1,2|3");
}

#[test]
fn hand_fixture_by_year() {
    // Day lists per (year, station); ties resolved from the seed.
    let recs = vec![
        OccurrenceRecord {
            year: 1990,
            site: 0,
            days: vec![10],
            minimum: -30.0,
        },
        OccurrenceRecord {
            year: 1990,
            site: 1,
            days: vec![12],
            minimum: -33.0,
        },
        OccurrenceRecord {
            year: 1990,
            site: 2,
            days: vec![40],
            minimum: -29.0,
        },
        OccurrenceRecord {
            year: 1990,
            site: 3,
            days: vec![44],
            minimum: -35.0,
        },
        OccurrenceRecord {
            year: 1991,
            site: 0,
            days: vec![100],
            minimum: -31.0,
        },
        OccurrenceRecord {
            year: 1991,
            site: 2,
            days: vec![3],
            minimum: -28.0,
        },
        OccurrenceRecord {
            year: 1991,
            site: 3,
            days: vec![8],
            minimum: -30.5,
        },
    ];
    let out = decluster(&recs, 5, None, 1).unwrap();
    assert_eq!(out[&1990].to_string(), "1,2|3,4");
    assert_eq!(out[&1991].to_string(), "1|3,4");
}

#[test]
fn ties_resolve_uniformly_and_reproducibly() {
    let rec = OccurrenceRecord {
        year: 2001,
        site: 3,
        days: vec![10, 12],
        minimum: -30.0,
    };
    assert_eq!(
        resolve_ties(&rec, 5).unwrap(),
        resolve_ties(&rec, 5).unwrap()
    );
    let n = 10_000;
    let tens = (0..n)
        .filter(|&s| resolve_ties(&rec, s).unwrap() == 10)
        .count();
    // Binomial(10⁴, ½) has standard deviation 50.
    assert!((tens as i64 - 5000).abs() < 200, "{tens}");
    let single = OccurrenceRecord {
        days: vec![77],
        ..rec
    };
    assert_eq!(resolve_ties(&single, 9).unwrap(), 77);
}

#[test]
fn lag_extremes() {
    let days = [3, 9, 20, 21, 50];
    let sites = [0, 1, 2, 3, 4];
    assert_eq!(decluster_year(&sites, &days, 0, None).unwrap().len(), 5);
    assert_eq!(decluster_year(&sites, &days, 47, None).unwrap().len(), 1);
}

proptest! {
    #[test]
    fn larger_lag_never_adds_blocks(days in proptest::collection::vec(1u32..=122, 1..12), lag in 0u32..20, extra in 0u32..20) {
        let sites: Vec<usize> = (0..days.len()).collect();
        let a = decluster_year(&sites, &days, lag, None).unwrap();
        let b = decluster_year(&sites, &days, lag + extra, None).unwrap();
        prop_assert!(b.len() <= a.len());
        prop_assert!(a.len() <= days.len());
        prop_assert!(a.is_valid());
    }
}
