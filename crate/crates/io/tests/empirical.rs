use maxstable::brown_resnick::extremal_coefficient;
use maxstable::gaussian::{SiteSet, StableVariogram};
use maxstable::likelihood::{Dataset, ParameterState, YearData};
use maxstable::margins::GevField;
use maxstable::partitions::SetPartition;
use maxstable::simulation::{simulate_dataset, SyntheticDesign};
use maxstable_io::diagnostics::{
    group_qq, marginal_qq, partition_sizes, rand_index_table, GroupStat,
};
use maxstable_io::extremal::{empirical_extremal_coefficients, empirical_uniform, fmadogram_theta};
use maxstable_io::samples::PartitionDraws;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_site_data(a: &[f64], b: &[f64]) -> Dataset {
    let sites = SiteSet::from_coords(vec![[0.0, 0.0], [30.0, 0.0]]).unwrap();
    let years = a
        .iter()
        .zip(b)
        .enumerate()
        .map(|(k, (&p, &q))| YearData {
            year: 1000 + k as i32,
            sites: vec![0, 1],
            minima: vec![p, q],
            t: vec![0.0; 2],
            days: vec![vec![1]; 2],
        })
        .collect();
    Dataset::new(sites, DMatrix::from_element(2, 1, 1.0), years).unwrap()
}

#[test]
fn ranks_average_ties() {
    assert_eq!(
        empirical_uniform(&[3.0, 1.0, 3.0, 2.0]),
        [3.5 / 5.0, 0.2, 3.5 / 5.0, 0.4]
    );
}

#[test]
fn identical_series_give_complete_dependence() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
    assert!((fmadogram_theta(&a, &a) - 1.0).abs() < 1e-12);
    let bins = empirical_extremal_coefficients(&two_site_data(&a, &a), &[0.0, 100.0], 50, &mut rng)
        .unwrap();
    assert_eq!(bins.len(), 1);
    assert!((bins[0].theta - 1.0).abs() < 0.05);
}

#[test]
fn independent_series_give_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
    let b: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
    let bins = empirical_extremal_coefficients(
        &two_site_data(&a, &b),
        &[0.0, 100.0, 200.0],
        100,
        &mut rng,
    )
    .unwrap();
    // The empty second bin is omitted.
    assert_eq!(bins.len(), 1);
    assert!((bins[0].theta - 2.0).abs() < 0.1, "{:?}", bins[0]);
    assert!(bins[0].theta >= 1.0 && bins[0].theta <= 2.0);
    assert_eq!(bins[0].clamped, bins[0].raw > 2.0);
}

#[test]
fn clamping_is_flagged() {
    // Perfectly discordant series push the raw estimate above 2.
    let a: Vec<f64> = (0..100).map(f64::from).collect();
    let b: Vec<f64> = a.iter().map(|x| -x).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bins = empirical_extremal_coefficients(&two_site_data(&a, &b), &[0.0, 100.0], 20, &mut rng)
        .unwrap();
    assert!(bins[0].raw > 2.0);
    assert!(bins[0].clamped);
    assert_eq!(bins[0].theta, 2.0);
}

fn br_data(
    n_years: usize,
    lambda: f64,
    kappa: f64,
    seed: u64,
) -> (Dataset, Vec<SetPartition>, ParameterState) {
    let coords: Vec<[f64; 2]> = (0..6)
        .map(|i| [i as f64 * 60.0, (i % 2) as f64 * 40.0])
        .collect();
    let d = coords.len();
    let field = GevField {
        beta: DVector::from_vec(vec![35.0]),
        u: DVector::from_element(d, 35.0),
        // Stationary margins, so ranks across winters are exchangeable.
        alpha: 0.0,
        sigma: 3.5,
        xi: -0.1,
        tau2: 0.1,
        delta: 200.0,
        x: DMatrix::from_element(d, 1, 1.0),
    };
    let truth = ParameterState {
        field,
        variogram: StableVariogram::new(lambda, kappa).unwrap(),
    };
    let design = SyntheticDesign {
        sites: SiteSet::from_coords(coords).unwrap(),
        truth: truth.clone(),
        winters: (1500..1500 + n_years as i32).collect(),
        missing_prob: 0.0,
        event_spread: 1,
    };
    let syn = simulate_dataset(&design, seed).unwrap();
    (syn.data, syn.partitions, truth)
}

#[test]
fn binned_estimates_track_the_model() {
    let (lambda, kappa) = (1086.0, 0.53);
    let (data, _, _) = br_data(400, lambda, kappa, 5);
    let edges = [0.0, 100.0, 200.0, 320.0];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let bins = empirical_extremal_coefficients(&data, &edges, 200, &mut rng).unwrap();
    assert_eq!(bins.len(), 3);
    let v = StableVariogram::new(lambda, kappa).unwrap();
    for b in &bins {
        let mut model = Vec::new();
        for i in 0..data.n_sites() {
            for j in i + 1..data.n_sites() {
                let h = data.sites.distance(i, j);
                if h >= b.lo && h < b.hi {
                    model.push(extremal_coefficient(&v, h));
                }
            }
        }
        let m = model.iter().sum::<f64>() / model.len() as f64;
        assert_eq!(model.len(), b.n_pairs);
        assert!(b.ci_lo <= m && m <= b.ci_hi, "{b:?} vs model {m}");
    }
}

#[test]
fn qq_bands_cover_calibrated_data() {
    let mut inside = 0usize;
    let mut total = 0usize;
    for rep in 0..10 {
        let (data, _, truth) = br_data(40, 300.0, 1.0, 100 + rep);
        let draws = vec![truth.clone(); 400];
        let mut rng = ChaCha8Rng::seed_from_u64(rep);
        let rows = marginal_qq(&data, &draws, &mut rng);
        assert_eq!(rows.len(), 6 * 40);
        inside += rows.iter().filter(|r| r.inside()).count();
        total += rows.len();
    }
    let frac = inside as f64 / total as f64;
    assert!(frac >= 0.95, "{frac}");
}

#[test]
fn group_tables_have_one_row_per_complete_winter() {
    let (data, _, truth) = br_data(30, 300.0, 1.0, 9);
    let draws = vec![truth; 50];
    for stat in GroupStat::ALL {
        let rows = group_qq(&data, "west", &[0, 2, 4], stat, &draws, 1).unwrap();
        assert_eq!(rows.len(), 30);
        assert!(rows.windows(2).all(|w| w[0].observed <= w[1].observed));
        assert!(rows
            .iter()
            .all(|r| r.lo <= r.predicted && r.predicted <= r.hi));
    }
}

#[test]
fn partition_tables() {
    let (data, parts, _) = br_data(8, 300.0, 1.0, 10);
    let singles: Vec<SetPartition> = data
        .years
        .iter()
        .map(|y| SetPartition::singletons(&y.sites))
        .collect();
    let draws = PartitionDraws {
        draws: vec![
            (0, 1, parts.clone()),
            (0, 2, singles.clone()),
            (1, 1, parts.clone()),
        ],
    };
    let sizes = partition_sizes(&data, &draws);
    for y in &data.years {
        let total: f64 = sizes.iter().filter(|s| s.0 == y.year).map(|s| s.2).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
    let ri = rand_index_table(&data, &draws, &parts).unwrap();
    assert_eq!(ri.len(), 8);
    assert!(ri.iter().all(|(_, r)| (0.0..=1.0).contains(r)));
    let exact = rand_index_table(
        &data,
        &PartitionDraws {
            draws: vec![(0, 0, parts.clone())],
        },
        &parts,
    )
    .unwrap();
    assert!(exact.iter().all(|(_, r)| *r == 1.0));
}
