use std::time::Instant;

use maxstable::gaussian::{SiteSet, StableVariogram};
use maxstable::likelihood::{total_loglik, ParameterState};
use maxstable::margins::GevField;
use maxstable::partitions::SetPartition;
use maxstable::simulation::{simulate_dataset, SyntheticDesign};
use nalgebra::{DMatrix, DVector};

fn main() {
    let d = 8;
    let coords: Vec<[f64; 2]> = (0..d)
        .map(|i| [(i as f64 * 137.0) % 500.0, (i as f64 * 311.0) % 500.0])
        .collect();
    let sites = SiteSet::from_coords(coords).unwrap();
    let field = GevField {
        beta: DVector::from_vec(vec![35.0]),
        u: DVector::from_element(d, 35.0),
        alpha: -0.06,
        sigma: 3.5,
        xi: -0.1,
        tau2: 1.0,
        delta: 200.0,
        x: DMatrix::from_element(d, 1, 1.0),
    };
    let truth = ParameterState {
        field,
        variogram: StableVariogram::new(300.0, 1.0).unwrap(),
    };
    let design = SyntheticDesign {
        sites,
        truth: truth.clone(),
        winters: (1976..2026).collect(),
        missing_prob: 0.0,
        event_spread: 2,
    };
    let syn = simulate_dataset(&design, 1).unwrap();
    let sizes: Vec<usize> = syn.partitions.iter().map(|p| p.len()).collect();
    println!("partition sizes {:?}", sizes);
    let single: Vec<SetPartition> = syn
        .data
        .years
        .iter()
        .map(|y| SetPartition::singletons(&y.sites))
        .collect();
    for n in [100, 250, 1000] {
        let t = Instant::now();
        let mut vals = Vec::new();
        for s in 0..5 {
            vals.push(
                total_loglik(&syn.data, &syn.partitions, &truth, n, s)
                    .unwrap()
                    .ln,
            );
        }
        let t1 = t.elapsed().as_secs_f64() / 5.0;
        let t = Instant::now();
        let s1 = total_loglik(&syn.data, &single, &truth, n, 0).unwrap();
        println!(
            "n={n}: {t1:.4}s true-part  {:.4}s singletons; values {:?} single {:?}",
            t.elapsed().as_secs_f64(),
            vals,
            s1
        );
    }
}
