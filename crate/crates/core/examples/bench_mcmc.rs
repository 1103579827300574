use std::time::Instant;

use maxstable::gaussian::{SiteSet, StableVariogram};
use maxstable::likelihood::ParameterState;
use maxstable::margins::GevField;
use maxstable::mcmc::{run_chains, ChainConfig, PartitionMode, PriorSpec};
use maxstable::simulation::{simulate_dataset, SyntheticDesign};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_iter: usize = args.get(1).map_or(300, |s| s.parse().unwrap());
    let n_samples: usize = args.get(2).map_or(100, |s| s.parse().unwrap());
    let d = 8;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let coords: Vec<[f64; 2]> = (0..d)
        .map(|_| [rng.random_range(0.0..500.0), rng.random_range(0.0..500.0)])
        .collect();
    let x = DMatrix::from_fn(d, 2, |i, j| {
        if j == 0 {
            1.0
        } else {
            (coords[i][0] - 250.0) / 500.0 * 3.0
        }
    });
    let beta = DVector::from_vec(vec![35.0, 1.0]);
    let u = &x * &beta;
    let field = GevField {
        beta,
        u,
        alpha: -0.06,
        sigma: 3.5,
        xi: -0.1,
        tau2: 0.1,
        delta: 250.0,
        x,
    };
    let truth = ParameterState {
        field,
        variogram: StableVariogram::new(300.0, 1.0).unwrap(),
    };
    let design = SyntheticDesign {
        sites: SiteSet::from_coords(coords).unwrap(),
        truth,
        winters: (1975..2025).collect(),
        missing_prob: 0.0,
        event_spread: 1,
    };
    let syn = simulate_dataset(&design, 7).unwrap();
    let fixed = args.get(3).is_some_and(|m| m == "m2");
    let mode = if fixed {
        PartitionMode::Fixed(syn.partitions.clone())
    } else {
        PartitionMode::Random
    };
    let cfg = ChainConfig {
        n_chains: 1,
        n_iter,
        burn_in: n_iter / 4,
        n_samples,
        mode,
        ..Default::default()
    };
    let priors = PriorSpec::vague(2);
    let t = Instant::now();
    let post = run_chains(&cfg, &syn.data, &priors, None, 11).unwrap();
    println!("{:.3} s/iter", t.elapsed().as_secs_f64() / n_iter as f64);
    for s in post.summary() {
        println!(
            "{:8} mean {:9.4} [{:9.4}, {:9.4}] ess {:7.1}",
            s.name, s.mean, s.q025, s.q975, s.ess
        );
    }
    println!("{:?}", post.chains[0].acceptance);
}
