//! Small synthetic data sets shared by the sampler and likelihood tests.

use maxstable::gaussian::{SiteSet, StableVariogram};
use maxstable::likelihood::ParameterState;
use maxstable::margins::GevField;
use maxstable::simulation::{simulate_dataset, SyntheticData, SyntheticDesign};
use nalgebra::{DMatrix, DVector};

/// Stations scattered over a square of side `box_km`, intercept plus one
/// standardized covariate, latent effects drawn around the mean surface.
pub fn truth(
    d: usize,
    box_km: f64,
    lambda: f64,
    kappa: f64,
    seed: u64,
) -> (SiteSet, ParameterState) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<[f64; 2]> = (0..d)
        .map(|_| [rng.random_range(0.0..box_km), rng.random_range(0.0..box_km)])
        .collect();
    let cov: Vec<f64> = (0..d)
        .map(|i| (coords[i][0] - box_km / 2.0) / box_km * 3.0)
        .collect();
    let x = DMatrix::from_fn(d, 2, |i, j| if j == 0 { 1.0 } else { cov[i] });
    let beta = DVector::from_vec(vec![35.0, 1.0]);
    let u = &x * &beta + DVector::from_fn(d, |_, _| 0.3 * rng.random_range(-1.0..1.0));
    let field = GevField {
        beta,
        u,
        alpha: -0.06,
        sigma: 3.5,
        xi: -0.1,
        tau2: 0.1,
        delta: box_km / 2.0,
        x,
    };
    let state = ParameterState {
        field,
        variogram: StableVariogram::new(lambda, kappa).unwrap(),
    };
    (SiteSet::from_coords(coords).unwrap(), state)
}

pub fn dataset(
    d: usize,
    n_years: usize,
    lambda: f64,
    kappa: f64,
    seed: u64,
) -> (SyntheticData, ParameterState) {
    let (sites, state) = truth(d, 500.0, lambda, kappa, seed);
    let first = 2000 - n_years as i32 / 2;
    let design = SyntheticDesign {
        sites,
        truth: state.clone(),
        winters: (first..first + n_years as i32).collect(),
        missing_prob: 0.0,
        event_spread: 1,
    };
    (simulate_dataset(&design, seed).unwrap(), state)
}
