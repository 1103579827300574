mod common;

use maxstable::brown_resnick::{BrModel, FrechetVector, MvnConfig};
use maxstable::gaussian::{SiteSet, StableVariogram};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(coords: &[[f64; 2]], lambda: f64, kappa: f64, n: usize, seed: u64) -> BrModel {
    BrModel::new(
        StableVariogram::new(lambda, kappa).unwrap(),
        SiteSet::from_coords(coords.to_vec()).unwrap(),
        MvnConfig { n_samples: n, seed },
    )
    .unwrap()
}

fn random_case(rng: &mut ChaCha8Rng, d: usize) -> (Vec<[f64; 2]>, Vec<f64>, f64, f64) {
    let coords: Vec<[f64; 2]> = (0..d)
        .map(|_| [rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)])
        .collect();
    let z: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..3.0)).collect();
    let lambda = rng.random_range(40.0..150.0);
    let kappa = rng.random_range(0.6..1.6);
    (coords, z, lambda, kappa)
}

#[test]
fn quadrature_oracle_sanity() {
    // Equicorrelated trivariate orthant: 1/8 + 3 asin(ρ)/(4π).
    let c = vec![
        vec![1.0, 0.5, 0.5],
        vec![0.5, 1.0, 0.5],
        vec![0.5, 0.5, 1.0],
    ];
    let p = common::normal_cdf_quad(&[0.0, 0.0, 0.0], &c);
    let closed = 0.125 + 3.0 * 0.5f64.asin() / (4.0 * std::f64::consts::PI);
    assert!((p - closed).abs() < 1e-9, "{p} vs {closed}");
}

#[test]
fn partition_sum_matches_mixed_derivative() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (d, tol, step) in [(2usize, 1e-3, 1e-4), (3, 1e-2, 1e-3), (4, 2e-2, 1e-2)] {
        for rep in 0..3 {
            let (coords, z, lambda, kappa) = random_case(&mut rng, d);
            let m = model(&coords, lambda, kappa, 100_000, 17 + rep);
            let fz = FrechetVector::full(z.clone()).unwrap();
            let full = m.full_density_enum(&fz).unwrap().exp();
            let g = common::semivariogram_matrix(&coords, lambda, kappa);
            let oracle =
                common::mixed_derivative(|x| (-common::exponent_v_quad(x, &g)).exp(), &z, step);
            let rel = ((full - oracle) / oracle).abs();
            assert!(
                rel < tol,
                "D={d} rep={rep}: enum={full:e} fd={oracle:e} rel={rel:e}"
            );
        }
    }
}

#[test]
fn bivariate_partial_matches_closed_form_derivative() {
    let m = model(&[[0.0, 0.0], [30.0, 40.0]], 70.0, 1.1, 10_000, 3);
    let a = (2.0 * m.variogram.gamma_at(50.0)).sqrt();
    let z = [1.3, 0.6];
    let fz = FrechetVector::full(z.to_vec()).unwrap();
    let est = m.neg_partial_v(&fz, &[0]).unwrap();
    let h = 1e-6;
    let fd = -(common::husler_reiss_v(z[0] + h, z[1], a)
        - common::husler_reiss_v(z[0] - h, z[1], a))
        / (2.0 * h);
    assert!(
        (est.value - fd).abs() <= 3.0 * est.std_error + 1e-8,
        "{} vs {fd}",
        est.value
    );
    assert!(est.value > 0.0);
}

#[test]
fn exponent_matches_husler_reiss() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let h = rng.random_range(1.0..500.0);
        let m = model(
            &[[0.0, 0.0], [h, 0.0]],
            rng.random_range(50.0..2000.0),
            rng.random_range(0.2..2.0),
            1000,
            1,
        );
        let z = vec![rng.random_range(0.2..5.0), rng.random_range(0.2..5.0)];
        let a = (2.0 * m.variogram.gamma_at(h)).sqrt();
        let est = m
            .exponent_v(&FrechetVector::full(z.clone()).unwrap())
            .unwrap();
        let hr = common::husler_reiss_v(z[0], z[1], a);
        assert!(
            (est.value - hr).abs() <= 3.0 * est.std_error + 1e-12,
            "{} vs {hr}",
            est.value
        );
    }
}

#[test]
fn exponent_three_sites_matches_quadrature() {
    let coords = [[0.0, 0.0], [40.0, 10.0], [15.0, 60.0]];
    let m = model(&coords, 80.0, 1.3, 100_000, 4);
    let z = vec![0.8, 1.7, 1.1];
    let est = m
        .exponent_v(&FrechetVector::full(z.clone()).unwrap())
        .unwrap();
    let g = common::semivariogram_matrix(&coords, 80.0, 1.3);
    let q = common::exponent_v_quad(&z, &g);
    assert!(
        (est.value - q).abs() < 1e-5 + 4.0 * est.std_error,
        "{} vs {q}",
        est.value
    );
}
