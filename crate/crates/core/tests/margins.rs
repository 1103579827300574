mod common;

use maxstable::margins::{
    exceedance_prob, fit_gev_site, frechet_pair, gev_eval, gev_mean_forecast, GevField, GevKind,
    GevParams,
};
use maxstable::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn table_params() -> GevParams {
    GevParams::new(-35.0, 3.5, -0.10).unwrap()
}

fn field(u: f64, alpha: f64, sigma: f64, xi: f64) -> GevField {
    GevField {
        beta: DVector::from_vec(vec![u]),
        u: DVector::from_vec(vec![u]),
        alpha,
        sigma,
        xi,
        tau2: 1.0,
        delta: 100.0,
        x: DMatrix::from_element(1, 1, 1.0),
    }
}

fn draws(p: &GevParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| p.sample_from_uniform(rng.random::<f64>()))
        .collect()
}

#[test]
fn quantile_cdf_round_trip_on_grid() {
    let p = table_params();
    let (_, upper) = p.support();
    for i in 0..200 {
        let y = -60.0 + (upper - 1e-3 + 60.0) * i as f64 / 199.0;
        let u = gev_eval(&p, y, GevKind::Cdf).unwrap();
        // Near u = 1 the level itself carries the rounding error of 1 − u.
        if u > 1e-12 && u < 1.0 - 1e-6 {
            let back = gev_eval(&p, u, GevKind::Quantile).unwrap();
            assert!((back - y).abs() < 1e-8, "{y} -> {u} -> {back}");
        }
    }
}

#[test]
fn pdf_integrates_to_one() {
    for (mu, sigma, xi) in [
        (-35.0, 3.5, -0.1),
        (0.0, 1.0, 0.0),
        (2.0, 0.5, 0.2),
        (0.0, 2.0, -0.4),
    ] {
        let p = GevParams::new(mu, sigma, xi).unwrap();
        let (lo, hi) = p.support();
        let lo = if lo.is_finite() {
            lo
        } else {
            p.quantile(1e-300f64.max(1e-200)).unwrap()
        };
        let hi = if hi.is_finite() {
            hi
        } else {
            p.quantile(1.0 - 1e-16).unwrap()
        };
        // Heavy right tail for ξ > 0: extend well beyond the quantile.
        let hi = if xi > 0.0 { hi * 1e3 } else { hi };
        let total = if xi > 0.0 {
            // Integrate in log space of the bracket to tame the tail.
            let t_lo = (1e-12f64).ln();
            let t_hi = ((1.0 + xi * (hi - mu) / sigma) as f64).ln();
            common::integrate(
                |t| {
                    let x = mu + sigma * (t.exp() - 1.0) / xi;
                    p.pdf(x) * sigma * t.exp() / xi
                },
                t_lo,
                t_hi,
                4000,
            ) + (1.0 - p.cdf(hi))
        } else {
            common::integrate(|x| p.pdf(x), lo, hi, 4000)
        };
        assert!(
            (total - 1.0).abs() < 1e-6,
            "({mu},{sigma},{xi}) total {total}"
        );
    }
}

#[test]
fn gumbel_continuity() {
    let g = GevParams::new(1.0, 2.0, 0.0).unwrap();
    for s in [1e-9, -1e-9] {
        let p = GevParams::new(1.0, 2.0, s).unwrap();
        for x in [-3.0, 0.0, 1.0, 4.0, 10.0] {
            assert!((p.cdf(x) - g.cdf(x)).abs() < 1e-6);
            assert!((p.pdf(x) - g.pdf(x)).abs() < 1e-6);
        }
        for u in [0.01, 0.5, 0.99] {
            assert!((p.quantile(u).unwrap() - g.quantile(u).unwrap()).abs() < 1e-6);
        }
    }
    // Just above the switch the general formula is still continuous.
    let p = GevParams::new(1.0, 2.0, 2e-8).unwrap();
    assert!((p.cdf(3.0) - g.cdf(3.0)).abs() < 1e-6);
}

#[test]
fn frechet_pair_identities() {
    let f = field(35.0, -0.06, 3.5, -0.1);
    let t = 12.5;
    let mu = f.location(0, t);
    let (z, _) = frechet_pair(&f, 0, t, -mu).unwrap();
    assert!((z - 1.0).abs() < 1e-14);
    for y in [-45.0, -38.0, -33.0, -30.0, -10.0] {
        let (z, fp) = frechet_pair(&f, 0, t, y).unwrap();
        let g = f.params(0, t);
        assert!(((-1.0 / z).exp() - g.cdf(-y)).abs() < 1e-10);
        let h = 1e-6 * y.abs();
        let up = frechet_pair(&f, 0, t, y - h).unwrap().0;
        let dn = frechet_pair(&f, 0, t, y + h).unwrap().0;
        let fd = (up - dn) / (2.0 * h);
        assert!(((fp - fd) / fd).abs() < 1e-6, "y={y}: {fp} vs {fd}");
    }
    // Upper endpoint of −y is μ + σ/|ξ|; beyond it the transform is undefined.
    let beyond = -(mu + 3.5 / 0.1 + 1.0);
    assert!(matches!(
        frechet_pair(&f, 0, t, beyond),
        Err(Error::OutOfSupport(_))
    ));
}

#[test]
fn frechet_transform_of_gev_draws_is_unit_frechet() {
    let f = field(35.0, -0.06, 3.5, -0.1);
    let p = f.params(0, 3.0);
    let xs = draws(&p, 10_000, 8);
    let z: Vec<f64> = xs
        .iter()
        .map(|x| frechet_pair(&f, 0, 3.0, -x).unwrap().0)
        .collect();
    let ks = common::ks_statistic(&z, |v| (-1.0 / v).exp());
    assert!(ks < common::ks_critical_1pct(z.len()), "KS {ks}");
}

#[test]
fn mean_forecast_trend_and_limit() {
    let f = field(35.0, -0.06, 3.5, -0.1);
    let m0 = gev_mean_forecast(&f, 0, 0.0).unwrap();
    let m10 = gev_mean_forecast(&f, 0, 10.0).unwrap();
    assert!((m10 - m0 - 0.6).abs() < 1e-12);
    let g = field(35.0, 0.0, 3.5, 1e-12);
    let m = gev_mean_forecast(&g, 0, 0.0).unwrap();
    assert!((m - -(35.0 + 3.5 * 0.577_215_664_901_532_9)).abs() < 1e-9);
    assert!(matches!(
        gev_mean_forecast(&field(35.0, 0.0, 3.5, 1.0), 0, 0.0),
        Err(Error::ShapeTooLarge(_))
    ));
}

#[test]
fn mean_forecast_matches_monte_carlo() {
    let f = field(35.0, 0.0, 3.5, -0.1);
    let xs = draws(&f.params(0, 0.0), 1_000_000, 21);
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let formula = -gev_mean_forecast(&f, 0, 0.0).unwrap();
    assert!(
        (mean - formula).abs() < 3.0 * sd / n.sqrt(),
        "{mean} vs {formula}"
    );
}

#[test]
fn fit_recovers_simulated_parameters() {
    let truth = table_params();
    let xs = draws(&truth, 500, 4);
    let fit = fit_gev_site(&xs).unwrap();
    let est = [fit.params.mu, fit.params.sigma, fit.params.xi];
    let tru = [truth.mu, truth.sigma, truth.xi];
    for k in 0..3 {
        assert!(
            (est[k] - tru[k]).abs() < 3.0 * fit.std_errors[k],
            "param {k}: {} vs {}",
            est[k],
            tru[k]
        );
    }
}

#[test]
fn fit_degenerate_and_equivariance() {
    assert!(matches!(
        fit_gev_site(&[-30.0; 40]),
        Err(Error::NonConvergence(_))
    ));
    let xs = draws(&table_params(), 200, 5);
    let a = fit_gev_site(&xs).unwrap();
    let c = 7.25;
    let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
    let b = fit_gev_site(&shifted).unwrap();
    assert!((b.params.mu - a.params.mu - c).abs() < 1e-8);
    assert!((b.params.sigma - a.params.sigma).abs() < 1e-8);
    assert!((b.params.xi - a.params.xi).abs() < 1e-8);
}

#[test]
fn exceedance_endpoints_and_frequency() {
    let f = field(35.0, -0.06, 3.5, -0.1);
    let p = f.params(0, 16.0);
    let (_, upper) = p.support();
    // Threshold below the lower endpoint of the minima → certain exceedance.
    assert_eq!(exceedance_prob(&f, 0, 16.0, -upper - 1.0), 1.0);
    // Threshold far above every attainable minimum → almost never exceeded.
    let g = field(35.0, 0.0, 3.5, 0.2);
    let (lower, _) = g.params(0, 0.0).support();
    assert_eq!(exceedance_prob(&g, 0, 0.0, -lower + 1.0), 0.0);

    let xs = draws(&p, 100_000, 9);
    let freq = xs.iter().filter(|x| -**x > -36.0).count() as f64 / xs.len() as f64;
    let prob = exceedance_prob(&f, 0, 16.0, -36.0);
    assert!((freq - prob).abs() < 0.005, "{freq} vs {prob}");
}

proptest! {
    #[test]
    fn round_trip_property(mu in -50.0f64..50.0, sigma in 0.1f64..10.0, xi in -0.5f64..0.5, u in 0.001f64..0.999) {
        let p = GevParams::new(mu, sigma, xi).unwrap();
        let x = p.quantile(u).unwrap();
        prop_assert!((p.cdf(x) - u).abs() < 1e-10);
        let back = p.quantile(p.cdf(x)).unwrap();
        prop_assert!((back - x).abs() < 1e-8 * (1.0 + x.abs()));
    }
}
