use maxstable::mcmc::{Param, ScalarPrior};
use maxstable_io::config::{FitMode, KeyValues, Settings};
use maxstable_io::Error;
use proptest::prelude::*;

#[test]
fn parses_comments_and_values() {
    let text = "# run\nseed = 42\n\nfit.mode = m2\nmcmc.chains=4\nprior.kappa = uniform(0,2)\ngroup.west = 5,16,17,18,19\nmcmc.blocks = alpha|sigma,xi|lambda,kappa|delta\nsimulate.winters = 1975:1980\nmcmc.scale.kappa = 0.05\n";
    let s: Settings = text.parse().unwrap();
    assert_eq!(s.seed, 42);
    assert_eq!(s.mode, FitMode::M2);
    assert_eq!(s.chain.n_chains, 4);
    assert_eq!(s.priors.kappa, ScalarPrior::Uniform { lo: 0.0, hi: 2.0 });
    assert_eq!(s.groups["west"], [5, 16, 17, 18, 19]);
    assert_eq!(s.chain.blocks.len(), 4);
    assert_eq!(s.chain.blocks[1], [Param::Sigma, Param::Xi]);
    assert_eq!(s.winters, [1975, 1976, 1977, 1978, 1979, 1980]);
    assert!(s.chain.proposal_scales.contains(&(Param::Kappa, 0.05)));
}

#[test]
fn resolved_settings_round_trip() {
    let text = "seed = 7\nfit.mode = m2\nprior.beta_mean = 30,1,0\nprior.beta_precision = 0.01\nprior.alpha = normal(0,0.5)\ndecluster.max_km = 150\ngroup.north = 1,2\npredict.years = 1980,2016,2030\nmcmc.fixed = delta\nmcmc.blocks = alpha|sigma,xi|lambda,kappa\n";
    let s: Settings = text.parse().unwrap();
    let resolved = s.to_string();
    let again: Settings = resolved.parse().unwrap();
    assert_eq!(again, s);
    assert_eq!(again.to_string(), resolved);
    assert_eq!(s.priors.beta_mean.len(), 3);
    assert_eq!(s.priors.beta_precision[(2, 2)], 0.01);
    assert_eq!(
        Settings::default().to_string().parse::<Settings>().unwrap(),
        Settings::default()
    );
}

#[test]
fn errors_carry_line_numbers() {
    match "seed = 1\nno equals here\n".parse::<KeyValues>() {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    match "a = 1\n\na = 2\n".parse::<KeyValues>() {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        "bad key! = 1".parse::<KeyValues>(),
        Err(Error::Parse { .. })
    ));
    for bad in [
        "sede = 1",
        "seed = x",
        "prior.kappa = gamma(1,2)",
        "prior.sigma = lognormal(1,-2)",
        "fit.mode = m4",
        "group.g = 0,1",
        "diagnose.bins = 5,1",
    ] {
        assert!(
            matches!(bad.parse::<Settings>(), Err(Error::ConfigInvalid(_))),
            "{bad}"
        );
    }
}

proptest! {
    #[test]
    fn key_values_round_trip(entries in proptest::collection::btree_map("[a-z][a-z0-9_.]{0,12}", "[ -~&&[^#=]]{0,20}", 0..8)) {
        let mut kv = KeyValues::default();
        for (k, v) in &entries {
            kv.set(k, v.trim());
        }
        let back: KeyValues = kv.to_string().parse().unwrap();
        prop_assert_eq!(back, kv);
    }

    #[test]
    fn numeric_settings_round_trip(seed in any::<u64>(), lag in 0u32..50, res in 0.1f64..1e3, thr in -60.0f64..0.0, sd in 0.01f64..10.0) {
        let mut s = Settings { seed, lag, grid_resolution: res, threshold: thr, ..Default::default() };
        s.priors.alpha = ScalarPrior::Normal { mean: -thr, sd };
        let back: Settings = s.to_string().parse().unwrap();
        prop_assert_eq!(back, s);
    }
}
