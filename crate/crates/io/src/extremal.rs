//! Empirical pairwise extremal coefficients by the F-madogram.

use maxstable::likelihood::Dataset;
use maxstable::mcmc::quantile;
use rand::Rng;

use crate::{Error, Result};

/// Minimum number of shared winters for a pair to contribute.
pub const MIN_SHARED: usize = 5;

/// Binned estimate. `theta` is clamped to `[1, 2]`; `clamped` records
/// whether the raw value fell outside.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaBin {
    pub lo: f64,
    pub hi: f64,
    pub n_pairs: usize,
    pub raw: f64,
    pub theta: f64,
    pub clamped: bool,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Ranks scaled to `(0, 1)`: `rank / (n + 1)`, ties averaged.
pub fn empirical_uniform(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut u = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            u[idx[k]] = rank / (n as f64 + 1.0);
        }
        i = j + 1;
    }
    u
}

/// Raw F-madogram estimate `(1 + 2ν)/(1 − 2ν)` with `ν = ½ mean|F(a) − F(b)|`.
pub fn fmadogram_theta(a: &[f64], b: &[f64]) -> f64 {
    let (ua, ub) = (empirical_uniform(a), empirical_uniform(b));
    let nu = 0.5 * ua.iter().zip(&ub).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    (1.0 + 2.0 * nu) / (1.0 - 2.0 * nu)
}

/// Pairs of stations with their distance and the positions (in
/// `data.years`) of their shared winters, with the paired minima.
fn pair_series(data: &Dataset, years: &[usize], i: usize, j: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for &k in years {
        let y = &data.years[k];
        if let (Ok(p), Ok(q)) = (y.sites.binary_search(&i), y.sites.binary_search(&j)) {
            a.push(y.minima[p]);
            b.push(y.minima[q]);
        }
    }
    (a, b)
}

fn bin_means(data: &Dataset, edges: &[f64], years: &[usize]) -> Vec<(usize, f64)> {
    let nb = edges.len() - 1;
    let mut sum = vec![0.0; nb];
    let mut count = vec![0usize; nb];
    let d = data.n_sites();
    for i in 0..d {
        for j in i + 1..d {
            let h = data.sites.distance(i, j);
            let Some(bin) = (0..nb).find(|&k| h >= edges[k] && h < edges[k + 1]) else {
                continue;
            };
            let (a, b) = pair_series(data, years, i, j);
            if a.len() < MIN_SHARED {
                continue;
            }
            sum[bin] += fmadogram_theta(&a, &b);
            count[bin] += 1;
        }
    }
    (0..nb)
        .map(|k| {
            (
                count[k],
                if count[k] > 0 {
                    sum[k] / count[k] as f64
                } else {
                    f64::NAN
                },
            )
        })
        .collect()
}

/// Binned pairwise extremal coefficients with percentile bootstrap
/// intervals over winters. Bins without pairs are omitted with a warning.
pub fn empirical_extremal_coefficients<R: Rng + ?Sized>(
    data: &Dataset,
    edges: &[f64],
    n_boot: usize,
    rng: &mut R,
) -> Result<Vec<ThetaBin>> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(
            "bin edges must be increasing".into(),
        ));
    }
    let all: Vec<usize> = (0..data.n_years()).collect();
    let point = bin_means(data, edges, &all);
    let mut boot: Vec<Vec<f64>> = vec![Vec::with_capacity(n_boot); point.len()];
    for _ in 0..n_boot {
        let years: Vec<usize> = (0..all.len())
            .map(|_| rng.random_range(0..all.len()))
            .collect();
        for (k, (_, m)) in bin_means(data, edges, &years).into_iter().enumerate() {
            if m.is_finite() {
                boot[k].push(m.clamp(1.0, 2.0));
            }
        }
    }
    let mut out = Vec::new();
    for (k, (n, raw)) in point.into_iter().enumerate() {
        if n == 0 {
            log::warn!(
                "no station pairs in distance bin [{}, {})",
                edges[k],
                edges[k + 1]
            );
            continue;
        }
        let theta = raw.clamp(1.0, 2.0);
        boot[k].sort_by(|a, b| a.total_cmp(b));
        let (ci_lo, ci_hi) = if boot[k].is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (quantile(&boot[k], 0.025), quantile(&boot[k], 0.975))
        };
        out.push(ThetaBin {
            lo: edges[k],
            hi: edges[k + 1],
            n_pairs: n,
            raw,
            theta,
            clamped: theta != raw,
            ci_lo,
            ci_hi,
        });
    }
    Ok(out)
}
