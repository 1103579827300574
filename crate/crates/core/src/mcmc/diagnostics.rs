//! Convergence diagnostics and posterior summaries.

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = if x.len() > 1 {
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v)
}

fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        if half == 0 {
            continue;
        }
        out.push(&c[..half]);
        out.push(&c[c.len() - half..]);
    }
    out
}

/// Split-chain potential scale reduction factor.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let parts = split(chains);
    let m = parts.len();
    if m < 2 {
        return f64::NAN;
    }
    let n = parts[0].len() as f64;
    let stats: Vec<(f64, f64)> = parts.iter().map(|c| mean_var(c)).collect();
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m as f64;
    let b = n / (m as f64 - 1.0) * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m as f64;
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

fn autocovariance(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let (m, _) = mean_var(x);
    (0..=max_lag.min(n - 1))
        .map(|k| (0..n - k).map(|i| (x[i] - m) * (x[i + k] - m)).sum::<f64>() / n as f64)
        .collect()
}

/// Multi-chain effective sample size from split chains, truncating the
/// autocorrelation sum with Geyer's initial monotone positive sequence.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let parts = split(chains);
    let m = parts.len();
    if m == 0 {
        return f64::NAN;
    }
    let n = parts[0].len();
    if n < 4 {
        return (m * n) as f64;
    }
    let acov: Vec<Vec<f64>> = parts.iter().map(|c| autocovariance(c, n - 1)).collect();
    let stats: Vec<(f64, f64)> = parts.iter().map(|c| mean_var(c)).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m as f64;
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m as f64;
    let b = if m > 1 {
        n as f64 / (m as f64 - 1.0) * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>()
    } else {
        0.0
    };
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    if var_plus <= 0.0 {
        return (m * n) as f64;
    }
    let rho = |t: usize| -> f64 {
        let mean_acov = acov
            .iter()
            .map(|a| a.get(t).copied().unwrap_or(0.0))
            .sum::<f64>()
            / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };
    let mut pair_sums = Vec::new();
    let mut t = 0;
    while t + 1 < n {
        let p = rho(t) + rho(t + 1);
        if p <= 0.0 {
            break;
        }
        pair_sums.push(p);
        t += 2;
    }
    for i in 1..pair_sums.len() {
        if pair_sums[i] > pair_sums[i - 1] {
            pair_sums[i] = pair_sums[i - 1];
        }
    }
    let tau = -1.0 + 2.0 * pair_sums.iter().sum::<f64>();
    let total = (m * n) as f64;
    (total / tau.max(1.0 / total.log10().max(1.0))).min(total * total.log10().max(1.0))
}

/// Posterior summary of one scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    pub rhat: f64,
    pub ess: f64,
}

pub fn summarize(name: &str, chains: &[Vec<f64>]) -> ParamSummary {
    let mut all: Vec<f64> = chains.iter().flatten().copied().collect();
    let (mean, var) = mean_var(&all);
    all.sort_by(|a, b| a.total_cmp(b));
    ParamSummary {
        name: name.to_string(),
        mean,
        sd: var.sqrt(),
        q025: quantile(&all, 0.025),
        q975: quantile(&all, 0.975),
        rhat: split_rhat(chains),
        ess: effective_sample_size(chains),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn ar1(phi: f64, n: usize, shift: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                x = phi * x + (1.0 - phi * phi).sqrt() * rng.sample::<f64, _>(StandardNormal);
                x + shift
            })
            .collect()
    }

    #[test]
    fn quantile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.0), 1.0);
        assert_eq!(quantile(&s, 1.0), 4.0);
        assert!((quantile(&s, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn rhat_near_one_for_mixed_chains() {
        let chains: Vec<Vec<f64>> = (0..4).map(|c| ar1(0.5, 2000, 0.0, c)).collect();
        let r = split_rhat(&chains);
        assert!((r - 1.0).abs() < 0.02, "{r}");
        let mut bad = chains.clone();
        bad[0] = ar1(0.5, 2000, 3.0, 9);
        assert!(split_rhat(&bad) > 1.2);
    }

    #[test]
    fn ess_matches_ar1_theory() {
        // For AR(1), ESS/N = (1 − φ)/(1 + φ).
        let phi = 0.8;
        let chains: Vec<Vec<f64>> = (0..4).map(|c| ar1(phi, 20_000, 0.0, 10 + c)).collect();
        let ess = effective_sample_size(&chains);
        let expect = 80_000.0 * (1.0 - phi) / (1.0 + phi);
        assert!((ess / expect - 1.0).abs() < 0.15, "{ess} vs {expect}");
        let iid: Vec<Vec<f64>> = (0..2).map(|c| ar1(0.0, 5000, 0.0, 30 + c)).collect();
        let e = effective_sample_size(&iid);
        assert!((e / 10_000.0 - 1.0).abs() < 0.15, "{e}");
    }
}
