//! Multivariate normal orthant probabilities.
//!
//! Separation-of-variables (sequential conditioning) with Genz-Bretz variable
//! prioritization, integrated by randomly shifted rank-1 Richtmyer lattices
//! with the tent transform and antithetic pairs. The standard error is taken
//! from the spread of the per-shift means.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::normal;
use crate::seed;

/// Number of independent random shifts used for the error estimate.
pub const N_SHIFTS: usize = 10;

const PRIMES: [u32; 64] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251, 257, 263, 269, 271, 277, 281, 283, 293, 307,
    311,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl MvnEstimate {
    fn exact(value: f64, seed: u64) -> Self {
        Self {
            value,
            std_error: 0.0,
            n_samples: 0,
            seed,
        }
    }
}

/// Estimate `Pr(X ≤ upper)` for `X ~ N(mean, cov)`.
///
/// Coordinates with `upper = +∞` are marginalized out exactly; any `−∞`
/// gives probability zero. Dimensions 0 and 1 are evaluated in closed form.
pub fn mvn_cdf(
    upper: &[f64],
    mean: &[f64],
    cov: &DMatrix<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<MvnEstimate> {
    let d = upper.len();
    if mean.len() != d || cov.nrows() != d || cov.ncols() != d {
        return Err(Error::InvalidParameter(format!(
            "dimension mismatch: upper {d}, mean {}, cov {}x{}",
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    if upper.iter().chain(mean).any(|x| x.is_nan()) {
        return Err(Error::InvalidParameter(
            "NaN in normal cdf arguments".into(),
        ));
    }
    if upper.iter().any(|&u| u == f64::NEG_INFINITY) {
        return Ok(MvnEstimate::exact(0.0, seed));
    }
    let keep: Vec<usize> = (0..d).filter(|&i| upper[i] != f64::INFINITY).collect();
    let m = keep.len();
    if m == 0 {
        return Ok(MvnEstimate::exact(1.0, seed));
    }
    let b: Vec<f64> = keep.iter().map(|&i| upper[i] - mean[i]).collect();
    let c = DMatrix::from_fn(m, m, |i, j| cov[(keep[i], keep[j])]);
    if m == 1 {
        if !(c[(0, 0)] > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        return Ok(MvnEstimate::exact(
            normal::cdf(b[0] / c[(0, 0)].sqrt()),
            seed,
        ));
    }
    let factor = PivotedFactor::new(c, b)?;
    Ok(factor.integrate(n_samples, seed))
}

/// Lower-triangular factor of the reordered covariance with the matching
/// reordered limits.
struct PivotedFactor {
    m: usize,
    /// Row-major lower triangle, `l[i*m + j]` for j ≤ i.
    l: Vec<f64>,
    b: Vec<f64>,
}

impl PivotedFactor {
    fn new(mut c: DMatrix<f64>, mut b: Vec<f64>) -> Result<Self> {
        let m = b.len();
        // Validate positive definiteness up front; a jittered matrix replaces
        // the original when only the retry succeeds.
        if nalgebra::Cholesky::new(c.clone()).is_none() {
            let mean_diag = c.diagonal().sum() / m as f64;
            if !(mean_diag > 0.0) {
                return Err(Error::NotPositiveDefinite);
            }
            for i in 0..m {
                c[(i, i)] += 1e-10 * mean_diag;
            }
            if nalgebra::Cholesky::new(c.clone()).is_none() {
                return Err(Error::NotPositiveDefinite);
            }
        }
        let mut l = vec![0.0; m * m];
        let mut y = vec![0.0; m];
        for i in 0..m {
            // Pick the remaining variable with the smallest conditional probability.
            let mut best = i;
            let mut best_p = f64::INFINITY;
            for k in i..m {
                let s2: f64 = (0..i).map(|j| l[k * m + j] * l[k * m + j]).sum();
                let var = c[(k, k)] - s2;
                if var <= 0.0 {
                    continue;
                }
                let mu: f64 = (0..i).map(|j| l[k * m + j] * y[j]).sum();
                let p = normal::cdf((b[k] - mu) / var.sqrt());
                if p < best_p {
                    best_p = p;
                    best = k;
                }
            }
            if best != i {
                c.swap_rows(i, best);
                c.swap_columns(i, best);
                b.swap(i, best);
                for j in 0..i {
                    l.swap(i * m + j, best * m + j);
                }
            }
            let s2: f64 = (0..i).map(|j| l[i * m + j] * l[i * m + j]).sum();
            let var = c[(i, i)] - s2;
            if !(var > 0.0) {
                return Err(Error::NotPositiveDefinite);
            }
            let lii = var.sqrt();
            l[i * m + i] = lii;
            for r in (i + 1)..m {
                let s: f64 = (0..i).map(|j| l[r * m + j] * l[i * m + j]).sum();
                l[r * m + i] = (c[(r, i)] - s) / lii;
            }
            // Expected value of the truncated variable drives the next choice.
            let mu: f64 = (0..i).map(|j| l[i * m + j] * y[j]).sum();
            let u = (b[i] - mu) / lii;
            let p = normal::cdf(u);
            y[i] = if p > 1e-300 { -normal::pdf(u) / p } else { u };
        }
        Ok(Self { m, l, b })
    }

    /// Integrand at a point of the unit cube of dimension m − 1.
    #[inline]
    fn integrand(&self, w: &[f64], y: &mut [f64], e0: f64) -> f64 {
        let m = self.m;
        let mut e = e0;
        let mut prod = e0;
        for i in 1..m {
            let p = (w[i - 1] * e).clamp(1e-300, 1.0 - 1e-16);
            y[i - 1] = normal::quantile(p);
            let row = &self.l[i * m..i * m + i];
            let s: f64 = row.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
            e = normal::cdf((self.b[i] - s) / self.l[i * m + i]);
            prod *= e;
            if prod == 0.0 {
                break;
            }
        }
        prod
    }

    fn integrate(&self, n_samples: usize, seed_value: u64) -> MvnEstimate {
        let m = self.m;
        let dim = m - 1;
        let e0 = normal::cdf(self.b[0] / self.l[0]);
        let per_shift = (n_samples / (2 * N_SHIFTS)).max(1);
        let alpha: Vec<f64> = PRIMES
            .iter()
            .cycle()
            .take(dim)
            .enumerate()
            .map(|(k, &p)| {
                let s = (p as f64).sqrt() * (1 + k / PRIMES.len()) as f64;
                s - s.floor()
            })
            .collect();
        let mut rng = seed::rng_from(seed_value, &[0x4D56_4E]);
        let mut x = vec![0.0; dim];
        let mut w = vec![0.0; dim];
        let mut wa = vec![0.0; dim];
        let mut y = vec![0.0; m];
        let mut means = [0.0; N_SHIFTS];
        for mean in means.iter_mut() {
            for xi in x.iter_mut() {
                *xi = rng.random::<f64>();
            }
            let mut acc = 0.0;
            for _ in 0..per_shift {
                for i in 0..dim {
                    let mut v = x[i] + alpha[i];
                    if v >= 1.0 {
                        v -= 1.0;
                    }
                    x[i] = v;
                    let t = (2.0 * v - 1.0).abs();
                    w[i] = t;
                    wa[i] = 1.0 - t;
                }
                acc += 0.5 * (self.integrand(&w, &mut y, e0) + self.integrand(&wa, &mut y, e0));
            }
            *mean = acc / per_shift as f64;
        }
        let k = N_SHIFTS as f64;
        let value = means.iter().sum::<f64>() / k;
        let var = means.iter().map(|v| (v - value).powi(2)).sum::<f64>() / (k - 1.0);
        MvnEstimate {
            value: value.clamp(0.0, 1.0),
            std_error: (var / k).sqrt(),
            n_samples: per_shift * 2 * N_SHIFTS,
            seed: seed_value,
        }
    }
}
