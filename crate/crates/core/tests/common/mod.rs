//! Independent numerical oracles shared by the integration tests.
//!
//! Nothing here calls into the library's normal-cdf, exponent-function or
//! simulation code: bivariate and trivariate normal probabilities come from
//! composite Gauss–Legendre quadrature, and derivatives from finite
//! differences.

#![allow(dead_code)]

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn dphi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (mut q0, mut q1) = (1.0, z);
                for k in 2..=n {
                    let q2 = ((2 * k - 1) as f64 * z * q1 - (k - 1) as f64 * q0) / k as f64;
                    q0 = q1;
                    q1 = q2;
                }
                let dq = n as f64 * (z * q1 - q0) / (z * z - 1.0);
                w[i] = 2.0 / ((1.0 - z * z) * dq * dq);
                break;
            }
        }
        x[i] = z;
    }
    (x, w)
}

/// Composite Gauss–Legendre integral of `f` over [a, b].
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (x, w) = gauss_legendre(20);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        for (xi, wi) in x.iter().zip(&w) {
            total += wi * f(mid + 0.5 * h * xi);
        }
    }
    0.5 * h * total
}

/// Pr(X ≤ b) for X ~ N(0, C), dimension 1..=3, by nested quadrature.
pub fn normal_cdf_quad(b: &[f64], c: &[Vec<f64>]) -> f64 {
    match b.len() {
        0 => 1.0,
        1 => phi(b[0] / c[0][0].sqrt()),
        _ => {
            // Condition on the first coordinate X1 = s·x, s = sqrt(c11).
            let s = c[0][0].sqrt();
            let n = b.len();
            let hi = (b[0] / s).min(9.0);
            let lo = -9.0;
            let cond_cov: Vec<Vec<f64>> = (1..n)
                .map(|i| {
                    (1..n)
                        .map(|j| c[i][j] - c[i][0] * c[0][j] / c[0][0])
                        .collect()
                })
                .collect();
            let f = |x: f64| {
                let x1 = s * x;
                let bb: Vec<f64> = (1..n).map(|i| b[i] - c[i][0] / c[0][0] * x1).collect();
                dphi(x) * normal_cdf_quad(&bb, &cond_cov)
            };
            integrate(f, lo, hi, if n == 2 { 60 } else { 24 })
        }
    }
}

/// Exponent function of the Brown–Resnick vector with semivariogram matrix `g`,
/// from quadrature normal probabilities.
pub fn exponent_v_quad(z: &[f64], g: &[Vec<f64>]) -> f64 {
    let d = z.len();
    let mut v = 0.0;
    for j in 0..d {
        let others: Vec<usize> = (0..d).filter(|&k| k != j).collect();
        let upper: Vec<f64> = others
            .iter()
            .map(|&k| (z[k] / z[j]).ln() + g[k][j])
            .collect();
        let cov: Vec<Vec<f64>> = others
            .iter()
            .map(|&a| {
                others
                    .iter()
                    .map(|&b| g[a][j] + g[b][j] - g[a][b])
                    .collect()
            })
            .collect();
        v += normal_cdf_quad(&upper, &cov) / z[j];
    }
    v
}

/// Bivariate Hüsler–Reiss exponent function, `a² = 2γ(h)`.
pub fn husler_reiss_v(z1: f64, z2: f64, a: f64) -> f64 {
    let r = (z2 / z1).ln();
    phi(a / 2.0 + r / a) / z1 + phi(a / 2.0 - r / a) / z2
}

/// Central finite-difference estimate of ∂^D f / ∂z_1 … ∂z_D with relative steps.
pub fn mixed_derivative<F: Fn(&[f64]) -> f64>(f: F, z: &[f64], rel_step: f64) -> f64 {
    let d = z.len();
    let h: Vec<f64> = z.iter().map(|v| v * rel_step).collect();
    let mut total = 0.0;
    let mut point = vec![0.0; d];
    for signs in 0..(1u32 << d) {
        let mut sgn = 1.0;
        for i in 0..d {
            let plus = signs & (1 << i) != 0;
            point[i] = if plus { z[i] + h[i] } else { z[i] - h[i] };
            if !plus {
                sgn = -sgn;
            }
        }
        total += sgn * f(&point);
    }
    total / h.iter().map(|x| 2.0 * x).product::<f64>()
}

/// Semivariogram matrix for the stable variogram.
pub fn semivariogram_matrix(coords: &[[f64; 2]], lambda: f64, kappa: f64) -> Vec<Vec<f64>> {
    coords
        .iter()
        .map(|a| {
            coords
                .iter()
                .map(|b| ((a[0] - b[0]).hypot(a[1] - b[1]) / lambda).powf(kappa))
                .collect()
        })
        .collect()
}

/// Kolmogorov–Smirnov statistic of a sample against a continuous cdf.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

pub mod synthetic;
