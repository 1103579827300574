//! Posterior-mean maps over prediction points.

use maxstable::likelihood::{time_covariate, Dataset, ParameterState};
use maxstable::margins::{mean_minimum, GevParams};
use maxstable::simulation::{krige_random_effect, KrigingInput};
use nalgebra::DMatrix;

use crate::Result;

/// Time covariate of a winter's midpoint (day 61, 30 January).
pub fn mid_winter(winter: i32) -> Result<f64> {
    time_covariate(winter, 61)
}

/// Posterior mean over `draws` of the mean winter minimum and of
/// `Pr(minimum > threshold)` at each point, for one winter.
pub fn mean_and_exceedance(
    data: &Dataset,
    draws: &[ParameterState],
    points: &[[f64; 2]],
    grid_x: &DMatrix<f64>,
    winter: i32,
    threshold: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = mid_winter(winter)?;
    let n = points.len();
    let mut mean = vec![0.0; n];
    let mut exceed = vec![0.0; n];
    for s in draws {
        let f = &s.field;
        let input = KrigingInput {
            station_coords: data.sites.coords(),
            station_x: &data.x,
            u: &f.u,
            beta: &f.beta,
            tau2: f.tau2,
            delta: f.delta,
        };
        let u = krige_random_effect(&input, points, grid_x)?;
        for g in 0..n {
            mean[g] += mean_minimum(u[g], f.alpha, f.sigma, f.xi, t)?;
            let p = GevParams {
                mu: u[g] + f.alpha * t,
                sigma: f.sigma,
                xi: f.xi,
            };
            exceed[g] += p.cdf(-threshold);
        }
    }
    let m = draws.len().max(1) as f64;
    mean.iter_mut().for_each(|v| *v /= m);
    exceed.iter_mut().for_each(|v| *v /= m);
    Ok((mean, exceed))
}

/// Posterior mean of the latent location effect at each point.
pub fn latent_effect_map(
    data: &Dataset,
    draws: &[ParameterState],
    points: &[[f64; 2]],
    grid_x: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; points.len()];
    for s in draws {
        let f = &s.field;
        let input = KrigingInput {
            station_coords: data.sites.coords(),
            station_x: &data.x,
            u: &f.u,
            beta: &f.beta,
            tau2: f.tau2,
            delta: f.delta,
        };
        for (o, v) in out
            .iter_mut()
            .zip(krige_random_effect(&input, points, grid_x)?)
        {
            *o += v;
        }
    }
    let m = draws.len().max(1) as f64;
    out.iter_mut().for_each(|v| *v /= m);
    Ok(out)
}
