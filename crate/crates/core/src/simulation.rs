//! Exact simulation of the Brown–Resnick process, temperature fields,
//! kriging of the latent location effect and predictive group extremes.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::gaussian::{cholesky_with_jitter, distance, Point, SiteSet, StableVariogram};
use crate::likelihood::{time_covariate, Dataset, ParameterState, YearData, WINTER_DAYS};
use crate::margins::{exponential_correlation, GevParams};
use crate::partitions::SetPartition;
use crate::seed;

const TAG_ARRIVALS: u64 = 0x4152_5256;
const TAG_FUNCTION: u64 = 0x4655_4E43;

/// One draw of the simple process together with the partition of sites by
/// the spectral function that attains their maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct BrDraw {
    pub z: Vec<f64>,
    pub partition: SetPartition,
}

/// Gaussian field with ε pinned to zero at the first site.
///
/// Values are produced by a Cholesky factor in site order, so appending sites
/// leaves the values at the earlier sites unchanged for the same normals.
#[derive(Debug, Clone)]
pub struct PinnedField {
    gamma: DMatrix<f64>,
    factor: Option<Cholesky<f64, Dyn>>,
}

impl PinnedField {
    pub fn new(coords: &[Point], v: &StableVariogram) -> Result<Self> {
        let n = coords.len();
        if n == 0 {
            return Err(Error::InvalidParameter("no sites to simulate".into()));
        }
        let gamma = DMatrix::from_fn(n, n, |i, j| v.gamma_at(distance(coords[i], coords[j])));
        let factor = if n > 1 {
            let cov = DMatrix::from_fn(n - 1, n - 1, |i, j| {
                gamma[(i + 1, 0)] + gamma[(j + 1, 0)] - gamma[(i + 1, j + 1)]
            });
            Some(cholesky_with_jitter(&cov)?)
        } else {
            None
        };
        Ok(Self { gamma, factor })
    }

    pub fn len(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Draw ε at every site with ε(s_1) = 0.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut eps = vec![0.0; self.len()];
        if let Some(c) = &self.factor {
            let rest = crate::gaussian::correlated_normals(c.l_dirty(), rng);
            eps[1..].copy_from_slice(&rest);
        }
        eps
    }

    /// Extremal function anchored at site `k`: `exp{ε(s) − ε(s_k) − γ(s − s_k)}`.
    pub fn extremal_function<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        let eps = self.sample(rng);
        (0..self.len())
            .map(|j| (eps[j] - eps[k] - self.gamma[(j, k)]).exp())
            .collect()
    }
}

/// Exact draw of the simple Brown–Resnick process at the sites.
pub fn simulate_simple_br(sites: &SiteSet, v: &StableVariogram, seed_value: u64) -> Result<BrDraw> {
    let field = PinnedField::new(sites.coords(), v)?;
    Ok(simulate_with_field(&field, seed_value))
}

/// Extremal-functions sampler. Arrivals for site `k` and the `i`-th function
/// drawn at site `k` use generators keyed by `(k, i)`.
pub fn simulate_with_field(field: &PinnedField, seed_value: u64) -> BrDraw {
    let d = field.len();
    let mut z = vec![0.0; d];
    // Generating function of each site's maximum as (k, i).
    let mut owner = vec![(usize::MAX, 0usize); d];
    for k in 0..d {
        let mut arrivals = seed::rng_from(seed_value, &[TAG_ARRIVALS, k as u64]);
        let mut zeta: f64 = arrivals.sample(Exp1);
        let mut i = 0usize;
        while 1.0 / zeta > z[k] {
            let mut rng = seed::rng_from(seed_value, &[TAG_FUNCTION, k as u64, i as u64]);
            let y = field.extremal_function(k, &mut rng);
            if (0..k).all(|j| y[j] / zeta < z[j]) {
                for j in 0..d {
                    let cand = y[j] / zeta;
                    if cand > z[j] {
                        z[j] = cand;
                        owner[j] = (k, i);
                    }
                }
            }
            zeta += arrivals.sample::<f64, _>(Exp1);
            i += 1;
        }
    }
    let mut keys: Vec<(usize, usize)> = owner.clone();
    keys.sort_unstable();
    keys.dedup();
    let labels: Vec<usize> = owner
        .iter()
        .map(|o| keys.binary_search(o).expect("present"))
        .collect();
    let ground: Vec<usize> = (0..d).collect();
    let partition = SetPartition::from_labels(&ground, &labels).expect("labels cover the sites");
    BrDraw { z, partition }
}

/// GEV draw from a unit-Fréchet value, `μ + σ{Z^ξ − 1}/ξ`.
pub fn frechet_to_gev(z: f64, p: &GevParams) -> f64 {
    if p.xi.abs() < crate::margins::GUMBEL_EPS {
        p.mu + p.sigma * z.ln()
    } else {
        p.mu + p.sigma * (z.powf(p.xi) - 1.0) / p.xi
    }
}

/// Field of winter minima (°C). `params[i]` are the GEV parameters of the
/// negated minimum at point `i`.
pub fn simulate_temperature_field(
    points: &[Point],
    params: &[GevParams],
    dep: &StableVariogram,
    seed_value: u64,
) -> Result<Vec<f64>> {
    if points.len() != params.len() {
        return Err(Error::InvalidParameter(
            "one GEV parameter set is needed per point".into(),
        ));
    }
    let field = PinnedField::new(points, dep)?;
    let draw = simulate_with_field(&field, seed_value);
    Ok(draw
        .z
        .iter()
        .zip(params)
        .map(|(&z, p)| -frechet_to_gev(z, p))
        .collect())
}

/// Regular grid clipped to the convex hull of the stations.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub origin: Point,
    pub resolution: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major (y outer) mask of cells whose centre lies in the hull.
    pub mask: Vec<bool>,
}

impl GridSpec {
    pub fn over_hull(coords: &[Point], resolution: f64) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid resolution {resolution} must be positive"
            )));
        }
        if coords.is_empty() {
            return Err(Error::InvalidParameter(
                "no stations to bound the grid".into(),
            ));
        }
        let hull = convex_hull(coords);
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in coords {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let nx = ((hi[0] - lo[0]) / resolution).floor() as usize + 1;
        let ny = ((hi[1] - lo[1]) / resolution).floor() as usize + 1;
        let mut mask = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                let p = [
                    lo[0] + ix as f64 * resolution,
                    lo[1] + iy as f64 * resolution,
                ];
                mask.push(inside_hull(&hull, p));
            }
        }
        Ok(Self {
            origin: lo,
            resolution,
            nx,
            ny,
            mask,
        })
    }

    /// Centres of the cells inside the hull.
    pub fn points(&self) -> Vec<Point> {
        let mut out = Vec::new();
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                if self.mask[iy * self.nx + ix] {
                    out.push([
                        self.origin[0] + ix as f64 * self.resolution,
                        self.origin[1] + iy as f64 * self.resolution,
                    ]);
                }
            }
        }
        out
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (monotone chain).
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Point-in-hull test with a small tolerance so stations on edges count.
pub fn inside_hull(hull: &[Point], p: Point) -> bool {
    match hull.len() {
        0 => false,
        1 => distance(hull[0], p) < 1e-9,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            cross(a, b, p).abs() < 1e-9 * (1.0 + distance(a, b)) && {
                let t = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1]))
                    / distance(a, b).powi(2);
                (-1e-12..=1.0 + 1e-12).contains(&t)
            }
        }
        n => (0..n).all(|i| {
            cross(hull[i], hull[(i + 1) % n], p)
                >= -1e-9 * (1.0 + distance(hull[i], hull[(i + 1) % n]))
        }),
    }
}

/// Latent-field hyperparameters for kriging.
#[derive(Debug, Clone, PartialEq)]
pub struct KrigingInput<'a> {
    pub station_coords: &'a [Point],
    pub station_x: &'a DMatrix<f64>,
    pub u: &'a DVector<f64>,
    pub beta: &'a DVector<f64>,
    pub tau2: f64,
    pub delta: f64,
}

/// Conditional mean of the latent location effect at `points` given `U` at
/// the stations: `X_g β + C_gs C_ss⁻¹ (U − X_s β)`.
pub fn krige_random_effect(
    input: &KrigingInput<'_>,
    points: &[Point],
    grid_x: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let ns = input.station_coords.len();
    if input.u.len() != ns || input.station_x.nrows() != ns || grid_x.nrows() != points.len() {
        return Err(Error::InvalidParameter(
            "kriging inputs have inconsistent sizes".into(),
        ));
    }
    if !(input.tau2 > 0.0 && input.delta > 0.0) {
        return Err(Error::InvalidParameter(
            "tau2 and delta must be positive".into(),
        ));
    }
    let c_ss = exponential_correlation(input.station_coords, input.delta) * input.tau2;
    let chol = cholesky_with_jitter(&c_ss)?;
    let resid = input.u - input.station_x * input.beta;
    let w = chol.solve(&resid);
    let mean_g = grid_x * input.beta;
    Ok(points
        .iter()
        .enumerate()
        .map(|(g, &p)| {
            let k: f64 = input
                .station_coords
                .iter()
                .enumerate()
                .map(|(s, &c)| input.tau2 * (-distance(p, c) / input.delta).exp() * w[s])
                .sum();
            mean_g[g] + k
        })
        .collect())
}

/// Predictive draws of the max, min and mean of the winter minima over a
/// station group.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupSample {
    pub max: Vec<f64>,
    pub min: Vec<f64>,
    pub mean: Vec<f64>,
}

/// `n_sims` joint draws at the stations of `group`; `params[j]` are the GEV
/// parameters of the negated minimum at station `j` (indexed like `sites`).
pub fn group_extreme_predictive(
    group: &[usize],
    sites: &SiteSet,
    params: &[GevParams],
    dep: &StableVariogram,
    n_sims: usize,
    seed_value: u64,
) -> Result<GroupSample> {
    if group.is_empty() {
        return Err(Error::InvalidParameter("empty station group".into()));
    }
    if let Some(&bad) = group
        .iter()
        .find(|&&j| j >= sites.len() || j >= params.len())
    {
        return Err(Error::InvalidParameter(format!(
            "station index {bad} out of range"
        )));
    }
    let coords: Vec<Point> = group.iter().map(|&j| sites.coord(j)).collect();
    let field = PinnedField::new(&coords, dep)?;
    let mut out = GroupSample::default();
    for r in 0..n_sims {
        let draw = simulate_with_field(&field, seed::derive(seed_value, &[r as u64]));
        let y: Vec<f64> = draw
            .z
            .iter()
            .zip(group)
            .map(|(&z, &j)| -frechet_to_gev(z, &params[j]))
            .collect();
        out.max
            .push(y.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        out.min
            .push(y.iter().cloned().fold(f64::INFINITY, f64::min));
        out.mean.push(y.iter().sum::<f64>() / y.len() as f64);
    }
    Ok(out)
}

/// Design of a synthetic data set drawn from the full model.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDesign {
    pub sites: SiteSet,
    pub truth: ParameterState,
    pub winters: Vec<i32>,
    /// Probability that a station misses a winter.
    pub missing_prob: f64,
    /// Spread in days of the occurrence dates within one event.
    pub event_spread: u32,
}

/// Synthetic data with the partitions that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub data: Dataset,
    pub partitions: Vec<SetPartition>,
}

/// Draw a data set: exact Brown–Resnick maxima per winter, one occurrence day
/// per event (jittered per station), and GEV margins at the occurrence time.
pub fn simulate_dataset(design: &SyntheticDesign, seed_value: u64) -> Result<SyntheticData> {
    let truth = &design.truth;
    truth.field.validate()?;
    let d = design.sites.len();
    if truth.field.u.len() != d {
        return Err(Error::InvalidParameter(
            "latent effects do not match the stations".into(),
        ));
    }
    let field = PinnedField::new(design.sites.coords(), &truth.variogram)?;
    let mut years = Vec::with_capacity(design.winters.len());
    let mut partitions = Vec::with_capacity(design.winters.len());
    for &w in &design.winters {
        let draw = simulate_with_field(
            &field,
            seed::derive(seed_value, &[seed::tag::YEAR, w as i64 as u64]),
        );
        let mut rng = seed::rng_from(seed_value, &[0x4441_5953, w as i64 as u64]);
        let spread = design.event_spread as i64;
        let mut days = vec![0u32; d];
        for b in draw.partition.blocks() {
            let centre = rng.random_range(1 + spread..=WINTER_DAYS as i64 - spread);
            for &j in b {
                days[j] = (centre + rng.random_range(-spread..=spread)) as u32;
            }
        }
        let mut observed: Vec<usize> = (0..d)
            .filter(|_| rng.random::<f64>() >= design.missing_prob)
            .collect();
        if observed.is_empty() {
            observed.push(rng.random_range(0..d));
        }
        let mut yd = YearData {
            year: w,
            sites: observed.clone(),
            minima: Vec::new(),
            t: Vec::new(),
            days: Vec::new(),
        };
        for &j in &observed {
            let t = time_covariate(w, days[j])?;
            let x = frechet_to_gev(draw.z[j], &truth.field.params(j, t));
            yd.minima.push(-x);
            yd.t.push(t);
            yd.days.push(vec![days[j]]);
        }
        partitions.push(draw.partition.restricted_to(&observed));
        years.push(yd);
    }
    let data = Dataset::new(design.sites.clone(), truth.field.x.clone(), years)?;
    Ok(SyntheticData { data, partitions })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_of_square() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!(inside_hull(&h, [0.5, 0.5]));
        assert!(inside_hull(&h, [1.0, 0.5]));
        assert!(!inside_hull(&h, [1.1, 0.5]));
    }

    #[test]
    fn grid_covers_stations() {
        let pts = [[0.0, 0.0], [100.0, 0.0], [0.0, 100.0]];
        let g = GridSpec::over_hull(&pts, 10.0).unwrap();
        assert_eq!((g.nx, g.ny), (11, 11));
        // Cells on or below the hypotenuse x + y ≤ 100.
        assert_eq!(g.points().len(), 66);
        assert!(GridSpec::over_hull(&pts, 0.0).is_err());
    }

    #[test]
    fn single_site_draw() {
        let s = SiteSet::from_coords(vec![[0.0, 0.0]]).unwrap();
        let d = simulate_simple_br(&s, &StableVariogram::new(100.0, 1.0).unwrap(), 3).unwrap();
        assert_eq!(d.z.len(), 1);
        assert!(d.z[0] > 0.0);
        assert_eq!(d.partition.len(), 1);
    }
}
