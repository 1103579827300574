//! Variograms, anchored covariance matrices and Gaussian process sampling.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed;

/// A point in the projected plane, km.
pub type Point = [f64; 2];

/// Offset added to the centroid when no anchor is given.
pub const DEFAULT_ANCHOR_OFFSET_KM: f64 = 1e-6;

#[inline]
pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Stable variogram `2γ(h) = 2(‖h‖/λ)^κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableVariogram {
    lambda: f64,
    kappa: f64,
}

impl StableVariogram {
    pub fn new(lambda: f64, kappa: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "range must be positive, got {lambda}"
            )));
        }
        if !(kappa > 0.0 && kappa <= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "smoothness must lie in (0, 2], got {kappa}"
            )));
        }
        Ok(Self { lambda, kappa })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Semivariogram γ at distance `h` (km).
    #[inline]
    pub fn gamma_at(&self, h: f64) -> f64 {
        if h <= 0.0 {
            0.0
        } else {
            (h / self.lambda).powf(self.kappa)
        }
    }

    /// Semivariogram γ for a displacement vector.
    #[inline]
    pub fn semivariogram(&self, h: Point) -> f64 {
        self.gamma_at(h[0].hypot(h[1]))
    }
}

/// Labelled station coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSet {
    coords: Vec<Point>,
    ids: Vec<String>,
}

impl SiteSet {
    pub fn new(coords: Vec<Point>, ids: Vec<String>) -> Result<Self> {
        if coords.len() != ids.len() {
            return Err(Error::InvalidParameter(format!(
                "{} coordinates but {} ids",
                coords.len(),
                ids.len()
            )));
        }
        if coords
            .iter()
            .any(|p| !(p[0].is_finite() && p[1].is_finite()))
        {
            return Err(Error::InvalidParameter(
                "site coordinates must be finite".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate site id {id:?}")));
            }
        }
        Ok(Self { coords, ids })
    }

    /// Sites labelled `1..=n` in order.
    pub fn from_coords(coords: Vec<Point>) -> Result<Self> {
        let ids = (1..=coords.len()).map(|i| i.to_string()).collect();
        Self::new(coords, ids)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn coord(&self, i: usize) -> Point {
        self.coords[i]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        distance(self.coords[i], self.coords[j])
    }

    pub fn centroid(&self) -> Point {
        let n = self.coords.len().max(1) as f64;
        let (sx, sy) = self
            .coords
            .iter()
            .fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
        [sx / n, sy / n]
    }

    /// Centroid shifted by a small fixed offset, the default conditioning anchor.
    pub fn default_anchor(&self) -> Point {
        let c = self.centroid();
        let anchor = [
            c[0] + DEFAULT_ANCHOR_OFFSET_KM,
            c[1] + DEFAULT_ANCHOR_OFFSET_KM,
        ];
        if self
            .coords
            .iter()
            .any(|&p| distance(p, anchor) <= anchor_tolerance(p))
        {
            // A site sits on the centroid; move well off it.
            [c[0] + 1.0, c[1] + 0.5]
        } else {
            anchor
        }
    }

    /// Subset of sites by index, preserving order.
    pub fn subset(&self, idx: &[usize]) -> SiteSet {
        SiteSet {
            coords: idx.iter().map(|&i| self.coords[i]).collect(),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }
}

fn anchor_tolerance(p: Point) -> f64 {
    1e-12 * (1.0 + p[0].abs().max(p[1].abs()))
}

/// Covariance of ε at the sites when ε(anchor) = 0:
/// `Σ_ij = γ(s_i − a) + γ(s_j − a) − γ(s_i − s_j)`.
pub fn build_covariance(
    coords: &[Point],
    v: &StableVariogram,
    anchor: Point,
) -> Result<DMatrix<f64>> {
    for (i, &p) in coords.iter().enumerate() {
        if distance(p, anchor) <= anchor_tolerance(p) {
            return Err(Error::AnchorCoincident(i));
        }
    }
    let n = coords.len();
    let g0: Vec<f64> = coords
        .iter()
        .map(|&p| v.gamma_at(distance(p, anchor)))
        .collect();
    let mut sigma = DMatrix::zeros(n, n);
    for i in 0..n {
        sigma[(i, i)] = 2.0 * g0[i];
        for j in 0..i {
            let s = g0[i] + g0[j] - v.gamma_at(distance(coords[i], coords[j]));
            sigma[(i, j)] = s;
            sigma[(j, i)] = s;
        }
    }
    cholesky_with_jitter(&sigma)?;
    Ok(sigma)
}

/// Semivariogram matrix `Γ_ij = γ(s_i − s_j)`.
pub fn semivariogram_matrix(coords: &[Point], v: &StableVariogram) -> DMatrix<f64> {
    let n = coords.len();
    DMatrix::from_fn(n, n, |i, j| v.gamma_at(distance(coords[i], coords[j])))
}

/// Cholesky factor, retrying once with `1e-10 · mean(diag)` added to the diagonal.
pub fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows();
    if n == 0 {
        return Err(Error::NotPositiveDefinite);
    }
    let mean_diag = m.diagonal().sum() / n as f64;
    if !(mean_diag > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let mut jittered = m.clone();
    for i in 0..n {
        jittered[(i, i)] += 1e-10 * mean_diag;
    }
    Cholesky::new(jittered).ok_or(Error::NotPositiveDefinite)
}

/// Draw ε ~ N(0, Σ) at the sites, with ε pinned to zero at the anchor.
pub fn sample_gp(
    sites: &SiteSet,
    v: &StableVariogram,
    anchor: Point,
    seed: u64,
) -> Result<Vec<f64>> {
    let sigma = build_covariance(sites.coords(), v, anchor)?;
    let chol = cholesky_with_jitter(&sigma)?;
    let mut rng = seed::rng_from(seed, &[0x4750]);
    Ok(correlated_normals(chol.l_dirty(), &mut rng))
}

/// `L z` for z standard normal, reading only the lower triangle of `l`.
pub(crate) fn correlated_normals<R: Rng + ?Sized>(l: &DMatrix<f64>, rng: &mut R) -> Vec<f64> {
    let n = l.nrows();
    let z: DVector<f64> = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
    (0..n)
        .map(|i| (0..=i).map(|k| l[(i, k)] * z[k]).sum())
        .collect()
}
