//! Exponent function, its partial derivatives and the partition-augmented
//! density of the Brown–Resnick process.
//!
//! With `ε(anchor) = 0` and `Σ` the covariance of ε at the sites, the
//! exponent measure has density
//!
//! ```text
//! λ(x) = (2π)^{-(D-1)/2} |Σ|^{-1/2} (1'q)^{-1/2} (∏x)^{-1}
//!        · exp{-½ y'Ay − q'y/(1'q) + 1/(2·1'q)},   y = log x + diag(Σ)/2,
//! ```
//!
//! with `q = Σ⁻¹1` and `A = Σ⁻¹ − qq'/(1'q)`. Integrating the coordinates
//! outside a block `B` over `(0, z_R]` gives
//! `−V_B(z) = λ_B(z_B) · Φ(log z_R; μ̃, Γ̃)` where `λ_B` is the same density
//! built from `Σ_BB`, `Γ̃ = (A_RR)⁻¹` and
//! `μ̃ = −Γ̃{A_RB(log z_B + σ_B/2) + q_R/(1'q)} − σ_R/2`.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{build_covariance, semivariogram_matrix, Point, SiteSet, StableVariogram};
use crate::mvn::mvn_cdf;
use crate::normal;
use crate::partitions::{self, SetPartition};
use crate::seed;

/// Largest site count for which the full density is summed over partitions.
pub const MAX_ENUM_DIM: usize = 10;

/// Monte Carlo budget and base seed for the normal cdf calls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnConfig {
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for MvnConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            seed: 0,
        }
    }
}

/// A real-valued Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// A log-scale estimate; `std_error` is the delta-method error of `ln`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEstimate {
    pub ln: f64,
    pub std_error: f64,
}

impl LogEstimate {
    pub fn exp(&self) -> f64 {
        self.ln.exp()
    }
}

/// Values on the unit-Fréchet scale at a subset of model sites.
#[derive(Debug, Clone, PartialEq)]
pub struct FrechetVector {
    values: Vec<f64>,
    sites: Vec<usize>,
}

impl FrechetVector {
    pub fn new(values: Vec<f64>, sites: Vec<usize>) -> Result<Self> {
        if values.len() != sites.len() {
            return Err(Error::InvalidParameter(
                "values and sites differ in length".into(),
            ));
        }
        if values.iter().any(|&z| !(z > 0.0)) {
            return Err(Error::InvalidParameter(
                "Fréchet values must be positive".into(),
            ));
        }
        let mut sorted = sites.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != sites.len() {
            return Err(Error::InvalidParameter("duplicate site index".into()));
        }
        if sites.iter().any(|&s| s >= 64) {
            return Err(Error::DimensionTooLarge {
                dim: sites.len(),
                max: 64,
            });
        }
        Ok(Self { values, sites })
    }

    /// Values at sites `0..n`.
    pub fn full(values: Vec<f64>) -> Result<Self> {
        let sites = (0..values.len()).collect();
        Self::new(values, sites)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            values: self.values.iter().map(|z| z * t).collect(),
            sites: self.sites.clone(),
        }
    }
}

/// Brown–Resnick dependence model on a fixed site set.
#[derive(Debug, Clone)]
pub struct BrModel {
    pub variogram: StableVariogram,
    pub sites: SiteSet,
    pub anchor: Point,
    pub mvn: MvnConfig,
}

impl BrModel {
    /// Model with the default anchor (offset centroid).
    pub fn new(variogram: StableVariogram, sites: SiteSet, mvn: MvnConfig) -> Result<Self> {
        let anchor = sites.default_anchor();
        Self::with_anchor(variogram, sites, anchor, mvn)
    }

    pub fn with_anchor(
        variogram: StableVariogram,
        sites: SiteSet,
        anchor: Point,
        mvn: MvnConfig,
    ) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidParameter(
                "model needs at least one site".into(),
            ));
        }
        build_covariance(sites.coords(), &variogram, anchor)?;
        Ok(Self {
            variogram,
            sites,
            anchor,
            mvn,
        })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut m = self.clone();
        m.mvn.seed = seed;
        m
    }

    /// Precomputed matrices for a subset of sites.
    pub fn workspace(&self, sites: &[usize]) -> Result<DerivativeWorkspace> {
        DerivativeWorkspace::new(self, sites)
    }

    pub fn exponent_v(&self, z: &FrechetVector) -> Result<Estimate> {
        self.workspace(z.sites())?.exponent_v(z.values(), self.mvn)
    }

    /// `−V_block(z)` on its natural scale.
    pub fn neg_partial_v(&self, z: &FrechetVector, block: &[usize]) -> Result<Estimate> {
        let est = self.log_neg_partial_v(z, block)?;
        let value = est.exp();
        Ok(Estimate {
            value,
            std_error: value * est.std_error,
        })
    }

    pub fn log_neg_partial_v(&self, z: &FrechetVector, block: &[usize]) -> Result<LogEstimate> {
        let mut ws = self.workspace(z.sites())?;
        let mask = ws.mask_of(block)?;
        ws.log_neg_partial(mask, z.values(), self.mvn)
    }

    /// Log of `exp{−V(z)} ∏_k −V_{π_k}(z)`.
    pub fn st_joint_density(&self, z: &FrechetVector, pi: &SetPartition) -> Result<LogEstimate> {
        let mut ws = self.workspace(z.sites())?;
        ws.log_joint_density(z.values(), pi, self.mvn)
    }

    /// Full density of `z`, the sum of the joint density over every partition.
    pub fn full_density_enum(&self, z: &FrechetVector) -> Result<LogEstimate> {
        if z.len() > MAX_ENUM_DIM {
            return Err(Error::DimensionTooLarge {
                dim: z.len(),
                max: MAX_ENUM_DIM,
            });
        }
        let mut ws = self.workspace(z.sites())?;
        let v = ws.exponent_v(z.values(), self.mvn)?;
        let parts = partitions::enumerate_partitions(z.sites())?;
        let mut terms = Vec::with_capacity(parts.len());
        let mut errs = Vec::with_capacity(parts.len());
        for p in &parts {
            let mut ln = 0.0;
            let mut var = 0.0;
            for mask in p.block_masks() {
                let b = ws.log_neg_partial(mask, z.values(), self.mvn)?;
                ln += b.ln;
                var += b.std_error * b.std_error;
            }
            terms.push(ln);
            errs.push(var.sqrt());
        }
        let ln_sum = log_sum_exp(&terms);
        // Terms share seeds, so combine relative errors as if fully correlated.
        let rel: f64 = terms
            .iter()
            .zip(&errs)
            .map(|(t, e)| (t - ln_sum).exp() * e)
            .sum();
        Ok(LogEstimate {
            ln: ln_sum - v.value,
            std_error: (v.std_error * v.std_error + rel * rel).sqrt(),
        })
    }

    /// Pairwise extremal coefficient `2Φ(√(2γ(h))/2)`.
    pub fn extremal_coefficient(&self, h: f64) -> f64 {
        extremal_coefficient(&self.variogram, h)
    }
}

pub fn extremal_coefficient(v: &StableVariogram, h: f64) -> f64 {
    if h.is_infinite() {
        return 2.0;
    }
    2.0 * normal::cdf((2.0 * v.gamma_at(h)).sqrt() / 2.0)
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Block-specific matrices for `−V_B`, independent of `z`.
#[derive(Debug, Clone)]
struct BlockGeometry {
    /// Positions (within the workspace) of the differentiated coordinates.
    block: Vec<usize>,
    rest: Vec<usize>,
    ln_const: f64,
    /// `A_{1:d}` of the block sub-density.
    a_block: DMatrix<f64>,
    /// Linear coefficient of `log z_B` in the block sub-density exponent.
    lin: DVector<f64>,
    /// `μ̃ = coef · log z_B + offset`.
    coef: DMatrix<f64>,
    offset: DVector<f64>,
    gamma_tilde: DMatrix<f64>,
}

/// Matrices shared by every exponent-function quantity on one site subset.
#[derive(Debug, Clone)]
pub struct DerivativeWorkspace {
    /// Global site index of each position.
    sites: Vec<usize>,
    sigma: DMatrix<f64>,
    gamma: DMatrix<f64>,
    q: DVector<f64>,
    one_q: f64,
    a: DMatrix<f64>,
    blocks: HashMap<u64, BlockGeometry>,
    /// `(mean, covariance)` of `log(z_{-j}/z_j)` terms, per position.
    exponent_terms: Vec<Option<(DVector<f64>, DMatrix<f64>)>>,
}

impl DerivativeWorkspace {
    pub fn new(model: &BrModel, sites: &[usize]) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidParameter("empty site subset".into()));
        }
        if let Some(&bad) = sites.iter().find(|&&s| s >= model.sites.len() || s >= 64) {
            return Err(Error::InvalidParameter(format!(
                "site index {bad} out of range"
            )));
        }
        let coords: Vec<Point> = sites.iter().map(|&s| model.sites.coord(s)).collect();
        let sigma = build_covariance(&coords, &model.variogram, model.anchor)?;
        let gamma = semivariogram_matrix(&coords, &model.variogram);
        let chol = crate::gaussian::cholesky_with_jitter(&sigma)?;
        let n = sites.len();
        let q = chol.solve(&DVector::from_element(n, 1.0));
        let one_q = q.sum();
        if !(one_q > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let a = chol.inverse() - &q * q.transpose() / one_q;
        Ok(Self {
            sites: sites.to_vec(),
            sigma,
            gamma,
            q,
            one_q,
            a,
            blocks: HashMap::new(),
            exponent_terms: vec![None; n],
        })
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    /// Bit mask (over global site indices) of a block given by global indices.
    pub fn mask_of(&self, block: &[usize]) -> Result<u64> {
        if block.is_empty() {
            return Err(Error::EmptyBlock);
        }
        let mut mask = 0u64;
        for &s in block {
            if !self.sites.contains(&s) {
                return Err(Error::PartitionMismatch);
            }
            mask |= 1u64 << s;
        }
        Ok(mask)
    }

    fn ground_mask(&self) -> u64 {
        self.sites.iter().fold(0u64, |m, &s| m | (1u64 << s))
    }

    fn geometry(&mut self, mask: u64) -> Result<&BlockGeometry> {
        if !self.blocks.contains_key(&mask) {
            let g = self.build_geometry(mask)?;
            self.blocks.insert(mask, g);
        }
        Ok(&self.blocks[&mask])
    }

    fn build_geometry(&self, mask: u64) -> Result<BlockGeometry> {
        let (block, rest): (Vec<usize>, Vec<usize>) =
            (0..self.sites.len()).partition(|&p| mask & (1u64 << self.sites[p]) != 0);
        if block.is_empty() {
            return Err(Error::EmptyBlock);
        }
        let d = block.len();
        let sig_b = DMatrix::from_fn(d, d, |i, j| self.sigma[(block[i], block[j])]);
        let sigma_d = DVector::from_fn(d, |i, _| self.sigma[(block[i], block[i])]);
        let chol_b = crate::gaussian::cholesky_with_jitter(&sig_b)?;
        let ln_det_b = 2.0
            * chol_b
                .l_dirty()
                .diagonal()
                .iter()
                .map(|x| x.ln())
                .sum::<f64>();
        let sig_b_inv = chol_b.inverse();
        let q_d = &sig_b_inv * DVector::from_element(d, 1.0);
        let c_d = q_d.sum();
        if !(c_d > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let a_block = &sig_b_inv - &q_d * q_d.transpose() / c_d;
        let sig_inv_sigma = &sig_b_inv * &sigma_d;
        let sq = sigma_d.dot(&q_d);
        let quad = 0.25 * sigma_d.dot(&sig_inv_sigma) - 0.25 * sq * sq / c_d + sq / c_d - 1.0 / c_d;
        let ln_const = -0.5 * (d as f64 - 1.0) * (2.0 * PI).ln()
            - 0.5 * ln_det_b
            - 0.5 * c_d.ln()
            - 0.5 * quad;
        let lin = &q_d * (2.0 / c_d) + &sig_inv_sigma - &q_d * (sq / c_d);

        let r = rest.len();
        let (coef, offset, gamma_tilde) = if r == 0 {
            (
                DMatrix::zeros(0, d),
                DVector::zeros(0),
                DMatrix::zeros(0, 0),
            )
        } else {
            let a_rr = DMatrix::from_fn(r, r, |i, j| self.a[(rest[i], rest[j])]);
            let a_rb = DMatrix::from_fn(r, d, |i, j| self.a[(rest[i], block[j])]);
            let gt = crate::gaussian::cholesky_with_jitter(&a_rr)?.inverse();
            let gt = (&gt + gt.transpose()) * 0.5;
            let coef = -(&gt * &a_rb);
            let q_r = DVector::from_fn(r, |i, _| self.q[rest[i]]);
            let sigma_r = DVector::from_fn(r, |i, _| self.sigma[(rest[i], rest[i])]);
            let offset = -(&gt * (&a_rb * &sigma_d * 0.5 + q_r / self.one_q)) - sigma_r * 0.5;
            (coef, offset, gt)
        };
        Ok(BlockGeometry {
            block,
            rest,
            ln_const,
            a_block,
            lin,
            coef,
            offset,
            gamma_tilde,
        })
    }

    /// `ln(−V_B(z))` for the block with the given global-index mask.
    /// `z` is ordered like the workspace sites.
    pub fn log_neg_partial(&mut self, mask: u64, z: &[f64], mvn: MvnConfig) -> Result<LogEstimate> {
        if mask == 0 {
            return Err(Error::EmptyBlock);
        }
        if mask & !self.ground_mask() != 0 {
            return Err(Error::PartitionMismatch);
        }
        let g = self.geometry(mask)?;
        let lz: Vec<f64> = z.iter().map(|v| v.ln()).collect();
        let lb = DVector::from_fn(g.block.len(), |i, _| lz[g.block[i]]);
        if lb.iter().any(|v| !v.is_finite()) {
            return Ok(LogEstimate {
                ln: f64::NEG_INFINITY,
                std_error: 0.0,
            });
        }
        let mut ln = g.ln_const - lb.sum() - 0.5 * (lb.dot(&(&g.a_block * &lb)) + lb.dot(&g.lin));
        let mut se = 0.0;
        if !g.rest.is_empty() {
            let upper: Vec<f64> = g.rest.iter().map(|&p| lz[p]).collect();
            let mean = &g.coef * &lb + &g.offset;
            let cdf = mvn_cdf(
                &upper,
                mean.as_slice(),
                &g.gamma_tilde,
                mvn.n_samples,
                seed::derive(mvn.seed, &[seed::tag::PARTIAL, mask]),
            )?;
            ln += cdf.value.ln();
            se = if cdf.value > 0.0 {
                cdf.std_error / cdf.value
            } else {
                0.0
            };
        }
        Ok(LogEstimate { ln, std_error: se })
    }

    /// `V(z)` by the sum over `z_j⁻¹ Φ_{D−1}(log(z_{−j}/z_j) + Γ_{−j,j}; 0, Ω_j)`.
    pub fn exponent_v(&mut self, z: &[f64], mvn: MvnConfig) -> Result<Estimate> {
        let n = self.sites.len();
        if z.len() != n {
            return Err(Error::InvalidParameter(
                "z length does not match the workspace".into(),
            ));
        }
        if n == 1 {
            return Ok(Estimate {
                value: 1.0 / z[0],
                std_error: 0.0,
            });
        }
        let ground = self.ground_mask();
        let mut value = 0.0;
        let mut var = 0.0;
        for j in 0..n {
            if z[j].is_infinite() {
                continue;
            }
            if self.exponent_terms[j].is_none() {
                let others: Vec<usize> = (0..n).filter(|&k| k != j).collect();
                let mean = DVector::from_fn(n - 1, |i, _| -self.gamma[(others[i], j)]);
                let cov = DMatrix::from_fn(n - 1, n - 1, |a, b| {
                    self.gamma[(others[a], j)] + self.gamma[(others[b], j)]
                        - self.gamma[(others[a], others[b])]
                });
                self.exponent_terms[j] = Some((mean, cov));
            }
            let (mean, cov) = self.exponent_terms[j].as_ref().expect("filled above");
            let upper: Vec<f64> = (0..n)
                .filter(|&k| k != j)
                .map(|k| (z[k] / z[j]).ln())
                .collect();
            let cdf = mvn_cdf(
                &upper,
                mean.as_slice(),
                cov,
                mvn.n_samples,
                seed::derive(
                    mvn.seed,
                    &[seed::tag::EXPONENT, ground, self.sites[j] as u64],
                ),
            )?;
            value += cdf.value / z[j];
            var += (cdf.std_error / z[j]).powi(2);
        }
        Ok(Estimate {
            value,
            std_error: var.sqrt(),
        })
    }

    /// `−V(z) + Σ_k ln(−V_{π_k}(z))`.
    pub fn log_joint_density(
        &mut self,
        z: &[f64],
        pi: &SetPartition,
        mvn: MvnConfig,
    ) -> Result<LogEstimate> {
        let mut ground: Vec<usize> = self.sites.clone();
        ground.sort_unstable();
        if pi.ground() != ground.as_slice() {
            return Err(Error::PartitionMismatch);
        }
        let v = self.exponent_v(z, mvn)?;
        let mut ln = -v.value;
        let mut var = v.std_error * v.std_error;
        for mask in pi.block_masks() {
            let b = self.log_neg_partial(mask, z, mvn)?;
            ln += b.ln;
            var += b.std_error * b.std_error;
        }
        Ok(LogEstimate {
            ln,
            std_error: var.sqrt(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(coords: Vec<Point>, lambda: f64, kappa: f64, n: usize) -> BrModel {
        BrModel::new(
            StableVariogram::new(lambda, kappa).unwrap(),
            SiteSet::from_coords(coords).unwrap(),
            MvnConfig {
                n_samples: n,
                seed: 5,
            },
        )
        .unwrap()
    }

    #[test]
    fn single_site_quantities() {
        let m = model(vec![[1.0, 2.0]], 10.0, 1.0, 100);
        let z = FrechetVector::full(vec![2.0]).unwrap();
        assert!((m.exponent_v(&z).unwrap().value - 0.5).abs() < 1e-15);
        let d = m.neg_partial_v(&z, &[0]).unwrap().value;
        assert!((d - 0.25).abs() < 1e-12, "{d}");
        let pi = SetPartition::singletons(&[0]);
        let f = m.st_joint_density(&z, &pi).unwrap().exp();
        assert!((f - 0.25 * (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn extremal_coefficient_limits() {
        let m = model(vec![[0.0, 0.0]], 1086.0, 0.53, 100);
        assert_eq!(m.extremal_coefficient(0.0), 1.0);
        assert_eq!(m.extremal_coefficient(f64::INFINITY), 2.0);
        assert!((m.extremal_coefficient(1e12) - 2.0).abs() < 1e-6);
        assert!((m.extremal_coefficient(400.0) - 1.41).abs() < 0.01);
    }

    #[test]
    fn errors_on_bad_blocks() {
        let m = model(vec![[0.0, 0.0], [5.0, 0.0]], 10.0, 1.0, 100);
        let z = FrechetVector::new(vec![1.0], vec![1]).unwrap();
        assert_eq!(m.neg_partial_v(&z, &[]).err(), Some(Error::EmptyBlock));
        assert_eq!(
            m.neg_partial_v(&z, &[0]).err(),
            Some(Error::PartitionMismatch)
        );
        let pi = SetPartition::singletons(&[0, 1]);
        assert_eq!(
            m.st_joint_density(&z, &pi).err(),
            Some(Error::PartitionMismatch)
        );
    }

    #[test]
    fn enumeration_guard() {
        let coords: Vec<Point> = (0..11).map(|i| [i as f64, (i * i) as f64 * 0.1]).collect();
        let m = model(coords, 10.0, 1.0, 100);
        let z = FrechetVector::full(vec![1.0; 11]).unwrap();
        assert_eq!(
            m.full_density_enum(&z).err(),
            Some(Error::DimensionTooLarge {
                dim: 11,
                max: MAX_ENUM_DIM
            })
        );
    }
}
