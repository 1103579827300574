//! Set partitions of site indices and the Gibbs update over them.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::brown_resnick::{log_sum_exp, BrModel, DerivativeWorkspace, FrechetVector, MvnConfig};
use crate::error::{Error, Result};
use crate::seed;

/// Largest ground set that may be enumerated exhaustively.
pub const MAX_ENUM_SIZE: usize = 10;
/// Largest dimension for the exact conditional distribution.
pub const MAX_EXACT_CONDITIONAL: usize = 8;

/// A partition of a set of site indices into nonempty disjoint blocks.
///
/// Blocks are kept sorted internally and ordered by their smallest element,
/// so structural equality is partition equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SetPartition {
    blocks: Vec<Vec<usize>>,
    ground: Vec<usize>,
}

impl SetPartition {
    pub fn new(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut ground: Vec<usize> = blocks.iter().flatten().copied().collect();
        ground.sort_unstable();
        let n = ground.len();
        ground.dedup();
        if ground.len() != n {
            return Err(Error::InvalidParameter("blocks overlap".into()));
        }
        if blocks.iter().any(|b| b.is_empty()) {
            return Err(Error::EmptyBlock);
        }
        let mut p = Self { blocks, ground };
        p.canonicalize();
        Ok(p)
    }

    /// Partition whose union must equal `ground`.
    pub fn with_ground(blocks: Vec<Vec<usize>>, ground: &[usize]) -> Result<Self> {
        let p = Self::new(blocks)?;
        let mut g = ground.to_vec();
        g.sort_unstable();
        if p.ground != g {
            return Err(Error::PartitionMismatch);
        }
        Ok(p)
    }

    pub fn singletons(ground: &[usize]) -> Self {
        Self::new(ground.iter().map(|&i| vec![i]).collect()).expect("distinct indices")
    }

    pub fn single_block(ground: &[usize]) -> Self {
        if ground.is_empty() {
            return Self {
                blocks: vec![],
                ground: vec![],
            };
        }
        Self::new(vec![ground.to_vec()]).expect("distinct indices")
    }

    /// Build from block labels: `ground[i]` belongs to block `labels[i]`.
    pub fn from_labels(ground: &[usize], labels: &[usize]) -> Result<Self> {
        if ground.len() != labels.len() {
            return Err(Error::InvalidParameter(
                "labels and ground differ in length".into(),
            ));
        }
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); k];
        for (&g, &l) in ground.iter().zip(labels) {
            blocks[l].push(g);
        }
        blocks.retain(|b| !b.is_empty());
        Self::new(blocks)
    }

    fn canonicalize(&mut self) {
        for b in &mut self.blocks {
            b.sort_unstable();
        }
        self.blocks.sort_unstable_by_key(|b| b[0]);
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn ground(&self) -> &[usize] {
        &self.ground
    }

    /// Number of blocks.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block_masks(&self) -> Vec<u64> {
        self.blocks.iter().map(|b| mask(b)).collect()
    }

    pub fn block_of(&self, j: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains(&j))
    }

    /// The partition restricted to `ground \ {j}`.
    pub fn without(&self, j: usize) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.iter().copied().filter(|&i| i != j).collect::<Vec<_>>())
            .filter(|b| !b.is_empty())
            .collect();
        let ground = self.ground.iter().copied().filter(|&i| i != j).collect();
        let mut p = Self { blocks, ground };
        p.canonicalize();
        p
    }

    /// The partition restricted to the indices in `keep`.
    pub fn restricted_to(&self, keep: &[usize]) -> Self {
        let mut p = self.clone();
        for &j in self.ground.iter().filter(|j| !keep.contains(j)) {
            p = p.without(j);
        }
        p
    }

    /// Add `j` to block `target`, or as a new singleton when `target == len()`.
    fn inserted(&self, j: usize, target: usize) -> Self {
        let mut p = self.clone();
        if target == p.blocks.len() {
            p.blocks.push(vec![j]);
        } else {
            p.blocks[target].push(j);
        }
        p.ground.push(j);
        p.ground.sort_unstable();
        p.canonicalize();
        p
    }

    /// Whether blocks are disjoint, nonempty and cover the ground set.
    pub fn is_valid(&self) -> bool {
        if self.blocks.iter().any(|b| b.is_empty()) {
            return false;
        }
        let mut all: Vec<usize> = self.blocks.iter().flatten().copied().collect();
        all.sort_unstable();
        all == self.ground
    }
}

pub(crate) fn mask(block: &[usize]) -> u64 {
    block.iter().fold(0u64, |m, &i| m | (1u64 << i))
}

/// Blocks separated by `|`, indices by `,`, written 1-based: `1,3|2|4,5`.
impl fmt::Display for SetPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, b) in self.blocks.iter().enumerate() {
            if k > 0 {
                f.write_str("|")?;
            }
            for (i, j) in b.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{}", j + 1)?;
            }
        }
        Ok(())
    }
}

impl FromStr for SetPartition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self {
                blocks: vec![],
                ground: vec![],
            });
        }
        let mut blocks = Vec::new();
        for part in s.split('|') {
            let mut block = Vec::new();
            for tok in part.split(',') {
                let v: usize = tok.trim().parse().map_err(|_| Error::Parse {
                    line: 1,
                    message: format!("bad site index {tok:?}"),
                })?;
                if v == 0 || v > 64 {
                    return Err(Error::Parse {
                        line: 1,
                        message: format!("site index {v} out of range 1..=64"),
                    });
                }
                block.push(v - 1);
            }
            blocks.push(block);
        }
        Self::new(blocks)
    }
}

/// Bell numbers by the triangle recurrence.
pub fn bell(n: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = vec![*row.last().expect("nonempty")];
        for &v in &row {
            let last = *next.last().expect("nonempty");
            next.push(last + v);
        }
        row = next;
    }
    row[0]
}

/// Every partition of `ground`, via restricted growth strings.
pub fn enumerate_partitions(ground: &[usize]) -> Result<Vec<SetPartition>> {
    let n = ground.len();
    if n > MAX_ENUM_SIZE {
        return Err(Error::DimensionTooLarge {
            dim: n,
            max: MAX_ENUM_SIZE,
        });
    }
    if n == 0 {
        return Ok(vec![SetPartition::single_block(&[])]);
    }
    let mut out = Vec::with_capacity(bell(n) as usize);
    let mut labels = vec![0usize; n];
    let mut maxes = vec![0usize; n];
    loop {
        out.push(SetPartition::from_labels(ground, &labels)?);
        // Advance to the next restricted growth string.
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok(out);
            }
            if labels[i] <= maxes[i - 1] {
                labels[i] += 1;
                let m = maxes[i - 1].max(labels[i]);
                maxes[i] = m;
                for k in (i + 1)..n {
                    labels[k] = 0;
                    maxes[k] = m;
                }
                break;
            }
            i -= 1;
        }
    }
}

/// Exact conditional distribution of the partition given `z`.
pub fn exact_conditional(z: &FrechetVector, m: &BrModel) -> Result<Vec<(SetPartition, f64)>> {
    if z.len() > MAX_EXACT_CONDITIONAL {
        return Err(Error::DimensionTooLarge {
            dim: z.len(),
            max: MAX_EXACT_CONDITIONAL,
        });
    }
    let mut ws = m.workspace(z.sites())?;
    let parts = enumerate_partitions(z.sites())?;
    let mut logs = Vec::with_capacity(parts.len());
    for p in &parts {
        let mut ln = 0.0;
        for mk in p.block_masks() {
            ln += ws.log_neg_partial(mk, z.values(), m.mvn)?.ln;
        }
        logs.push(ln);
    }
    let total = log_sum_exp(&logs);
    Ok(parts
        .into_iter()
        .zip(logs)
        .map(|(p, l)| (p, (l - total).exp()))
        .collect())
}

/// Candidate partitions for reallocating `j`: each block of `π_{−j}` plus a new singleton.
pub fn gibbs_candidates(pi: &SetPartition, j: usize) -> Vec<SetPartition> {
    let rest = pi.without(j);
    (0..=rest.len()).map(|t| rest.inserted(j, t)).collect()
}

/// One systematic-scan sweep over the indices in random order.
pub fn gibbs_sweep(
    pi: &SetPartition,
    z: &FrechetVector,
    m: &BrModel,
    seed_value: u64,
) -> Result<SetPartition> {
    let mut sorted: Vec<usize> = z.sites().to_vec();
    sorted.sort_unstable();
    if pi.ground() != sorted.as_slice() {
        return Err(Error::PartitionMismatch);
    }
    let mut ws = m.workspace(z.sites())?;
    let mut rng = seed::rng_from(seed_value, &[0x5357_4545]);
    let mvn = MvnConfig {
        n_samples: m.mvn.n_samples,
        seed: seed::derive(seed_value, &[0x4D43]),
    };
    gibbs_sweep_with(pi, z.values(), &mut ws, mvn, &mut rng)
}

/// Sweep using a prepared workspace; `z` is ordered like the workspace sites.
///
/// All candidate weights in the sweep share `mvn.seed`, keyed per block, so a
/// block factor has the same estimate in every candidate that contains it.
pub fn gibbs_sweep_with<R: Rng + ?Sized>(
    pi: &SetPartition,
    z: &[f64],
    ws: &mut DerivativeWorkspace,
    mvn: MvnConfig,
    rng: &mut R,
) -> Result<SetPartition> {
    let mut current = pi.clone();
    let mut order: Vec<usize> = current.ground().to_vec();
    if order.len() <= 1 {
        return Ok(current);
    }
    order.shuffle(rng);
    let mut cache: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();
    let mut ln_factor = |ws: &mut DerivativeWorkspace, mk: u64| -> Result<f64> {
        if let Some(&v) = cache.get(&mk) {
            return Ok(v);
        }
        let v = ws.log_neg_partial(mk, z, mvn)?.ln;
        cache.insert(mk, v);
        Ok(v)
    };
    for &j in &order {
        let rest = current.without(j);
        let bit = 1u64 << j;
        let mut weights = Vec::with_capacity(rest.len() + 1);
        for b in rest.blocks() {
            let mk = mask(b);
            weights.push(ln_factor(ws, mk | bit)? - ln_factor(ws, mk)?);
        }
        weights.push(ln_factor(ws, bit)?);
        let choice = sample_log_weights(&weights, rng);
        current = rest.inserted(j, choice);
        debug_assert!(current.is_valid());
    }
    Ok(current)
}

/// Index drawn with probability proportional to `exp(w_i)`.
pub(crate) fn sample_log_weights<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    let m = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        // Degenerate weights: fall back to uniform among finite-or-all.
        return rng.random_range(0..w.len());
    }
    let probs: Vec<f64> = w.iter().map(|x| (x - m).exp()).collect();
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    w.len() - 1
}

/// Fraction of index pairs on which two partitions agree (together or apart).
pub fn rand_index(p1: &SetPartition, p2: &SetPartition) -> Result<f64> {
    if p1.ground() != p2.ground() {
        return Err(Error::GroundMismatch);
    }
    let g = p1.ground();
    let n = g.len();
    if n < 2 {
        return Ok(1.0);
    }
    let l1: Vec<usize> = g
        .iter()
        .map(|&j| p1.block_of(j).expect("in ground"))
        .collect();
    let l2: Vec<usize> = g
        .iter()
        .map(|&j| p2.block_of(j).expect("in ground"))
        .collect();
    let mut agree = 0usize;
    for a in 0..n {
        for b in (a + 1)..n {
            if (l1[a] == l1[b]) == (l2[a] == l2[b]) {
                agree += 1;
            }
        }
    }
    Ok(agree as f64 / (n * (n - 1) / 2) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn p(s: &str) -> SetPartition {
        s.parse().unwrap()
    }

    #[test]
    fn canonical_equality_and_display() {
        let a = SetPartition::new(vec![vec![3, 1], vec![0]]).unwrap();
        let b = SetPartition::new(vec![vec![0], vec![1, 3]]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "1|2,4");
        assert_eq!(p("1,3|2|4,5").blocks(), &[vec![0, 2], vec![1], vec![3, 4]]);
    }

    #[test]
    fn rejects_invalid_partitions() {
        assert!(SetPartition::new(vec![vec![0, 1], vec![1]]).is_err());
        assert!(SetPartition::new(vec![vec![0], vec![]]).is_err());
        assert!("1,,2".parse::<SetPartition>().is_err());
        assert!("0|1".parse::<SetPartition>().is_err());
        assert!("1|x".parse::<SetPartition>().is_err());
        assert_eq!(
            SetPartition::with_ground(vec![vec![0]], &[0, 1]),
            Err(Error::PartitionMismatch)
        );
    }

    #[test]
    fn bell_counts() {
        assert_eq!(enumerate_partitions(&[4]).unwrap().len(), 1);
        assert_eq!(enumerate_partitions(&[0, 1, 2]).unwrap().len(), 5);
        let all = enumerate_partitions(&[0, 1, 2, 3, 4, 5]).unwrap();
        let set: std::collections::HashSet<_> = all.iter().cloned().collect();
        assert_eq!(set.len(), 203);
        assert!(matches!(
            enumerate_partitions(&(0..11).collect::<Vec<_>>()),
            Err(Error::DimensionTooLarge { .. })
        ));
    }

    #[test]
    fn rand_index_hand_cases() {
        let a = p("1,2|3,4");
        assert_eq!(rand_index(&a, &a).unwrap(), 1.0);
        assert_eq!(rand_index(&p("1|2|3|4"), &p("1,2,3,4")).unwrap(), 0.0);
        assert_eq!(rand_index(&a, &p("1,2,3|4")).unwrap(), 0.5);
        assert_eq!(rand_index(&a, &p("1,2,3")), Err(Error::GroundMismatch));
    }

    #[test]
    fn candidates_share_restriction() {
        let pi = p("1,3|2|4,5");
        for j in 0..5 {
            let rest = pi.without(j);
            let cands = gibbs_candidates(&pi, j);
            let k = rest.len();
            assert_eq!(cands.len(), k + 1);
            for c in &cands {
                assert!(c.is_valid());
                assert_eq!(c.without(j), rest);
            }
        }
    }

    #[test]
    fn log_weight_sampling_frequencies() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let w = [0.0f64.ln(), 1.0f64.ln(), 3.0f64.ln()];
        let mut counts = [0usize; 3];
        for _ in 0..40_000 {
            counts[sample_log_weights(&w, &mut rng)] += 1;
        }
        assert_eq!(counts[0], 0);
        assert!((counts[2] as f64 / 40_000.0 - 0.75).abs() < 0.01);
    }

    fn arb_partition() -> impl Strategy<Value = SetPartition> {
        (1usize..9).prop_flat_map(|n| {
            proptest::collection::vec(0usize..n, n).prop_map(move |labels| {
                let ground: Vec<usize> = (0..n).collect();
                SetPartition::from_labels(&ground, &labels).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn text_round_trip(pi in arb_partition()) {
            let back: SetPartition = pi.to_string().parse().unwrap();
            prop_assert_eq!(back, pi);
        }

        #[test]
        fn rand_index_symmetric(labels in proptest::collection::vec((0usize..4, 0usize..4), 2..8)) {
            let ground: Vec<usize> = (0..labels.len()).collect();
            let a = SetPartition::from_labels(&ground, &labels.iter().map(|l| l.0).collect::<Vec<_>>()).unwrap();
            let b = SetPartition::from_labels(&ground, &labels.iter().map(|l| l.1).collect::<Vec<_>>()).unwrap();
            let r = rand_index(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert_eq!(r, rand_index(&b, &a).unwrap());
        }
    }
}
