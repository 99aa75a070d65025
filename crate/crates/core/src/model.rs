//! The Mallows Block Model.
//!
//! Stages `j = 1..=m` (see [`crate::perm`]) are partitioned into `d` blocks;
//! block `i` owns spread `phi_i` and its stages contribute independent
//! `TG(phi_i, j - 1)` discordance counts. The pmf is
//!
//! ```text
//! p(pi) = Π_i phi_i^{T_i(pi)} / Z,    T_i = Σ_{j ∈ B_i} V_j(pi, pi0),
//! ln Z  = Σ_i Σ_{j ∈ B_i} ln Σ_{l=0..j-1} phi_i^l.
//! ```
//!
//! Block indices are 0-based; stages inside blocks are 1-based.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::TgSumFamily;
use crate::numeric::NeumaierSum;
use crate::perm::{decode_inversion, discordance_vector, DiscordanceVector, Permutation};
use crate::tg::{check_phi, TruncatedGeometric};

/// Kernels at least this long are convolved with the geometric recurrence
/// instead of term by term.
const RECURRENCE_MIN_KERNEL: usize = 64;

/// A partition of the stages `{1, ..., m}` into `d ≥ 1` nonempty blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PartitionDoc", into = "PartitionDoc")]
pub struct BlockPartition {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub blocks: Vec<Vec<usize>>,
}

impl TryFrom<PartitionDoc> for BlockPartition {
    type Error = Error;

    fn try_from(doc: PartitionDoc) -> Result<Self> {
        let m = doc.m.unwrap_or_else(|| doc.blocks.iter().map(Vec::len).sum());
        BlockPartition::new(m, doc.blocks)
    }
}

impl From<BlockPartition> for PartitionDoc {
    fn from(p: BlockPartition) -> Self {
        PartitionDoc {
            m: Some(p.m()),
            blocks: p.blocks,
        }
    }
}

impl BlockPartition {
    pub fn new(m: usize, mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("partition needs m ≥ 1"));
        }
        if blocks.is_empty() {
            return Err(Error::domain("partition needs at least one block"));
        }
        let mut block_of = vec![usize::MAX; m];
        for (b, block) in blocks.iter_mut().enumerate() {
            if block.is_empty() {
                return Err(Error::domain(format!("block {b} is empty")));
            }
            block.sort_unstable();
            for &j in block.iter() {
                if j == 0 || j > m {
                    return Err(Error::domain(format!("stage {j} outside 1..={m}")));
                }
                if block_of[j - 1] != usize::MAX {
                    return Err(Error::domain(format!("stage {j} appears in two blocks")));
                }
                block_of[j - 1] = b;
            }
        }
        if let Some(j) = block_of.iter().position(|&b| b == usize::MAX) {
            return Err(Error::domain(format!("stage {} is not covered", j + 1)));
        }
        Ok(Self { blocks, block_of })
    }

    /// One block holding every stage (the single-parameter Mallows model).
    pub fn single(m: usize) -> Self {
        Self::new(m, vec![(1..=m).collect()]).expect("m ≥ 1")
    }

    /// One block per stage (the generalized Mallows model).
    pub fn singletons(m: usize) -> Self {
        Self::new(m, (1..=m).map(|j| vec![j]).collect()).expect("m ≥ 1")
    }

    /// `d` contiguous blocks whose sizes differ by at most one.
    pub fn contiguous(m: usize, d: usize) -> Result<Self> {
        if d == 0 || d > m {
            return Err(Error::domain(format!("cannot split {m} stages into {d} blocks")));
        }
        let (base, extra) = (m / d, m % d);
        let mut blocks = Vec::with_capacity(d);
        let mut next = 1;
        for b in 0..d {
            let len = base + usize::from(b < extra);
            blocks.push((next..next + len).collect());
            next += len;
        }
        Self::new(m, blocks)
    }

    pub fn m(&self) -> usize {
        self.block_of.len()
    }

    pub fn d(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> Result<&[usize]> {
        self.blocks
            .get(i)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::domain(format!("block index {i} out of range 0..{}", self.d())))
    }

    /// Block index of a 1-based stage.
    pub fn block_of(&self, stage: usize) -> usize {
        self.block_of[stage - 1]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    /// Smallest block size.
    pub fn m_star(&self) -> usize {
        self.blocks.iter().map(Vec::len).min().expect("d ≥ 1")
    }

    /// Truncation points `j - 1` of the stages of block `i`.
    pub fn stage_ks(&self, i: usize) -> Result<Vec<usize>> {
        Ok(self.block(i)?.iter().map(|&j| j - 1).collect())
    }

    /// Largest value of block `i`'s statistic: `Σ_{j ∈ B_i} (j - 1)`.
    pub fn max_stat(&self, i: usize) -> Result<usize> {
        Ok(self.block(i)?.iter().map(|&j| j - 1).sum())
    }

    /// The block only sees stage 1, whose count is always zero.
    pub fn is_degenerate(&self, i: usize) -> Result<bool> {
        Ok(self.max_stat(i)? == 0)
    }
}

/// Per-block sums of a discordance vector.
pub fn stats_from_discordance(partition: &BlockPartition, v: &DiscordanceVector) -> Result<Vec<u64>> {
    Error::check_dim(partition.m(), v.m())?;
    let mut t = vec![0u64; partition.d()];
    for (idx, &x) in v.counts().iter().enumerate() {
        t[partition.block_of[idx]] += x as u64;
    }
    Ok(t)
}

/// Sufficient statistics `T_i(pi, pi0) = Σ_{j ∈ B_i} V_j(pi, pi0)`.
pub fn sufficient_stats(partition: &BlockPartition, pi: &Permutation, pi0: &Permutation) -> Result<Vec<u64>> {
    Error::check_dim(partition.m(), pi0.m())?;
    let v = discordance_vector(pi, pi0)?;
    stats_from_discordance(partition, &v)
}

/// A log-probability, with zero-probability outcomes kept distinct from any
/// finite value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogProb {
    Finite(f64),
    Impossible,
}

impl LogProb {
    /// `ln p`, `-inf` for impossible outcomes.
    pub fn ln(self) -> f64 {
        match self {
            LogProb::Finite(x) => x,
            LogProb::Impossible => f64::NEG_INFINITY,
        }
    }

    pub fn prob(self) -> f64 {
        match self {
            LogProb::Finite(x) => x.exp(),
            LogProb::Impossible => 0.0,
        }
    }

    pub fn is_impossible(self) -> bool {
        matches!(self, LogProb::Impossible)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub m: usize,
    pub pi0: Vec<usize>,
    pub blocks: Vec<Vec<usize>>,
    pub phis: Vec<f64>,
}

/// `(pi0, phis, partition)`; immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDoc", into = "ModelDoc")]
pub struct MallowsBlockModel {
    pi0: Permutation,
    phis: Vec<f64>,
    partition: BlockPartition,
    stages: Vec<TruncatedGeometric>,
    log_z: f64,
}

impl TryFrom<ModelDoc> for MallowsBlockModel {
    type Error = Error;

    fn try_from(doc: ModelDoc) -> Result<Self> {
        if doc.pi0.len() != doc.m {
            return Err(Error::domain(format!(
                "field `pi0` has {} entries but `m` is {}",
                doc.pi0.len(),
                doc.m
            )));
        }
        let pi0 = Permutation::from_ranks(doc.pi0)
            .map_err(|e| Error::domain(format!("field `pi0`: {e}")))?;
        let partition = BlockPartition::new(doc.m, doc.blocks)
            .map_err(|e| Error::domain(format!("field `blocks`: {e}")))?;
        MallowsBlockModel::new(pi0, doc.phis, partition)
    }
}

impl From<MallowsBlockModel> for ModelDoc {
    fn from(model: MallowsBlockModel) -> Self {
        ModelDoc {
            m: model.m(),
            pi0: model.pi0.into(),
            blocks: model.partition.blocks,
            phis: model.phis,
        }
    }
}

impl MallowsBlockModel {
    pub fn new(pi0: Permutation, phis: Vec<f64>, partition: BlockPartition) -> Result<Self> {
        Error::check_dim(partition.m(), pi0.m())?;
        if phis.len() != partition.d() {
            return Err(Error::domain(format!(
                "field `phis` has {} entries but there are {} blocks",
                phis.len(),
                partition.d()
            )));
        }
        for &phi in &phis {
            check_phi(phi).map_err(|e| Error::domain(format!("field `phis`: {e}")))?;
        }
        let stages = (1..=partition.m())
            .map(|j| TruncatedGeometric::new(phis[partition.block_of(j)], j - 1))
            .collect::<Result<Vec<_>>>()?;
        let mut log_z = NeumaierSum::new();
        for st in &stages {
            log_z.add(st.partition().ln());
        }
        Ok(Self {
            pi0,
            phis,
            partition,
            stages,
            log_z: log_z.value(),
        })
    }

    /// Classical Mallows model `p(pi) ∝ phi^{d_K(pi, pi0)}`.
    pub fn single_parameter(pi0: Permutation, phi: f64) -> Result<Self> {
        let m = pi0.m();
        Self::new(pi0, vec![phi], BlockPartition::single(m))
    }

    pub fn m(&self) -> usize {
        self.pi0.m()
    }

    pub fn d(&self) -> usize {
        self.partition.d()
    }

    pub fn pi0(&self) -> &Permutation {
        &self.pi0
    }

    pub fn phis(&self) -> &[f64] {
        &self.phis
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    /// Distribution of `V_j` for the 1-based stage `j`.
    pub fn stage(&self, j: usize) -> &TruncatedGeometric {
        &self.stages[j - 1]
    }

    pub fn stages(&self) -> &[TruncatedGeometric] {
        &self.stages
    }

    pub fn with_center(&self, pi0: Permutation) -> Result<Self> {
        Self::new(pi0, self.phis.clone(), self.partition.clone())
    }

    pub fn with_phis(&self, phis: Vec<f64>) -> Result<Self> {
        Self::new(self.pi0.clone(), phis, self.partition.clone())
    }

    /// `ln Z(phi, B)`; independent of `pi0`.
    pub fn log_partition(&self) -> f64 {
        self.log_z
    }

    /// The exponential family of block `i`'s statistic, in `θ = ln phi`.
    pub fn block_family(&self, i: usize) -> Result<TgSumFamily> {
        Ok(TgSumFamily::new(self.partition.stage_ks(i)?))
    }

    /// `E[T_i]` for every block.
    pub fn expected_stats(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.d()];
        for (idx, st) in self.stages.iter().enumerate() {
            out[self.partition.block_of[idx]] += st.mean();
        }
        out
    }

    /// `Var[T_i]` for every block.
    pub fn stat_variances(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.d()];
        for (idx, st) in self.stages.iter().enumerate() {
            out[self.partition.block_of[idx]] += st.variance();
        }
        out
    }

    /// Log-probability of a discordance vector (relative to this model's center).
    pub fn log_pmf_discordance(&self, v: &DiscordanceVector) -> Result<LogProb> {
        let t = stats_from_discordance(&self.partition, v)?;
        Ok(self.log_pmf_stats(&t))
    }

    fn log_pmf_stats(&self, t: &[u64]) -> LogProb {
        let mut s = NeumaierSum::new();
        for (&ti, &phi) in t.iter().zip(&self.phis) {
            if ti == 0 {
                continue;
            }
            if phi == 0.0 {
                return LogProb::Impossible;
            }
            s.add(ti as f64 * phi.ln());
        }
        s.add(-self.log_z);
        LogProb::Finite(s.value().min(0.0))
    }

    pub fn log_pmf(&self, pi: &Permutation) -> Result<LogProb> {
        let t = sufficient_stats(&self.partition, pi, &self.pi0)?;
        Ok(self.log_pmf_stats(&t))
    }

    /// Independent per-stage draws `V_j ~ TG(phi_{block(j)}, j - 1)`.
    pub fn sample_discordance<R: Rng + ?Sized>(&self, rng: &mut R) -> DiscordanceVector {
        DiscordanceVector::new_unchecked(self.stages.iter().map(|st| st.sample(rng)).collect())
    }

    /// Exact draw: sample the discordance vector, then decode it around `pi0`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Permutation {
        let v = self.sample_discordance(rng);
        decode_inversion(&v, &self.pi0).expect("sampled vector respects stage ranges")
    }

    /// Exact pmf of `T_i` on `{0, ..., Σ_{j ∈ B_i}(j - 1)}`.
    pub fn sum_stat_distribution(&self, i: usize) -> Result<Vec<f64>> {
        self.sum_stat_distribution_over(&[i])
    }

    /// Exact pmf of `Σ_{i ∈ blocks} T_i`.
    pub fn sum_stat_distribution_over(&self, blocks: &[usize]) -> Result<Vec<f64>> {
        let mut stages = Vec::new();
        for &b in blocks {
            for &j in self.partition.block(b)? {
                stages.push(self.stages[j - 1]);
            }
        }
        Ok(convolve_stages(&stages))
    }
}

/// Pmf of a sum of independent truncated geometrics.
pub fn convolve_stages(stages: &[TruncatedGeometric]) -> Vec<f64> {
    let support: usize = stages.iter().map(|s| s.k()).sum();
    let mut acc = Vec::with_capacity(support + 1);
    acc.push(1.0);
    for st in stages {
        if st.k() == 0 || st.phi() == 0.0 {
            continue;
        }
        acc = if st.k() + 1 >= RECURRENCE_MIN_KERNEL {
            convolve_geometric(&acc, st)
        } else {
            convolve_direct(&acc, st)
        };
    }
    // φ = 0 stages are point masses at zero: pad to the full support
    acc.resize(support + 1, 0.0);
    acc
}

fn convolve_direct(acc: &[f64], st: &TruncatedGeometric) -> Vec<f64> {
    let kernel = st.pmf_vec();
    let mut sums = vec![NeumaierSum::new(); acc.len() + st.k()];
    for (s, &p) in acc.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (i, &w) in kernel.iter().enumerate() {
            sums[s + i].add(p * w);
        }
    }
    sums.iter().map(NeumaierSum::value).collect()
}

// g[s] = Σ_{i=0..k} phi^i acc[s-i] satisfies
// g[s] = acc[s] + phi g[s-1] - phi^{k+1} acc[s-k-1].
fn convolve_geometric(acc: &[f64], st: &TruncatedGeometric) -> Vec<f64> {
    let (phi, k) = (st.phi(), st.k());
    let tail = phi.powi((k + 1) as i32);
    let z = st.partition();
    let len = acc.len() + k;
    let mut out = Vec::with_capacity(len);
    let mut g = 0.0;
    for s in 0..len {
        let add = acc.get(s).copied().unwrap_or(0.0);
        let drop = if s > k { acc.get(s - k - 1).copied().unwrap_or(0.0) } else { 0.0 };
        g = (add + phi * g - tail * drop).max(0.0);
        out.push(g / z);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{stable_sum, tv_pmf};
    use crate::perm::{all_permutations, kendall_tau};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn perm(r: &[usize]) -> Permutation {
        Permutation::from_ranks(r.to_vec()).unwrap()
    }

    #[test]
    fn partition_validation() {
        assert!(BlockPartition::new(3, vec![vec![1, 2], vec![3]]).is_ok());
        assert!(BlockPartition::new(3, vec![vec![1, 2]]).is_err());
        assert!(BlockPartition::new(3, vec![vec![1, 2], vec![2, 3]]).is_err());
        assert!(BlockPartition::new(3, vec![vec![1, 2, 3], vec![]]).is_err());
        assert!(BlockPartition::new(3, vec![vec![1, 4], vec![2, 3]]).is_err());
        assert!(BlockPartition::new(3, vec![]).is_err());
        let p = BlockPartition::contiguous(10, 3).unwrap();
        assert_eq!(p.sizes(), vec![4, 3, 3]);
        assert_eq!(p.m_star(), 3);
        assert_eq!(p.block_of(5), 1);
    }

    #[test]
    fn model_validation() {
        let id = Permutation::identity(3);
        assert!(MallowsBlockModel::new(id.clone(), vec![0.5, 0.5], BlockPartition::single(3)).is_err());
        assert!(MallowsBlockModel::new(id.clone(), vec![1.5], BlockPartition::single(3)).is_err());
        assert!(MallowsBlockModel::new(id, vec![0.5], BlockPartition::single(4)).is_err());
    }

    #[test]
    fn log_partition_examples() {
        let id = Permutation::identity(5);
        let uniform = MallowsBlockModel::single_parameter(id.clone(), 1.0).unwrap();
        assert!((uniform.log_partition() - 120f64.ln()).abs() < 1e-12);
        let point = MallowsBlockModel::single_parameter(id, 0.0).unwrap();
        assert_eq!(point.log_partition(), 0.0);
        let half = MallowsBlockModel::single_parameter(Permutation::identity(3), 0.5).unwrap();
        assert!((half.log_partition() - 2.625f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn block_family_examples() {
        let m = 6;
        let p = BlockPartition::new(m, vec![vec![1], vec![2, 4, 6], vec![3, 5]]).unwrap();
        let model = MallowsBlockModel::new(Permutation::identity(m), vec![0.2, 0.6, 0.6], p).unwrap();
        use crate::expfam::OneParamFamily;
        let f0 = model.block_family(0).unwrap();
        assert_eq!(f0.alpha(-0.3), 0.0);
        let f2 = model.block_family(2).unwrap();
        let want = TruncatedGeometric::new(0.6, 2).unwrap().mean_direct()
            + TruncatedGeometric::new(0.6, 4).unwrap().mean_direct();
        assert!((f2.alpha_dot(0.6f64.ln()) - want).abs() < 1e-12);
        assert!(model.block_family(3).is_err());

        let whole = MallowsBlockModel::single_parameter(Permutation::identity(7), 1.0).unwrap();
        let f = whole.block_family(0).unwrap();
        assert!((f.alpha_dot(0.0) - 7.0 * 6.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn log_pmf_examples() {
        let pi0 = perm(&[2, 3, 1]);
        let point = MallowsBlockModel::single_parameter(pi0.clone(), 0.0).unwrap();
        assert_eq!(point.log_pmf(&pi0).unwrap(), LogProb::Finite(0.0));
        assert_eq!(point.log_pmf(&perm(&[1, 2, 3])).unwrap(), LogProb::Impossible);
        let uniform = MallowsBlockModel::single_parameter(pi0, 1.0).unwrap();
        for pi in all_permutations(3) {
            assert!((uniform.log_pmf(&pi).unwrap().ln() + 6f64.ln()).abs() < 1e-14);
        }
        let half = MallowsBlockModel::single_parameter(Permutation::identity(3), 0.5).unwrap();
        let at2 = perm(&[2, 3, 1]);
        assert_eq!(kendall_tau(&at2, &Permutation::identity(3)).unwrap(), 2);
        let lp = half.log_pmf(&at2).unwrap().ln();
        assert!((lp - (0.25f64 / 2.625).ln()).abs() < 1e-14);
        assert!(half.log_pmf(&Permutation::identity(4)).is_err());
    }

    #[test]
    fn normalization_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in 1..=6 {
            for trial in 0..4 {
                let d = 1 + trial % m;
                let partition = BlockPartition::contiguous(m, d).unwrap();
                let phis: Vec<f64> = (0..d).map(|i| [0.0, 0.3, 0.8, 1.0][(i + trial) % 4]).collect();
                let pi0 = all_permutations(m).nth(trial * 5 % (1..=m).product::<usize>()).unwrap();
                let model = MallowsBlockModel::new(pi0, phis, partition).unwrap();
                let total = stable_sum(all_permutations(m).map(|p| model.log_pmf(&p).unwrap().prob()));
                assert!((total - 1.0).abs() < 1e-12, "m={m} trial={trial} total={total}");
                let _ = model.sample(&mut rng);
            }
        }
    }

    #[test]
    fn sufficient_stats_examples() {
        let p = BlockPartition::new(4, vec![vec![1, 2], vec![3, 4]]).unwrap();
        let id = Permutation::identity(4);
        assert_eq!(sufficient_stats(&p, &id, &id).unwrap(), vec![0, 0]);
        assert_eq!(
            sufficient_stats(&p, &Permutation::reversal(4), &id).unwrap(),
            vec![1, 5]
        );
        let single = BlockPartition::single(4);
        let x = perm(&[3, 1, 4, 2]);
        assert_eq!(
            sufficient_stats(&single, &x, &id).unwrap(),
            vec![kendall_tau(&x, &id).unwrap()]
        );
    }

    #[test]
    fn single_parameter_matches_product_formula() {
        let m = 5;
        let phi: f64 = 0.35;
        let model = MallowsBlockModel::single_parameter(Permutation::identity(m), phi).unwrap();
        let z: f64 = (1..m).map(|i| (0..=i).map(|j| phi.powi(j as i32)).sum::<f64>()).product();
        for pi in all_permutations(m) {
            let dk = kendall_tau(&pi, model.pi0()).unwrap();
            let want = phi.powi(dk as i32) / z;
            assert!((model.log_pmf(&pi).unwrap().prob() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn sample_point_mass() {
        let pi0 = perm(&[4, 2, 1, 3]);
        let model = MallowsBlockModel::new(pi0.clone(), vec![0.0, 0.0], BlockPartition::contiguous(4, 2).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..200).all(|_| model.sample(&mut rng) == pi0));
    }

    #[test]
    fn sampler_matches_exact_pmf_m5() {
        let m = 5;
        let model = MallowsBlockModel::new(
            perm(&[3, 5, 1, 2, 4]),
            vec![0.3, 0.8],
            BlockPartition::new(m, vec![vec![1, 3, 5], vec![2, 4]]).unwrap(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 200_000;
        let mut counts: HashMap<Permutation, usize> = HashMap::new();
        let mut stat_counts = vec![vec![0usize; 11]; 2];
        for _ in 0..n {
            let s = model.sample(&mut rng);
            let t = sufficient_stats(model.partition(), &s, model.pi0()).unwrap();
            for (b, &ti) in t.iter().enumerate() {
                stat_counts[b][ti as usize] += 1;
            }
            *counts.entry(s).or_default() += 1;
        }
        let tv = 0.5
            * all_permutations(m)
                .map(|p| {
                    let emp = *counts.get(&p).unwrap_or(&0) as f64 / n as f64;
                    (emp - model.log_pmf(&p).unwrap().prob()).abs()
                })
                .sum::<f64>();
        assert!(tv <= 0.02, "tv = {tv}");
        for b in 0..2 {
            let exact = model.sum_stat_distribution(b).unwrap();
            let emp: Vec<f64> = stat_counts[b].iter().map(|&c| c as f64 / n as f64).collect();
            assert!(tv_pmf(&exact, &emp) <= 0.02);
        }
    }

    #[test]
    fn sum_stat_examples() {
        let m = 4;
        let p = BlockPartition::new(m, vec![vec![1], vec![2, 3], vec![4]]).unwrap();
        let model = MallowsBlockModel::new(Permutation::identity(m), vec![0.5, 0.5, 0.5], p).unwrap();
        assert_eq!(model.sum_stat_distribution(0).unwrap(), vec![1.0]);
        let b = model.sum_stat_distribution(1).unwrap();
        let (x, y) = ([2.0 / 3.0, 1.0 / 3.0], [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0]);
        let want = [
            x[0] * y[0],
            x[0] * y[1] + x[1] * y[0],
            x[0] * y[2] + x[1] * y[1],
            x[1] * y[2],
        ];
        assert_eq!(b.len(), 4);
        for (g, w) in b.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
        let single = MallowsBlockModel::new(
            Permutation::identity(2),
            vec![0.5, 0.5],
            BlockPartition::singletons(2),
        )
        .unwrap();
        let s = single.sum_stat_distribution(1).unwrap();
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-15 && (s[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(model.sum_stat_distribution(3).is_err());
    }

    #[test]
    fn sum_stat_moments_match_family() {
        use crate::expfam::OneParamFamily;
        for (m, phi) in [(12, 0.4), (90, 0.7), (150, 1.0), (150, 0.999), (70, 0.0)] {
            let model = MallowsBlockModel::new(
                Permutation::identity(m),
                vec![phi, phi],
                BlockPartition::contiguous(m, 2).unwrap(),
            )
            .unwrap();
            for b in 0..2 {
                let pmf = model.sum_stat_distribution(b).unwrap();
                assert_eq!(pmf.len(), model.partition().max_stat(b).unwrap() + 1);
                let total = stable_sum(pmf.iter().copied());
                let mean = stable_sum(pmf.iter().enumerate().map(|(s, p)| s as f64 * p));
                let var = stable_sum(pmf.iter().enumerate().map(|(s, p)| (s as f64 - mean).powi(2) * p));
                let fam = model.block_family(b).unwrap();
                let theta = if phi == 0.0 { -1e3 } else { f64::ln(phi) };
                assert!((total - 1.0).abs() < 1e-10);
                assert!((mean - fam.alpha_dot(theta)).abs() < 1e-10 * (1.0 + mean), "m={m} phi={phi}");
                assert!((var - fam.alpha_ddot(theta)).abs() < 1e-9 * (1.0 + var), "m={m} phi={phi}");
            }
        }
    }

    #[test]
    fn json_round_trip_and_errors() {
        let model = MallowsBlockModel::new(
            perm(&[2, 1, 3]),
            vec![0.25, 0.75],
            BlockPartition::new(3, vec![vec![1, 3], vec![2]]).unwrap(),
        )
        .unwrap();
        let s = serde_json::to_string(&model).unwrap();
        assert_eq!(s, r#"{"m":3,"pi0":[2,1,3],"blocks":[[1,3],[2]],"phis":[0.25,0.75]}"#);
        let back: MallowsBlockModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, model);
        let err = serde_json::from_str::<MallowsBlockModel>(r#"{"m":3,"pi0":[1,2,3],"blocks":[[1,2,3]]}"#)
            .unwrap_err();
        assert!(err.to_string().contains("phis"));
        let err = serde_json::from_str::<MallowsBlockModel>(
            r#"{"m":3,"pi0":[1,1,3],"blocks":[[1,2,3]],"phis":[0.5]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("pi0"));
    }
}
