//! Estimators for the central ranking and the spread vector.
//!
//! The central ranking comes from pairwise majorities over the batch; each
//! block's spread is recovered by matching the empirical mean of its
//! sufficient statistic to the model mean and inverting in `θ = ln phi`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::{invert_mean, Interval, OneParamFamily, TgSumFamily};
use crate::model::{sufficient_stats, BlockPartition};
use crate::perm::{parse_permutations, Permutation};

/// Smallest spread the inversion searches; means at or below this spread's
/// mean are clamped to `phi = 0`.
pub const PHI_FLOOR: f64 = 1e-12;

/// A nonempty batch of rankings over a common number of items.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    m: usize,
    samples: Vec<Permutation>,
}

impl SampleBatch {
    pub fn new(samples: Vec<Permutation>) -> Result<Self> {
        let m = samples
            .first()
            .ok_or_else(|| Error::domain("sample batch is empty"))?
            .m();
        for p in &samples {
            Error::check_dim(m, p.m())?;
        }
        Ok(Self { m, samples })
    }

    /// Parses the permutation text format.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::new(parse_permutations(text)?)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[Permutation] {
        &self.samples
    }

    /// Splits into the first `k` samples and the rest; both parts nonempty.
    pub fn split_at(&self, k: usize) -> Result<(SampleBatch, SampleBatch)> {
        if k == 0 || k >= self.n() {
            return Err(Error::domain(format!(
                "cannot split a batch of {} samples at {k}",
                self.n()
            )));
        }
        let (a, b) = self.samples.split_at(k);
        Ok((
            SampleBatch { m: self.m, samples: a.to_vec() },
            SampleBatch { m: self.m, samples: b.to_vec() },
        ))
    }
}

/// How a block's spread estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockFlag {
    Interior,
    /// Empirical mean at or below the mean of `phi = PHI_FLOOR`; reported as 0.
    LowerClamp,
    /// Empirical mean at or above the uniform mean; reported as 1.
    UpperClamp,
    /// The block holds only stage 1, whose count is identically zero.
    Unidentifiable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadEstimate {
    pub phi_hat: Vec<f64>,
    pub block_means: Vec<f64>,
    pub flags: Vec<BlockFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub pi_hat: Permutation,
    pub phi_hat: Vec<f64>,
    pub block_means: Vec<f64>,
    pub flags: Vec<BlockFlag>,
    /// Samples used for the central ranking; 0 when it was supplied.
    pub n_ranking: usize,
    pub n_spread: usize,
    pub known_center: bool,
}

impl EstimationReport {
    fn assemble(pi_hat: Permutation, spread: SpreadEstimate, n_ranking: usize, n_spread: usize) -> Self {
        Self {
            pi_hat,
            phi_hat: spread.phi_hat,
            block_means: spread.block_means,
            flags: spread.flags,
            n_ranking,
            n_spread,
            known_center: n_ranking == 0,
        }
    }
}

/// `counts[a * m + b]` = number of samples ranking item `a+1` ahead of `b+1`.
pub fn pairwise_counts(batch: &SampleBatch) -> Vec<u32> {
    let m = batch.m();
    let mut counts = vec![0u32; m * m];
    for p in batch.samples() {
        let r = p.ranks();
        for a in 0..m {
            for b in (a + 1)..m {
                if r[a] < r[b] {
                    counts[a * m + b] += 1;
                } else {
                    counts[b * m + a] += 1;
                }
            }
        }
    }
    counts
}

/// Pairwise-majority ranking. Items are ordered by the number of strict
/// pairwise wins, then by mean position in the batch, then by item index;
/// when the majority relation is a strict total order this is that order.
pub fn estimate_central_ranking(batch: &SampleBatch) -> Result<Permutation> {
    let m = batch.m();
    let counts = pairwise_counts(batch);
    let mut wins = vec![0usize; m];
    for a in 0..m {
        for b in 0..m {
            if a != b && counts[a * m + b] > counts[b * m + a] {
                wins[a] += 1;
            }
        }
    }
    // same n for every item, so position sums order like means
    let mut pos_sum = vec![0u64; m];
    for p in batch.samples() {
        for (a, &r) in p.ranks().iter().enumerate() {
            pos_sum[a] += r as u64;
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        wins[b]
            .cmp(&wins[a])
            .then(pos_sum[a].cmp(&pos_sum[b]))
            .then(a.cmp(&b))
    });
    let items: Vec<usize> = order.into_iter().map(|a| a + 1).collect();
    Permutation::from_ordering(&items)
}

/// Natural-parameter bracket searched by the inversion.
pub fn theta_bracket() -> Interval {
    Interval {
        lo: PHI_FLOOR.ln(),
        hi: 0.0,
    }
}

/// Inverts one block's mean map at an empirical mean `r`.
pub fn invert_block_mean(family: &TgSumFamily, r: f64) -> Result<(f64, BlockFlag)> {
    if family.max_stat() == 0 {
        return Ok((0.0, BlockFlag::Unidentifiable));
    }
    let bracket = theta_bracket();
    if r <= family.alpha_dot(bracket.lo) {
        return Ok((0.0, BlockFlag::LowerClamp));
    }
    if r >= family.max_stat() as f64 / 2.0 {
        return Ok((1.0, BlockFlag::UpperClamp));
    }
    let theta = invert_mean(family, r, bracket)?;
    Ok((theta.exp().clamp(0.0, 1.0), BlockFlag::Interior))
}

/// Spread estimates from given per-block means of the sufficient statistics.
pub fn spread_from_means(partition: &BlockPartition, means: &[f64]) -> Result<SpreadEstimate> {
    Error::check_dim(partition.d(), means.len())?;
    let mut phi_hat = Vec::with_capacity(means.len());
    let mut flags = Vec::with_capacity(means.len());
    for (i, &r) in means.iter().enumerate() {
        let family = TgSumFamily::new(partition.stage_ks(i)?);
        let (phi, flag) = invert_block_mean(&family, r)?;
        phi_hat.push(phi);
        flags.push(flag);
    }
    Ok(SpreadEstimate {
        phi_hat,
        block_means: means.to_vec(),
        flags,
    })
}

/// Moment-matching spread estimate with the central ranking taken as `pi0`.
pub fn estimate_spread(batch: &SampleBatch, pi0: &Permutation, partition: &BlockPartition) -> Result<SpreadEstimate> {
    Error::check_dim(batch.m(), pi0.m())?;
    Error::check_dim(batch.m(), partition.m())?;
    let mut totals = vec![0u64; partition.d()];
    for p in batch.samples() {
        for (acc, t) in totals.iter_mut().zip(sufficient_stats(partition, p, pi0)?) {
            *acc += t;
        }
    }
    let n = batch.n() as f64;
    let means: Vec<f64> = totals.iter().map(|&t| t as f64 / n).collect();
    spread_from_means(partition, &means)
}

/// Estimates the central ranking and then the spreads, both from the whole batch.
pub fn estimate_full(batch: &SampleBatch, partition: &BlockPartition) -> Result<EstimationReport> {
    Error::check_dim(batch.m(), partition.m())?;
    let pi_hat = estimate_central_ranking(batch)?;
    let spread = estimate_spread(batch, &pi_hat, partition)?;
    Ok(EstimationReport::assemble(pi_hat, spread, batch.n(), batch.n()))
}

/// Like [`estimate_full`], but the central ranking uses the first half of the
/// batch and the spreads the second half.
pub fn estimate_full_split(batch: &SampleBatch, partition: &BlockPartition) -> Result<EstimationReport> {
    Error::check_dim(batch.m(), partition.m())?;
    let (first, second) = batch.split_at(batch.n() / 2)?;
    let pi_hat = estimate_central_ranking(&first)?;
    let spread = estimate_spread(&second, &pi_hat, partition)?;
    Ok(EstimationReport::assemble(pi_hat, spread, first.n(), second.n()))
}

/// Spread estimation with the central ranking supplied.
pub fn estimate_known_center(
    batch: &SampleBatch,
    pi0: &Permutation,
    partition: &BlockPartition,
) -> Result<EstimationReport> {
    let spread = estimate_spread(batch, pi0, partition)?;
    Ok(EstimationReport::assemble(pi0.clone(), spread, 0, batch.n()))
}

/// Spread estimate from a single ranking with known center.
pub fn single_sample_estimate(pi: &Permutation, pi0: &Permutation, partition: &BlockPartition) -> Result<Vec<f64>> {
    let batch = SampleBatch::new(vec![pi.clone()])?;
    Ok(estimate_spread(&batch, pi0, partition)?.phi_hat)
}

/// Sample sizes suggested by the learning guarantees, with all hidden
/// constants set to 1. Informational only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeHint {
    /// `ln(m/δ) / γ` for the central ranking.
    pub ranking: f64,
    /// `d ln(d/δ) / (m* ε²)` for the spreads.
    pub spread: f64,
}

impl SampleSizeHint {
    pub fn total(&self) -> f64 {
        self.ranking + self.spread
    }
}

pub fn sample_size_hint(m: usize, d: usize, m_star: usize, eps: f64, delta: f64, gamma: f64) -> Result<SampleSizeHint> {
    if m == 0 || d == 0 || m_star == 0 {
        return Err(Error::domain("m, d and m* must be positive"));
    }
    let valid = eps > 0.0 && delta > 0.0 && delta < 1.0 && gamma > 0.0 && gamma <= 1.0;
    if !valid {
        return Err(Error::domain(format!(
            "need eps > 0, delta in (0,1), gamma in (0,1]; got {eps}, {delta}, {gamma}"
        )));
    }
    let (m, d, m_star) = (m as f64, d as f64, m_star as f64);
    Ok(SampleSizeHint {
        ranking: (m / delta).ln() / gamma,
        spread: d * (d / delta).ln() / (m_star * eps * eps),
    })
}
