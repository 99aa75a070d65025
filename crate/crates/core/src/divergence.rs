//! KL divergence and total variation distance between Mallows Block models.
//!
//! With a shared center the models factor over stages, so KL is a sum of
//! per-block closed forms and exact enumeration can walk discordance vectors
//! directly. Otherwise exact answers require enumerating `S_m`, which is
//! capped at `m ≤ ENUMERATION_MAX_M`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::{kl_closed_form, OneParamFamily};
use crate::model::MallowsBlockModel;
use crate::numeric::{tv_pmf, NeumaierSum};
use crate::perm::{decode_inversion, DiscordanceVector};

pub const ENUMERATION_MAX_M: usize = 10;
pub const MC_MIN_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Enumeration,
    Convolution,
    MonteCarlo,
    /// Monte Carlo estimate of `Σ (p - q)^+`, used when the second model is
    /// not absolutely continuous with respect to the first.
    MaxCouplingMonteCarlo,
    Bound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceResult {
    /// Nonnegative; `inf` for a KL divergence without absolute continuity.
    pub value: f64,
    pub method: Method,
    /// Standard error, Monte Carlo only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_bar: Option<f64>,
}

impl DivergenceResult {
    fn exact(value: f64, method: Method) -> Self {
        Self {
            value,
            method,
            error_bar: None,
        }
    }
}

fn check_same_m(a: &MallowsBlockModel, b: &MallowsBlockModel) -> Result<()> {
    Error::check_dim(a.m(), b.m())
}

fn check_same_partition(a: &MallowsBlockModel, b: &MallowsBlockModel) -> Result<()> {
    check_same_m(a, b)?;
    if a.partition() != b.partition() {
        return Err(Error::domain("models use different block partitions"));
    }
    Ok(())
}

fn check_same_structure(a: &MallowsBlockModel, b: &MallowsBlockModel) -> Result<()> {
    check_same_partition(a, b)?;
    if a.pi0() != b.pi0() {
        return Err(Error::domain("models have different central rankings"));
    }
    Ok(())
}

fn check_enumerable(m: usize) -> Result<()> {
    if m > ENUMERATION_MAX_M {
        return Err(Error::Capability(format!(
            "exact enumeration over S_{m} exceeds the limit m ≤ {ENUMERATION_MAX_M}; use the Monte Carlo estimator"
        )));
    }
    Ok(())
}

/// KL between two models sharing a partition. Closed form per block when
/// the centers coincide, enumeration otherwise.
pub fn kl(a: &MallowsBlockModel, b: &MallowsBlockModel) -> Result<DivergenceResult> {
    check_same_partition(a, b)?;
    if a.pi0() != b.pi0() {
        return kl_exact(a, b);
    }
    let mut total = NeumaierSum::new();
    for i in 0..a.d() {
        let family = a.block_family(i)?;
        if family.max_stat() == 0 {
            continue;
        }
        let (pa, pb) = (a.phis()[i], b.phis()[i]);
        let block = match (pa == 0.0, pb == 0.0) {
            (true, true) => 0.0,
            // point mass at T = 0 against a law giving it mass 1/Z_b
            (true, false) => family.alpha(pb.ln()),
            (false, true) => return Ok(DivergenceResult::exact(f64::INFINITY, Method::ClosedForm)),
            (false, false) => kl_closed_form(&family, pa.ln(), pb.ln())?,
        };
        total.add(block);
    }
    Ok(DivergenceResult::exact(total.value().max(0.0), Method::ClosedForm))
}

/// `Σ_{pi ∈ S_m} p_a ln(p_a / p_b)` by enumeration.
pub fn kl_exact(a: &MallowsBlockModel, b: &MallowsBlockModel) -> Result<DivergenceResult> {
    let value = enumerate_sum(a, b, |lp, lq| {
        if lp == f64::NEG_INFINITY {
            0.0
        } else if lq == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            lp.exp() * (lp - lq)
        }
    })?;
    Ok(DivergenceResult::exact(value.max(0.0), Method::Enumeration))
}

/// `½ Σ_{pi ∈ S_m} |p_a - p_b|` by enumeration.
pub fn tv_exact(a: &MallowsBlockModel, b: &MallowsBlockModel) -> Result<DivergenceResult> {
    let value = enumerate_sum(a, b, |lp, lq| 0.5 * (lp.exp() - lq.exp()).abs())?;
    Ok(DivergenceResult::exact(value.clamp(0.0, 1.0), Method::Enumeration))
}

/// Sums `f(ln p_a(pi), ln p_b(pi))` over `S_m`, walking the discordance
/// vectors of `a`'s center. Shards on the last stage's count and merges the
/// shard sums in order, so the result does not depend on scheduling.
/// An infinite term makes the sum infinite.
fn enumerate_sum<F>(a: &MallowsBlockModel, b: &MallowsBlockModel, f: F) -> Result<f64>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    check_same_m(a, b)?;
    let m = a.m();
    check_enumerable(m)?;
    let same_center = a.pi0() == b.pi0();
    let table = |model: &MallowsBlockModel| -> Vec<Vec<f64>> {
        model
            .stages()
            .iter()
            .map(|st| (0..=st.k()).map(|i| st.ln_pmf(i)).collect())
            .collect()
    };
    let (ta, tb) = (table(a), table(b));

    let shards: Vec<(NeumaierSum, bool)> = (0..m)
        .into_par_iter()
        .map(|last| {
            let mut sum = NeumaierSum::new();
            let mut infinite = false;
            let mut v = vec![0usize; m];
            v[m - 1] = last;
            loop {
                let lp: f64 = v.iter().zip(&ta).map(|(&x, t)| t[x]).sum();
                let lq = if same_center {
                    v.iter().zip(&tb).map(|(&x, t)| t[x]).sum()
                } else {
                    let sigma = decode_inversion(&DiscordanceVector::new_unchecked(v.clone()), a.pi0())
                        .expect("counter respects stage ranges");
                    b.log_pmf(&sigma).expect("same m").ln()
                };
                let term = f(lp, lq);
                if term.is_infinite() {
                    infinite = true;
                } else {
                    sum.add(term);
                }
                // advance the mixed-radix counter over stages 2..m-1
                let mut j = 1;
                while j + 1 < m {
                    if v[j] < j {
                        v[j] += 1;
                        break;
                    }
                    v[j] = 0;
                    j += 1;
                }
                if j + 1 >= m {
                    break;
                }
            }
            (sum, infinite)
        })
        .collect();

    let mut total = NeumaierSum::new();
    for (s, inf) in &shards {
        if *inf {
            return Ok(f64::INFINITY);
        }
        total.merge(s);
    }
    Ok(total.value())
}

/// Every ranking has positive probability under `model`.
fn has_full_support(model: &MallowsBlockModel) -> bool {
    model.stages().iter().all(|st| st.k() == 0 || st.phi() > 0.0)
}

/// Importance-sampling estimate of TV from `n_draws` draws of `a`:
/// `½ E_a |1 - p_b/p_a|`, or `E_a (1 - p_b/p_a)^+` when `a` does not have
/// full support and the first form would miss mass of `b`.
pub fn tv_monte_carlo<R: Rng + ?Sized>(
    a: &MallowsBlockModel,
    b: &MallowsBlockModel,
    n_draws: usize,
    rng: &mut R,
) -> Result<DivergenceResult> {
    check_same_m(a, b)?;
    if n_draws < MC_MIN_DRAWS {
        return Err(Error::domain(format!(
            "Monte Carlo needs at least {MC_MIN_DRAWS} draws, got {n_draws}"
        )));
    }
    let coupling = !has_full_support(a);
    let mut sum = NeumaierSum::new();
    let mut sum_sq = NeumaierSum::new();
    for _ in 0..n_draws {
        let sigma = a.sample(rng);
        let lp = a.log_pmf(&sigma)?.ln();
        let lq = b.log_pmf(&sigma)?.ln();
        let ratio = (lq - lp).exp();
        let x = if coupling {
            (1.0 - ratio).max(0.0)
        } else {
            0.5 * (1.0 - ratio).abs()
        };
        sum.add(x);
        sum_sq.add(x * x);
    }
    let n = n_draws as f64;
    let mean = sum.value() / n;
    let var = ((sum_sq.value() / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok(DivergenceResult {
        value: mean.clamp(0.0, 1.0),
        method: if coupling {
            Method::MaxCouplingMonteCarlo
        } else {
            Method::MonteCarlo
        },
        error_bar: Some((var / n).sqrt()),
    })
}

/// Exact TV between the laws of block `i`'s statistic; a lower bound on the
/// model TV.
pub fn tv_sum_stats(a: &MallowsBlockModel, b: &MallowsBlockModel, i: usize) -> Result<DivergenceResult> {
    check_same_structure(a, b)?;
    let value = tv_pmf(&a.sum_stat_distribution(i)?, &b.sum_stat_distribution(i)?);
    Ok(DivergenceResult::exact(value, Method::Convolution))
}

/// Largest of the per-block sum-statistic TVs; still a lower bound.
pub fn tv_sum_stats_max(a: &MallowsBlockModel, b: &MallowsBlockModel) -> Result<DivergenceResult> {
    check_same_structure(a, b)?;
    let mut best = 0.0f64;
    for i in 0..a.d() {
        best = best.max(tv_sum_stats(a, b, i)?.value);
    }
    Ok(DivergenceResult::exact(best, Method::Convolution))
}

/// `Σ_j TV(V_j under a, V_j under b)`, capped at 1; an upper bound on the
/// model TV.
pub fn tv_coordinatewise_bound(a: &MallowsBlockModel, b: &MallowsBlockModel) -> Result<DivergenceResult> {
    check_same_structure(a, b)?;
    let mut total = NeumaierSum::new();
    for (sa, sb) in a.stages().iter().zip(b.stages()) {
        if sa.phi() != sb.phi() {
            total.add(tv_pmf(&sa.pmf_vec(), &sb.pmf_vec()));
        }
    }
    Ok(DivergenceResult::exact(total.value().min(1.0), Method::Bound))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Kl,
    Tv,
}

/// Method requested by a caller; `Auto` picks the most exact feasible one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Auto,
    Exact,
    Mc,
    Sumstat,
    Bound,
}

/// Monte Carlo estimate of `E_a[ln p_a - ln p_b]`.
pub fn kl_monte_carlo<R: Rng + ?Sized>(
    a: &MallowsBlockModel,
    b: &MallowsBlockModel,
    n_draws: usize,
    rng: &mut R,
) -> Result<DivergenceResult> {
    check_same_m(a, b)?;
    if n_draws < MC_MIN_DRAWS {
        return Err(Error::domain(format!(
            "Monte Carlo needs at least {MC_MIN_DRAWS} draws, got {n_draws}"
        )));
    }
    let mut sum = NeumaierSum::new();
    let mut sum_sq = NeumaierSum::new();
    for _ in 0..n_draws {
        let sigma = a.sample(rng);
        let lq = b.log_pmf(&sigma)?;
        if lq.is_impossible() {
            return Ok(DivergenceResult {
                value: f64::INFINITY,
                method: Method::MonteCarlo,
                error_bar: Some(0.0),
            });
        }
        let x = a.log_pmf(&sigma)?.ln() - lq.ln();
        sum.add(x);
        sum_sq.add(x * x);
    }
    let n = n_draws as f64;
    let mean = sum.value() / n;
    let var = ((sum_sq.value() / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok(DivergenceResult {
        value: mean.max(0.0),
        method: Method::MonteCarlo,
        error_bar: Some((var / n).sqrt()),
    })
}

/// Dispatches a divergence request.
pub fn compute<R: Rng + ?Sized>(
    a: &MallowsBlockModel,
    b: &MallowsBlockModel,
    kind: Kind,
    method: MethodChoice,
    mc_draws: usize,
    rng: &mut R,
) -> Result<DivergenceResult> {
    match (kind, method) {
        (Kind::Kl, MethodChoice::Auto) => {
            if a.partition() == b.partition() && (a.pi0() == b.pi0() || a.m() <= ENUMERATION_MAX_M) {
                kl(a, b)
            } else if a.m() <= ENUMERATION_MAX_M {
                kl_exact(a, b)
            } else {
                kl_monte_carlo(a, b, mc_draws, rng)
            }
        }
        (Kind::Kl, MethodChoice::Exact) => {
            if a.partition() == b.partition() {
                kl(a, b)
            } else {
                kl_exact(a, b)
            }
        }
        (Kind::Kl, MethodChoice::Mc) => kl_monte_carlo(a, b, mc_draws, rng),
        (Kind::Kl, m) => Err(Error::domain(format!("method {m:?} is not available for KL"))),
        (Kind::Tv, MethodChoice::Auto) => {
            if a.m() <= ENUMERATION_MAX_M {
                tv_exact(a, b)
            } else {
                tv_monte_carlo(a, b, mc_draws, rng)
            }
        }
        (Kind::Tv, MethodChoice::Exact) => tv_exact(a, b),
        (Kind::Tv, MethodChoice::Mc) => tv_monte_carlo(a, b, mc_draws, rng),
        (Kind::Tv, MethodChoice::Sumstat) => tv_sum_stats_max(a, b),
        (Kind::Tv, MethodChoice::Bound) => tv_coordinatewise_bound(a, b),
    }
}
