//! One-parameter exponential families `p_θ(x) = h(x) exp(θ T(x) - α(θ))`.
//!
//! Everything here is expressed through the log-partition function `α` and its
//! first two derivatives: `α̇(θ) = E_θ[T]`, `α̈(θ) = Var_θ[T] ≥ 0`.

use crate::error::{Error, Result};
use crate::tg::{tg_partition, TruncatedGeometric};

/// Bisection stops once the bracket is this narrow.
pub const INVERT_TOL: f64 = 1e-9;
pub const INVERT_MAX_ITER: usize = 200;

/// Closed interval `[lo, hi]` of natural parameters; `lo` may be `-inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::domain(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// Finite points of the interval.
    pub fn contains(&self, x: f64) -> bool {
        x.is_finite() && self.lo <= x && x <= self.hi
    }
}

pub trait OneParamFamily {
    /// Log-partition function `α(θ)`.
    fn alpha(&self, theta: f64) -> f64;
    /// `α̇(θ)`, the mean of the sufficient statistic.
    fn alpha_dot(&self, theta: f64) -> f64;
    /// `α̈(θ)`, the variance of the sufficient statistic.
    fn alpha_ddot(&self, theta: f64) -> f64;
    fn domain(&self) -> Interval;
}

fn check_in_domain<F: OneParamFamily + ?Sized>(f: &F, theta: f64) -> Result<()> {
    let dom = f.domain();
    if dom.contains(theta) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "natural parameter {theta} outside [{}, {}]",
            dom.lo, dom.hi
        )))
    }
}

/// `KL(P_a ‖ P_b) = (a - b) α̇(a) + α(b) - α(a)`.
pub fn kl_closed_form<F: OneParamFamily + ?Sized>(f: &F, theta_a: f64, theta_b: f64) -> Result<f64> {
    check_in_domain(f, theta_a)?;
    check_in_domain(f, theta_b)?;
    if theta_a == theta_b {
        return Ok(0.0);
    }
    let kl = (theta_a - theta_b) * f.alpha_dot(theta_a) + f.alpha(theta_b) - f.alpha(theta_a);
    Ok(kl.max(0.0))
}

/// Upper bound `exp(-n KL(P_θ' ‖ P_θ))` on the probability, under `n` i.i.d.
/// draws from `P_θ`, that the empirical mean of `T` lands on the far side of
/// `E_θ'[T]`:  `P( mean(T)·(θ' - θ) ≥ α̇(θ')·(θ' - θ) )`.
pub fn chernoff_tail_bound<F: OneParamFamily + ?Sized>(
    f: &F,
    theta: f64,
    theta_prime: f64,
    n: usize,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("sample size n must be positive"));
    }
    let kl = kl_closed_form(f, theta_prime, theta)?;
    Ok((-(n as f64) * kl).exp())
}

/// Finds `θ` in `bracket` with `α̇(θ) ≈ target` by bisection, clamping to the
/// bracket ends when the target lies outside `α̇`'s range there.
pub fn invert_mean<F: OneParamFamily + ?Sized>(f: &F, target: f64, bracket: Interval) -> Result<f64> {
    if !(bracket.lo.is_finite() && bracket.hi.is_finite()) || bracket.lo >= bracket.hi {
        return Err(Error::domain(format!(
            "bracket [{}, {}] must be finite and nonempty",
            bracket.lo, bracket.hi
        )));
    }
    if target.is_nan() {
        return Err(Error::domain("target mean is NaN"));
    }
    let (mut lo, mut hi) = (bracket.lo, bracket.hi);
    if target <= f.alpha_dot(lo) {
        return Ok(lo);
    }
    if target >= f.alpha_dot(hi) {
        return Ok(hi);
    }
    for _ in 0..INVERT_MAX_ITER {
        if hi - lo <= INVERT_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f.alpha_dot(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The family of `T = Σ_s Z_s` with independent `Z_s ~ TG(e^θ, k_s)`,
/// natural parameter `θ = ln φ ∈ (-∞, 0]`.
///
/// A single `k` gives the truncated geometric family itself; the stage ranges
/// of one block give that block's sufficient-statistic family.
#[derive(Debug, Clone, PartialEq)]
pub struct TgSumFamily {
    ks: Vec<usize>,
}

impl TgSumFamily {
    pub fn new(ks: Vec<usize>) -> Self {
        Self { ks }
    }

    pub fn single(k: usize) -> Self {
        Self { ks: vec![k] }
    }

    pub fn ks(&self) -> &[usize] {
        &self.ks
    }

    /// Largest value the statistic can take.
    pub fn max_stat(&self) -> usize {
        self.ks.iter().sum()
    }

    fn stage(&self, theta: f64, k: usize) -> TruncatedGeometric {
        TruncatedGeometric::new(theta.exp().min(1.0), k).expect("phi = e^theta lies in [0, 1]")
    }
}

impl OneParamFamily for TgSumFamily {
    fn alpha(&self, theta: f64) -> f64 {
        let phi = theta.exp().min(1.0);
        self.ks
            .iter()
            .map(|&k| tg_partition(phi, k).expect("phi in range").ln())
            .sum()
    }

    fn alpha_dot(&self, theta: f64) -> f64 {
        self.ks.iter().map(|&k| self.stage(theta, k).mean()).sum()
    }

    fn alpha_ddot(&self, theta: f64) -> f64 {
        self.ks.iter().map(|&k| self.stage(theta, k).variance()).sum()
    }

    fn domain(&self) -> Interval {
        Interval {
            lo: f64::NEG_INFINITY,
            hi: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::stable_sum;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Brute-force KL between TG(φa, k) and TG(φb, k) by summing the pmfs.
    fn kl_oracle(phi_a: f64, phi_b: f64, k: usize) -> f64 {
        let (a, b) = (
            TruncatedGeometric::new(phi_a, k).unwrap(),
            TruncatedGeometric::new(phi_b, k).unwrap(),
        );
        stable_sum((0..=k).map(|i| {
            let p = a.pmf(i);
            if p == 0.0 {
                0.0
            } else {
                p * (p / b.pmf(i)).ln()
            }
        }))
    }

    // Exact pmf of a sum of independent TGs, by plain convolution.
    fn sum_pmf(phi: f64, ks: &[usize]) -> Vec<f64> {
        let mut acc = vec![1.0];
        for &k in ks {
            let d = TruncatedGeometric::new(phi, k).unwrap();
            let mut next = vec![0.0; acc.len() + k];
            for (s, &p) in acc.iter().enumerate() {
                for i in 0..=k {
                    next[s + i] += p * d.pmf(i);
                }
            }
            acc = next;
        }
        acc
    }

    #[test]
    fn kl_identity_is_zero() {
        let f = TgSumFamily::single(4);
        assert_eq!(kl_closed_form(&f, -0.7, -0.7).unwrap(), 0.0);
    }

    #[test]
    fn kl_matches_brute_force_k2() {
        let f = TgSumFamily::single(2);
        let got = kl_closed_form(&f, 0.5f64.ln(), 0.25f64.ln()).unwrap();
        assert!((got - kl_oracle(0.5, 0.25, 2)).abs() < 1e-12);
    }

    #[test]
    fn kl_matches_brute_force_grid_k5() {
        let f = TgSumFamily::single(5);
        for a in 1..20 {
            for b in 1..20 {
                let (pa, pb) = (a as f64 / 20.0, b as f64 / 20.0);
                let got = kl_closed_form(&f, pa.ln(), pb.ln()).unwrap();
                let want = kl_oracle(pa, pb, 5);
                assert!((got - want).abs() < 1e-10 * (1.0 + want), "{pa} {pb}");
            }
        }
    }

    #[test]
    fn kl_rejects_out_of_domain() {
        let f = TgSumFamily::single(3);
        assert!(kl_closed_form(&f, 0.1, -1.0).is_err());
        assert!(kl_closed_form(&f, f64::NEG_INFINITY, -1.0).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let f = TgSumFamily::new(vec![1, 3, 6, 10]);
        let h = 1e-4;
        for i in 1..40 {
            let theta = -(i as f64) * 0.1;
            let fd1 = (f.alpha(theta + h) - f.alpha(theta - h)) / (2.0 * h);
            let fd2 = (f.alpha(theta + h) - 2.0 * f.alpha(theta) + f.alpha(theta - h)) / (h * h);
            assert!((fd1 - f.alpha_dot(theta)).abs() < 1e-6, "theta {theta}");
            assert!((fd2 - f.alpha_ddot(theta)).abs() < 1e-4, "theta {theta}");
            assert!(f.alpha_ddot(theta) >= 0.0);
        }
    }

    #[test]
    fn mean_map_nondecreasing() {
        let f = TgSumFamily::new(vec![2, 7]);
        let mut prev = f.alpha_dot(-30.0);
        for i in (0..300).rev() {
            let cur = f.alpha_dot(-(i as f64) * 0.1);
            assert!(cur >= prev);
            prev = cur;
        }
    }

    #[test]
    fn moments_match_sum_pmf() {
        let ks = [1, 2, 4, 8];
        let f = TgSumFamily::new(ks.to_vec());
        for phi in [0.1, 0.5, 0.9] {
            let pmf = sum_pmf(phi, &ks);
            let mean = stable_sum(pmf.iter().enumerate().map(|(s, p)| s as f64 * p));
            let var = stable_sum(pmf.iter().enumerate().map(|(s, p)| (s as f64 - mean).powi(2) * p));
            assert!((f.alpha_dot(phi.ln()) - mean).abs() < 1e-10);
            assert!((f.alpha_ddot(phi.ln()) - var).abs() < 1e-10);
        }
    }

    #[test]
    fn mgf_identity() {
        let k = 6;
        let f = TgSumFamily::single(k);
        for (phi, s) in [(0.3f64, 0.5f64), (0.5, -1.0), (0.8, 0.2), (0.6, -0.4)] {
            let theta = phi.ln();
            let d = TruncatedGeometric::new(phi, k).unwrap();
            let direct = stable_sum((0..=k).map(|i| (s * i as f64).exp() * d.pmf(i)));
            let closed = (f.alpha(theta + s) - f.alpha(theta)).exp();
            assert!((direct - closed).abs() < 1e-10 * direct);
        }
    }

    #[test]
    fn chernoff_examples() {
        let f = TgSumFamily::single(3);
        assert_eq!(chernoff_tail_bound(&f, -0.5, -0.5, 10).unwrap(), 1.0);
        let b1 = chernoff_tail_bound(&f, 0.5f64.ln(), 0.7f64.ln(), 25).unwrap();
        let b2 = chernoff_tail_bound(&f, 0.5f64.ln(), 0.7f64.ln(), 50).unwrap();
        assert!((b2 - b1 * b1).abs() < 1e-15);
        let want = (-50.0 * kl_oracle(0.7, 0.5, 3)).exp();
        assert!((b2 - want).abs() < 1e-12);
        assert!(chernoff_tail_bound(&f, -0.5, -0.3, 0).is_err());
    }

    #[test]
    fn chernoff_bound_holds_monte_carlo() {
        let k = 3;
        let f = TgSumFamily::single(k);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (phi, phi_p, n) in [(0.5, 0.7, 10usize), (0.7, 0.5, 10), (0.4, 0.6, 3)] {
            let (th, thp) = (f64::ln(phi), f64::ln(phi_p));
            let d = TruncatedGeometric::new(phi, k).unwrap();
            let thresh = f.alpha_dot(thp) * (thp - th);
            let trials = 20_000;
            let hits = (0..trials)
                .filter(|_| {
                    let mean = (0..n).map(|_| d.sample(&mut rng) as f64).sum::<f64>() / n as f64;
                    mean * (thp - th) >= thresh
                })
                .count();
            let p = hits as f64 / trials as f64;
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            assert!(p <= chernoff_tail_bound(&f, th, thp, n).unwrap() + 3.0 * se);
        }
    }

    #[test]
    fn invert_mean_round_trip_and_clamps() {
        let f = TgSumFamily::new(vec![2, 4, 9]);
        let br = Interval::new(1e-12f64.ln(), 0.0).unwrap();
        for theta0 in [-5.0, -1.3, -0.2, -0.01] {
            let got = invert_mean(&f, f.alpha_dot(theta0), br).unwrap();
            assert!((got - theta0).abs() < 1e-8, "{theta0} -> {got}");
        }
        assert_eq!(invert_mean(&f, -1.0, br).unwrap(), br.lo);
        assert_eq!(invert_mean(&f, 1e6, br).unwrap(), br.hi);
        assert!(invert_mean(&f, 1.0, Interval { lo: 0.0, hi: -1.0 }).is_err());
        assert!(invert_mean(&f, 1.0, Interval { lo: -1.0, hi: -1.0 }).is_err());
    }
}
