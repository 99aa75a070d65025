//! The truncated geometric distribution `TG(phi, k)` with pmf
//! `phi^i / Σ_{j=0..k} phi^j` on `{0, ..., k}`.
//!
//! Closed-form moments lose precision near `phi = 1` (both terms blow up like
//! `1/(1-phi)^2` while their difference stays `O(k^2)`), so they fall back to
//! direct summation there and at `phi ≈ 0`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::stable_sum;

/// Below this `phi` the closed forms are replaced by direct summation.
const PHI_ZERO_CUTOFF: f64 = 1e-12;
/// Direct summation when `1 - phi` is below this.
const PHI_ONE_CUTOFF: f64 = 1e-6;
/// Direct summation when `(1 - phi) * (k + 1)` is below this.
const CANCELLATION_CUTOFF: f64 = 1e-2;

pub(crate) fn check_phi(phi: f64) -> Result<()> {
    if (0.0..=1.0).contains(&phi) {
        Ok(())
    } else {
        Err(Error::domain(format!("phi = {phi} outside [0, 1]")))
    }
}

/// `1 - phi^n` for `phi ∈ (0, 1)`, accurate near `phi = 1`.
fn one_minus_pow(phi: f64, n: f64) -> f64 {
    -((phi - 1.0).ln_1p() * n).exp_m1()
}

/// `Σ_{j=0..k} phi^j`.
pub fn tg_partition(phi: f64, k: usize) -> Result<f64> {
    check_phi(phi)?;
    Ok(partition_unchecked(phi, k))
}

fn partition_unchecked(phi: f64, k: usize) -> f64 {
    if phi == 0.0 {
        1.0
    } else if phi == 1.0 {
        (k + 1) as f64
    } else {
        one_minus_pow(phi, (k + 1) as f64) / (1.0 - phi)
    }
}

/// `ln Σ_{j=0..k} phi^j`.
pub fn tg_log_partition(phi: f64, k: usize) -> Result<f64> {
    Ok(tg_partition(phi, k)?.ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedGeometric {
    phi: f64,
    k: usize,
}

impl TruncatedGeometric {
    pub fn new(phi: f64, k: usize) -> Result<Self> {
        check_phi(phi)?;
        Ok(Self { phi, k })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn partition(&self) -> f64 {
        partition_unchecked(self.phi, self.k)
    }

    /// Probability of `i`; zero outside `{0, ..., k}`. Uses `0^0 = 1`.
    pub fn pmf(&self, i: usize) -> f64 {
        if i > self.k {
            return 0.0;
        }
        if self.phi == 0.0 {
            return if i == 0 { 1.0 } else { 0.0 };
        }
        self.phi.powi(i as i32) / self.partition()
    }

    /// Natural log of [`pmf`](Self::pmf); `-inf` where the mass is zero.
    pub fn ln_pmf(&self, i: usize) -> f64 {
        if i > self.k {
            return f64::NEG_INFINITY;
        }
        if i == 0 {
            return -self.partition().ln();
        }
        if self.phi == 0.0 {
            return f64::NEG_INFINITY;
        }
        i as f64 * self.phi.ln() - self.partition().ln()
    }

    /// The whole pmf as a vector of length `k + 1`.
    pub fn pmf_vec(&self) -> Vec<f64> {
        (0..=self.k).map(|i| self.pmf(i)).collect()
    }

    /// `P(Z ≤ i)`, evaluated in closed form so it is monotone and reaches
    /// exactly 1 at `i = k`.
    pub fn cdf(&self, i: usize) -> f64 {
        if i >= self.k {
            return 1.0;
        }
        let (phi, k) = (self.phi, self.k);
        if phi == 0.0 {
            1.0
        } else if phi == 1.0 {
            (i + 1) as f64 / (k + 1) as f64
        } else {
            let lnphi = (phi - 1.0).ln_1p();
            (lnphi * (i + 1) as f64).exp_m1() / (lnphi * (k + 1) as f64).exp_m1()
        }
    }

    fn use_direct(&self) -> bool {
        let gap = 1.0 - self.phi;
        self.phi < PHI_ZERO_CUTOFF
            || gap < PHI_ONE_CUTOFF
            || gap * ((self.k + 1) as f64) < CANCELLATION_CUTOFF
    }

    pub fn mean(&self) -> f64 {
        if self.k == 0 || self.phi == 0.0 {
            return 0.0;
        }
        if self.phi == 1.0 {
            return self.k as f64 / 2.0;
        }
        if self.use_direct() {
            return self.mean_direct();
        }
        let (phi, kp1) = (self.phi, (self.k + 1) as f64);
        let tail = (phi.ln() * kp1).exp();
        let mean = phi / (1.0 - phi) - kp1 * tail / one_minus_pow(phi, kp1);
        mean.clamp(0.0, self.k as f64)
    }

    pub fn variance(&self) -> f64 {
        if self.k == 0 || self.phi == 0.0 {
            return 0.0;
        }
        if self.phi == 1.0 {
            let k = self.k as f64;
            return k * (k + 2.0) / 12.0;
        }
        if self.use_direct() {
            return self.variance_direct();
        }
        let (phi, kp1) = (self.phi, (self.k + 1) as f64);
        let tail = (phi.ln() * kp1).exp();
        let denom = one_minus_pow(phi, kp1);
        let var = phi / ((1.0 - phi) * (1.0 - phi)) - kp1 * kp1 * tail / (denom * denom);
        var.max(0.0)
    }

    /// Mean by summing over the support.
    pub fn mean_direct(&self) -> f64 {
        let pmf = self.pmf_vec();
        stable_sum(pmf.iter().enumerate().map(|(i, p)| i as f64 * p))
    }

    /// Variance by summing over the support.
    pub fn variance_direct(&self) -> f64 {
        let pmf = self.pmf_vec();
        let mean = stable_sum(pmf.iter().enumerate().map(|(i, p)| i as f64 * p));
        stable_sum(pmf.iter().enumerate().map(|(i, p)| {
            let d = i as f64 - mean;
            d * d * p
        }))
    }

    /// Mean absolute deviation `E|Z - E Z|`, by direct summation.
    pub fn mad(&self) -> f64 {
        let mean = self.mean();
        stable_sum((0..=self.k).map(|i| (i as f64 - mean).abs() * self.pmf(i)))
    }

    /// Exact inverse-CDF draw: the smallest `i` with `cdf(i) > u`, located by
    /// inverting the closed-form cdf and then correcting against it.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.k == 0 || self.phi == 0.0 {
            return 0;
        }
        let u: f64 = rng.random();
        let k = self.k;
        let mut i = if self.phi == 1.0 {
            ((u * (k + 1) as f64) as usize).min(k)
        } else {
            let lnphi = (self.phi - 1.0).ln_1p();
            let total = (lnphi * (k + 1) as f64).exp_m1();
            let x = (u * total).ln_1p() / lnphi;
            if x.is_finite() && x > 0.0 {
                (x.floor() as usize).min(k)
            } else {
                0
            }
        };
        while i > 0 && self.cdf(i - 1) > u {
            i -= 1;
        }
        while i < k && self.cdf(i) <= u {
            i += 1;
        }
        i
    }
}
