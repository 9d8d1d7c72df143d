use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Poisson task arrivals per epoch, clamped at `truncation`: draws above
/// the cap count as exactly `truncation` tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrivalProcess {
    /// Mean arrivals per epoch.
    pub rate: f64,
    pub truncation: u32,
}

impl Default for ArrivalProcess {
    fn default() -> Self {
        Self {
            rate: 2.0,
            truncation: 20,
        }
    }
}

impl ArrivalProcess {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(Error::Config("arrival rate must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Probability of each count `0..=truncation`; the tail mass is folded
    /// into the last entry.
    pub fn pmf(&self) -> Vec<f64> {
        let cap = self.truncation as usize;
        let mut pmf = Vec::with_capacity(cap + 1);
        if self.rate == 0.0 {
            pmf.push(1.0);
            pmf.resize(cap + 1, 0.0);
            return pmf;
        }
        let mut p = (-self.rate).exp();
        let mut acc = 0.0;
        for k in 0..cap {
            pmf.push(p);
            acc += p;
            p *= self.rate / (k + 1) as f64;
        }
        pmf.push((1.0 - acc).max(0.0));
        pmf
    }

    /// Mean of the clamped distribution.
    pub fn mean(&self) -> f64 {
        self.pmf().iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn sampler(&self) -> ArrivalSampler {
        let mut cdf = self.pmf();
        let mut acc = 0.0;
        for c in cdf.iter_mut() {
            acc += *c;
            *c = acc;
        }
        ArrivalSampler { cdf }
    }
}

/// Inversion sampler over a precomputed CDF table.
#[derive(Debug, Clone)]
pub struct ArrivalSampler {
    cdf: Vec<f64>,
}

impl ArrivalSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.invert(rng.random())
    }

    /// Count whose CDF interval contains `u` in `[0, 1)`.
    pub fn invert(&self, u: f64) -> u32 {
        let last = self.cdf.len() - 1;
        self.cdf[..last].iter().position(|&c| u < c).unwrap_or(last) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_always_zero() {
        let s = ArrivalProcess { rate: 0.0, truncation: 20 }.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| s.sample(&mut rng) == 0));
    }

    #[test]
    fn pmf_sums_to_one() {
        for rate in [0.0, 0.3, 2.0, 7.5] {
            let p = ArrivalProcess { rate, truncation: 5 }.pmf();
            assert_eq!(p.len(), 6);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let s = ArrivalProcess::default().sampler();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200).map(|_| s.sample(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn empirical_mean_matches_truncated_poisson() {
        let a = ArrivalProcess { rate: 2.0, truncation: 20 };
        // Analytic mean by direct summation of the Poisson terms.
        let mut term = (-2.0f64).exp();
        let mut mean = 0.0;
        let mut below = 0.0;
        for k in 0..20u32 {
            mean += k as f64 * term;
            below += term;
            term *= 2.0 / (k + 1) as f64;
        }
        mean += 20.0 * (1.0 - below);
        let s = a.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 1_000_000;
        let total: u64 = (0..n).map(|_| s.sample(&mut rng) as u64).sum();
        let emp = total as f64 / n as f64;
        assert!((emp - mean).abs() / mean < 0.01, "empirical {emp} vs {mean}");
    }
}
