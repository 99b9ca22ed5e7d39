//! Statistical primitives shared by the analyses.
//!
//! Every stochastic step draws from an [`RngPolicy`]: resample `i` uses the
//! ChaCha stream `i` of the master seed, so results do not depend on how
//! many worker threads run the resamples or in which order they finish.

mod bootstrap;
mod hypothesis;
mod logistic;
mod panel;

pub use bootstrap::{bootstrap_ci, percentile};
pub use hypothesis::{binomial_test, paired_t, pearson, welch_t};
pub use logistic::{logistic_demeaned, LogisticFit};
pub use panel::{fe_lpm, FeLpmFit, PanelObs};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 5000;
pub const SIGNIFICANCE: f64 = 0.05;

/// A point estimate with an interval and a two-sided p-value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: String,
    /// Test statistic behind `p_value`, when there is one (t, z).
    pub statistic: Option<f64>,
}

impl Estimate {
    pub fn is_significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }

    /// Conventional star rating: `***` p<0.001, `**` p<0.01, `*` p<0.05, else `ns`.
    pub fn stars(&self) -> &'static str {
        match self.p_value {
            p if p < 0.001 => "***",
            p if p < 0.01 => "**",
            p if p < 0.05 => "*",
            _ => "ns",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngPolicy {
    pub master_seed: u64,
}

impl RngPolicy {
    pub fn new(master_seed: u64) -> Self {
        RngPolicy { master_seed }
    }

    /// Generator for substream `index`; a pure function of (seed, index).
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(index);
        rng
    }

    /// A child policy keyed by a stable label, so each analysis gets its
    /// own streams under one invocation seed.
    pub fn derive(&self, label: &str) -> RngPolicy {
        let mut h = Sha256::new();
        h.update(self.master_seed.to_le_bytes());
        h.update(label.as_bytes());
        let digest = h.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        RngPolicy {
            master_seed: u64::from_le_bytes(bytes),
        }
    }
}

/// Bootstrap settings: resample count, seed, and worker threads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resampler {
    pub resamples: usize,
    pub rng: RngPolicy,
    pub workers: usize,
}

impl Default for Resampler {
    fn default() -> Self {
        Resampler {
            resamples: DEFAULT_RESAMPLES,
            rng: RngPolicy::new(0),
            workers: 1,
        }
    }
}

impl Resampler {
    pub fn new(resamples: usize, seed: u64) -> Self {
        Resampler {
            resamples,
            rng: RngPolicy::new(seed),
            workers: 1,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn derive(&self, label: &str) -> Resampler {
        Resampler {
            rng: self.rng.derive(label),
            ..*self
        }
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (n - 1 denominator).
pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        0.0
    } else {
        sample_variance(xs).sqrt()
    }
}

fn all_identical(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] == w[1])
}

pub(crate) fn require_n(n: usize, required: usize, what: &str) -> Result<()> {
    if n < required {
        return Err(Error::NoEligible(format!(
            "{what}: {n} observations, need at least {required}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_pure_functions_of_seed_and_index() {
        let p = RngPolicy::new(7);
        let a: u64 = p.stream(3).random();
        let b: u64 = p.stream(3).random();
        let c: u64 = p.stream(4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(p.derive("x"), p.derive("y"));
        assert_eq!(p.derive("x"), RngPolicy::new(7).derive("x"));
    }

    #[test]
    fn stars() {
        let mut e = Estimate {
            point: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
            p_value: 0.0005,
            n: 1,
            method: String::new(),
            statistic: None,
        };
        assert_eq!(e.stars(), "***");
        e.p_value = 0.043;
        assert_eq!(e.stars(), "*");
        e.p_value = 0.74;
        assert_eq!(e.stars(), "ns");
    }
}
