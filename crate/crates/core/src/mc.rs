//! Replication driver and Monte Carlo summaries.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{domain, Result};

/// How replications are scheduled. Both modes produce bit-identical results;
/// without the `parallel` feature `Parallel` runs sequentially.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

/// Replications per work item. Fixed, so that the merge order of partial
/// accumulators is independent of the thread count.
pub(crate) const BATCH: u64 = 128;

/// Runs `work` over consecutive replication ranges and returns the partial
/// results in range order.
pub(crate) fn run_batched<T, F>(reps: u64, exec: Execution, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<u64>) -> T + Sync + Send,
{
    let batches = reps.div_ceil(BATCH);
    let range = move |b: u64| b * BATCH..((b + 1) * BATCH).min(reps);
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..batches).into_par_iter().map(|b| work(range(b))).collect()
        }
        _ => (0..batches).map(|b| work(range(b))).collect(),
    }
}

/// Maps `f` over `items`, in parallel unless `exec` is `Sequential`.
pub(crate) fn map_items<T, U, F>(items: &[T], exec: Execution, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Streaming mean/variance (Welford, with Chan's pairwise merge).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    mean: f64,
    m2: f64,
    max_abs: f64,
    non_finite: bool,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        if !x.is_finite() {
            self.non_finite = true;
            return;
        }
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
        self.max_abs = self.max_abs.max(x.abs());
    }

    pub fn merge(&mut self, o: &Moments) {
        self.non_finite |= o.non_finite;
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * (self.n as f64 * o.n as f64 / n as f64);
        self.max_abs = self.max_abs.max(o.max_abs);
        self.n = n;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Heavy-tail warning: a non-finite sample, or one sample carrying more
    /// than a quarter of the total second moment.
    pub fn looks_divergent(&self) -> bool {
        if self.non_finite {
            return true;
        }
        let second = self.m2 + self.n as f64 * self.mean * self.mean;
        self.n >= 100 && second > 0.0 && self.max_abs * self.max_abs > 0.25 * second
    }
}

/// Two-sided normal quantile for a confidence level, e.g. 1.96 for 0.95.
pub fn z_value(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(domain(format!("confidence level must be in (0,1), got {confidence}")));
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(std.inverse_cdf(0.5 + 0.5 * confidence))
}

/// Monte Carlo estimate with a normal-approximation confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateCI {
    pub mean: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_effective: u64,
    pub n_censored: u64,
    pub seed: u64,
}

impl EstimateCI {
    /// Estimate of `scale * E[X]` from moments of `X`.
    pub fn from_moments(m: &Moments, scale: f64, n_censored: u64, seed: u64, z: f64) -> Self {
        let mean = scale * m.mean();
        let std_err = if m.n > 0 {
            scale.abs() * (m.variance() / m.n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self {
            mean,
            std_err,
            ci_low: mean - z * std_err,
            ci_high: mean + z * std_err,
            n_effective: m.n,
            n_censored,
            seed,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }

    pub fn overlaps(&self, other: &EstimateCI) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }

    /// `|x - mean|` in units of the standard error.
    pub fn z_score(&self, x: f64) -> f64 {
        (x - self.mean).abs() / self.std_err
    }
}
