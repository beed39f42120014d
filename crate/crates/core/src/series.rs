//! Firing-rate time series and their pairwise comparison.

use crate::error::{Error, Result};
use crate::stimulus::interpolate_clamped;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FiringRateSeries {
    pub times: Vec<f64>,
    pub rates: Vec<f64>,
}

/// Relative discrepancies of a series against a reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrepancy {
    pub l1_rel: f64,
    pub linf_rel: f64,
}

/// Index of the half-open bin `[k·width, (k+1)·width)` holding `x`, tolerant to
/// round-off for values lying on a bin edge.
pub fn bin_index(x: f64, width: f64) -> usize {
    (x / width + 1e-9).floor().max(0.0) as usize
}

impl FiringRateSeries {
    pub fn new(times: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if times.len() != rates.len() {
            return Err(Error::Dimension {
                expected: times.len(),
                got: rates.len(),
            });
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("series times must be strictly increasing".into()));
        }
        if rates.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::Config("firing rates must be nonnegative".into()));
        }
        Ok(Self { times, rates })
    }

    pub fn push(&mut self, t: f64, r: f64) {
        self.times.push(t);
        self.rates.push(r);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Drop the first `n` samples.
    pub fn skip(&self, n: usize) -> Self {
        Self {
            times: self.times.iter().skip(n).copied().collect(),
            rates: self.rates.iter().skip(n).copied().collect(),
        }
    }

    /// Bin averages of a per-step rate series (each sample is the mean rate over
    /// the step of length `step` ending at its time stamp). Bin `k` covers
    /// `[k·bin, (k+1)·bin)` and is labelled by its centre.
    pub fn bin_average(&self, step: f64, bin: f64, horizon: f64) -> Self {
        let n_bins = bin_index(horizon, bin).max(1);
        let mut acc = vec![0.0; n_bins];
        for (&t, &r) in self.times.iter().zip(&self.rates) {
            let k = bin_index(t, bin);
            if k < n_bins {
                acc[k] += r * step;
            }
        }
        Self {
            times: (0..n_bins).map(|k| (k as f64 + 0.5) * bin).collect(),
            rates: acc.into_iter().map(|m| m / bin).collect(),
        }
    }

    pub fn mean_rate(&self) -> f64 {
        if self.rates.is_empty() {
            return 0.0;
        }
        self.rates.iter().sum::<f64>() / self.rates.len() as f64
    }

    fn same_grid(&self, other: &Self) -> bool {
        self.times.len() == other.times.len()
            && self
                .times
                .iter()
                .zip(&other.times)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
    }

    /// Values of this series at `times` (linear interpolation, clamped ends).
    pub fn resample(&self, times: &[f64]) -> Vec<f64> {
        let pairs: Vec<(f64, f64)> = self
            .times
            .iter()
            .copied()
            .zip(self.rates.iter().copied())
            .collect();
        times.iter().map(|&t| interpolate_clamped(&pairs, t)).collect()
    }
}

/// Relative L1 and L∞ discrepancy of `y` against the reference `x`.
/// `y` is linearly resampled onto the time grid of `x` when the grids differ.
pub fn compare_series(x: &FiringRateSeries, y: &FiringRateSeries) -> Result<Discrepancy> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty("firing-rate series"));
    }
    let y_vals = if x.same_grid(y) {
        y.rates.clone()
    } else {
        y.resample(&x.times)
    };
    let (mut l1, mut linf, mut n1, mut ninf) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (a, b) in x.rates.iter().zip(&y_vals) {
        let d = (a - b).abs();
        l1 += d;
        linf = linf.max(d);
        n1 += a.abs();
        ninf = ninf.max(a.abs());
    }
    let rel = |num: f64, den: f64| {
        if den > 0.0 {
            num / den
        } else if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    Ok(Discrepancy {
        l1_rel: rel(l1, n1),
        linf_rel: rel(linf, ninf),
    })
}
