//! Shared numeric utilities: compensated summation, stable seed derivation,
//! normal quantiles, and percentiles.

use statrs::distribution::{ContinuousCDF, Normal};

/// Two-sided 95% normal multiplier, `z_{0.975}`.
///
/// Fixed as a documented constant so that confidence intervals and envelope
/// draw bounds agree everywhere in the workspace.
pub const Z_975: f64 = 1.959964;

/// Normal quantile multiplier for a two-sided interval at `level`.
///
/// Returns [`Z_975`] exactly when `level == 0.95`; other levels go through the
/// inverse normal CDF. `level` must lie in (0, 1).
pub fn z_multiplier(level: f64) -> Option<f64> {
    if !(level > 0.0 && level < 1.0) {
        return None;
    }
    if level == 0.95 {
        return Some(Z_975);
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Some(normal.inverse_cdf(0.5 + level / 2.0))
}

/// Running Neumaier-compensated sum.
///
/// Keeps long weighted reductions (999-replicate sweeps, million-row
/// populations) deterministic to ~1 ulp regardless of magnitude ordering.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of an iterator of values.
pub fn csum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Compensated arithmetic mean. Returns `None` on an empty input.
pub fn cmean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(csum(values.iter().copied()) / values.len() as f64)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent sub-seed for task `index` of a run seeded with
/// `seed`.
///
/// Replicates, Monte Carlo draws, and other indexed stochastic tasks each get
/// their own generator seeded this way, so results are identical whether the
/// tasks run serially or in parallel, in any order.
pub fn subseed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

/// Linear-interpolation percentile of a sorted slice (the common "type 7"
/// convention). `p` is a fraction in [0, 1]. Returns `None` on empty input.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return Some(sorted[lo]);
    }
    let frac = pos - lo as f64;
    Some(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}
