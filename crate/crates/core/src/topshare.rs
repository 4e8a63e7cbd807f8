//! Weighted top-share estimation.
//!
//! The estimator works on order statistics of a weighted sample: with
//! cumulative weight m = k·N locating the boundary of the bottom 100k
//! percent, the bottom share is bracketed between the shares of the largest
//! j★ and j★+1 order statistics and resolved by linear interpolation in the
//! boundary observation's weight. The top share is its complement.
//!
//! Negative values are permitted (net wealth can be negative), in which case
//! the estimate may exceed one; it is reported as computed, never clamped.

use serde::{Deserialize, Serialize};

use crate::microdata::{ImplicateView, MicrodataSet};
use crate::numeric::{cmean, CompensatedSum};
use crate::ErrorClass;

/// The fractile set reported by default: top 10% down to top 0.01%.
pub const DEFAULT_K_SET: [f64; 6] = [0.9, 0.95, 0.99, 0.995, 0.999, 0.9999];

#[derive(Debug, thiserror::Error)]
pub enum ShareError {
    #[error("k must lie in (0, 1), got {0}")]
    InvalidK(f64),
    #[error("values must be finite (index {0})")]
    NonfiniteValue(usize),
    #[error("weights must be positive and finite (index {0})")]
    InvalidWeight(usize),
    #[error("values and weights have different lengths ({values} vs {weights})")]
    LengthMismatch { values: usize, weights: usize },
    #[error("empty sample")]
    Empty,
    #[error("total weighted value is zero; share undefined")]
    UndefinedShare,
    #[error("k = {k} leaves no upper observation (boundary index = n = {n}, N = {population})")]
    Boundary { k: f64, n: usize, population: f64 },
    #[error("no implicate estimates supplied")]
    NoImplicates,
    #[error("microdata: {0}")]
    Microdata(#[from] crate::microdata::MicrodataError),
}

impl ShareError {
    pub fn class(&self) -> ErrorClass {
        ErrorClass::Validation
    }
}

/// What to estimate: a named variable and the bottom-fraction k.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShareQuery {
    pub variable: String,
    pub k: f64,
}

impl ShareQuery {
    pub fn new(variable: &str, k: f64) -> Self {
        Self {
            variable: variable.to_string(),
            k,
        }
    }
}

/// A top-share estimate with its uncertainty decomposition.
///
/// `sigma1`/`sigma2`/`sigma` stay `None` until the bootstrap and imputation
/// stages fill them in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShareEstimate {
    pub variable: String,
    pub k: f64,
    pub point: f64,
    pub per_implicate: Vec<f64>,
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    pub sigma: Option<f64>,
    pub n: usize,
    #[serde(rename = "N")]
    pub population_total: f64,
    #[serde(rename = "M")]
    pub implicate_count: u16,
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub replicate_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_id: Option<String>,
}

/// A sample pre-sorted by (value, id), ready for repeated share evaluation.
///
/// Bootstrap sweeps re-evaluate the estimator under integer reweightings of
/// the same observations; sorting once and streaming multiplicities makes a
/// replicate evaluation O(n) instead of O(n log n).
#[derive(Debug, Clone)]
pub struct ShareEvaluator {
    /// Indices into the base arrays, ascending by (value, id).
    order: Vec<u32>,
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl ShareEvaluator {
    pub fn new(values: &[f64], weights: &[f64], ids: &[u64]) -> Result<Self, ShareError> {
        if values.len() != weights.len() {
            return Err(ShareError::LengthMismatch {
                values: values.len(),
                weights: weights.len(),
            });
        }
        if values.is_empty() {
            return Err(ShareError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ShareError::NonfiniteValue(i));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(ShareError::InvalidWeight(i));
        }

        let mut order: Vec<u32> = (0..values.len() as u32).collect();
        // Stable ordering under ties: sort by (value, id) so the boundary
        // index is deterministic; interpolation keeps the estimate itself
        // tie-robust.
        order.sort_by(|&a, &b| {
            let (va, vb) = (values[a as usize], values[b as usize]);
            va.partial_cmp(&vb)
                .expect("finite")
                .then_with(|| ids[a as usize].cmp(&ids[b as usize]))
        });

        Ok(Self {
            order,
            values: values.to_vec(),
            weights: weights.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Top share of the base sample.
    pub fn estimate(&self, k: f64) -> Result<f64, ShareError> {
        self.estimate_scaled(k, |_| 1.0)
    }

    /// Top share with observation `i` counted `counts[i]` times.
    ///
    /// Zero counts drop observations; this is how bootstrap replicates are
    /// evaluated without materializing resampled arrays.
    pub fn estimate_with_counts(&self, counts: &[u32], k: f64) -> Result<f64, ShareError> {
        debug_assert_eq!(counts.len(), self.values.len());
        self.estimate_scaled(k, |i| counts[i] as f64)
    }

    fn estimate_scaled<F: Fn(usize) -> f64>(&self, k: f64, multiplier: F) -> Result<f64, ShareError> {
        if !(k > 0.0 && k < 1.0) {
            return Err(ShareError::InvalidK(k));
        }

        // Pass 1: N and the total weighted value.
        let mut total_weight = CompensatedSum::new();
        let mut total_value = CompensatedSum::new();
        let mut n_effective = 0usize;
        for &idx in &self.order {
            let i = idx as usize;
            let m = multiplier(i);
            if m == 0.0 {
                continue;
            }
            n_effective += 1;
            let w = self.weights[i] * m;
            total_weight.add(w);
            total_value.add(w * self.values[i]);
        }
        if n_effective == 0 {
            return Err(ShareError::Empty);
        }
        let population = total_weight.value();
        let denominator = total_value.value();
        if denominator == 0.0 {
            return Err(ShareError::UndefinedShare);
        }

        let boundary_mass = k * population;

        // Pass 2: cumulative weight up the order statistics to the boundary.
        let mut cum_weight = CompensatedSum::new();
        let mut cum_value = CompensatedSum::new();
        for &idx in &self.order {
            let i = idx as usize;
            let m = multiplier(i);
            if m == 0.0 {
                continue;
            }
            let w = self.weights[i] * m;
            let below = cum_weight.value();
            if below + w >= boundary_mass {
                // This observation is the (j★+1)th order statistic.
                let omega = (boundary_mass - below) / w;
                let lower = cum_value.value() / denominator;
                let upper = (cum_value.value() + w * self.values[i]) / denominator;
                let bottom = lower + omega * (upper - lower);
                return Ok(1.0 - bottom);
            }
            cum_weight.add(w);
            cum_value.add(w * self.values[i]);
        }

        // Unreachable for k < 1 except through rounding at the very top.
        Err(ShareError::Boundary {
            k,
            n: n_effective,
            population,
        })
    }
}

/// Estimate the top share of one weighted sample.
pub fn estimate_top_share(values: &[f64], weights: &[f64], k: f64) -> Result<f64, ShareError> {
    let ids: Vec<u64> = (0..values.len() as u64).collect();
    ShareEvaluator::new(values, weights, &ids)?.estimate(k)
}

/// Estimate the top share of one implicate view.
pub fn estimate_view(view: &ImplicateView<'_>, query: &ShareQuery) -> Result<f64, ShareError> {
    let values = view.values(&query.variable)?;
    ShareEvaluator::new(values, view.weights(), view.ids())?.estimate(query.k)
}

/// Grand estimate across implicates: the arithmetic mean of the per-implicate
/// estimates.
pub fn grand_estimate(per_implicate: &[f64]) -> Result<f64, ShareError> {
    cmean(per_implicate).ok_or(ShareError::NoImplicates)
}

/// Per-implicate estimates and their grand mean for a full dataset.
///
/// Uncertainty fields are left unset; the uncertainty module fills them.
pub fn estimate_for_set(set: &MicrodataSet, query: &ShareQuery) -> Result<ShareEstimate, ShareError> {
    let per_implicate: Vec<f64> = set
        .implicates()
        .map(|view| estimate_view(&view, query))
        .collect::<Result<_, _>>()?;
    let point = grand_estimate(&per_implicate)?;
    Ok(ShareEstimate {
        variable: query.variable.clone(),
        k: query.k,
        point,
        per_implicate,
        sigma1: None,
        sigma2: None,
        sigma: None,
        n: set.sample_size(),
        population_total: set.population_total(),
        implicate_count: set.implicate_count(),
        replicate_count: None,
        dataset_id: None,
    })
}
