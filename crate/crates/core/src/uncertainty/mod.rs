//! Uncertainty quantification for weighted survey estimates.
//!
//! Sampling error comes from cluster-stratified bootstrap replicates: strata
//! are grouped into clusters by Gower dissimilarity with PAM, the cluster
//! count is chosen by silhouette analysis, and each replicate redraws every
//! cluster's observations with replacement. Imputation error is the spread
//! across multiply-imputed copies, and the two combine through Rubin's
//! variance estimator.

mod pam;
mod replicates;

pub use pam::{
    default_candidate_range, gower_distance, pam_cluster, select_cluster_count, silhouette_width,
    ClusterAssignment, ClusterSelection,
};
pub use replicates::{make_replicates, ClusteredSample, ReplicateSet};

use serde::{Deserialize, Serialize};

use crate::microdata::{MicrodataSet, StratumProfile};
use crate::numeric::{cmean, csum, percentile_sorted, z_multiplier};
use crate::topshare::{self, ShareEstimate, ShareQuery};
use crate::ErrorClass;

/// Clusters smaller than this trigger a warning: resampling cells this thin
/// is exactly what the clustering step is supposed to prevent.
pub const MIN_CLUSTER_SIZE: usize = 30;

#[derive(Debug, thiserror::Error)]
pub enum UncertaintyError {
    #[error("need at least {needed} estimates, got {got}")]
    TooFewEstimates { needed: usize, got: usize },
    #[error("grand estimate {grand} does not match implicate mean {mean} (beyond 1e-9)")]
    GrandMismatch { grand: f64, mean: f64 },
    #[error("standard errors must be nonnegative and finite, got {0}")]
    InvalidSigma(f64),
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("ordinal rank {rank} outside 1..={range}")]
    RankOutOfRange { rank: u32, range: u32 },
    #[error("ordinal range must be at least 2, got {0}")]
    OrdinalRangeTooSmall(u32),
    #[error("cluster count {requested} exceeds number of strata {strata}")]
    TooManyClusters { requested: usize, strata: usize },
    #[error("need at least {needed} strata for cluster selection, got {got}")]
    TooFewStrata { needed: usize, got: usize },
    #[error("cluster {0} has no observations")]
    EmptyCluster(usize),
    #[error("stratum {0} appears in the sample but not in the cluster assignment")]
    UnassignedStratum(u32),
    #[error("dataset is not stratified; cluster-stratified bootstrap requires stratum labels")]
    NotStratified,
    #[error("sampling share undefined: combined error is zero")]
    ZeroCombinedError,
    #[error("share estimation failed: {0}")]
    Share(#[from] crate::topshare::ShareError),
}

impl UncertaintyError {
    pub fn class(&self) -> ErrorClass {
        ErrorClass::Validation
    }
}

/// Sampling error: the sample standard deviation of replicate estimates,
/// with an L−1 denominator.
pub fn sampling_error(replicate_estimates: &[f64]) -> Result<f64, UncertaintyError> {
    let l = replicate_estimates.len();
    if l < 2 {
        return Err(UncertaintyError::TooFewEstimates { needed: 2, got: l });
    }
    // Shift by the first estimate before averaging: identical inputs then
    // produce exactly zero, and the subtraction is well conditioned.
    let origin = replicate_estimates[0];
    let mean = cmean(&replicate_estimates.iter().map(|&x| x - origin).collect::<Vec<_>>())
        .expect("nonempty");
    let ss = csum(
        replicate_estimates
            .iter()
            .map(|&x| (x - origin - mean) * (x - origin - mean)),
    );
    Ok((ss / (l as f64 - 1.0)).sqrt())
}

/// Imputation error: the spread of per-implicate estimates around the grand
/// estimate, with an M−1 denominator.
///
/// With a single implicate the between-imputation spread is zero by
/// convention; callers surface that as a warning where it matters.
pub fn imputation_error(
    implicate_estimates: &[f64],
    grand: f64,
) -> Result<f64, UncertaintyError> {
    let m = implicate_estimates.len();
    if m == 0 {
        return Err(UncertaintyError::TooFewEstimates { needed: 1, got: 0 });
    }
    let mean = cmean(implicate_estimates).expect("nonempty");
    if (grand - mean).abs() > 1e-9 * grand.abs().max(1.0) {
        return Err(UncertaintyError::GrandMismatch { grand, mean });
    }
    if m == 1 {
        return Ok(0.0);
    }
    let ss = csum(
        implicate_estimates
            .iter()
            .map(|&x| (x - grand) * (x - grand)),
    );
    Ok((ss / (m as f64 - 1.0)).sqrt())
}

/// Rubin's combined standard error: σ̂ = √(σ̂₁² + σ̂₂²(1 + 1/M)).
pub fn combined_error(sigma1: f64, sigma2: f64, m: u16) -> Result<f64, UncertaintyError> {
    for s in [sigma1, sigma2] {
        if !(s.is_finite() && s >= 0.0) {
            return Err(UncertaintyError::InvalidSigma(s));
        }
    }
    if m == 0 {
        return Err(UncertaintyError::TooFewEstimates { needed: 1, got: 0 });
    }
    if sigma2 == 0.0 {
        // Exact, not just up to sqrt(x²) rounding.
        return Ok(sigma1);
    }
    Ok((sigma1 * sigma1 + sigma2 * sigma2 * (1.0 + 1.0 / m as f64)).sqrt())
}

/// Normal-approximation confidence interval around a point estimate.
pub fn confidence_interval(
    point: f64,
    sigma: f64,
    level: f64,
) -> Result<(f64, f64), UncertaintyError> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(UncertaintyError::InvalidSigma(sigma));
    }
    let z = z_multiplier(level).ok_or(UncertaintyError::InvalidLevel(level))?;
    Ok((point - z * sigma, point + z * sigma))
}

/// Share of the combined standard error attributable to sampling, in percent
/// (the decomposition reported per year and fractile).
pub fn sampling_share_percent(sigma1: f64, sigma: f64) -> Result<f64, UncertaintyError> {
    if !(sigma > 0.0) {
        return Err(UncertaintyError::ZeroCombinedError);
    }
    Ok(100.0 * sigma1 / sigma)
}

/// Options for the full bootstrap pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapOptions {
    /// Number of replicates L.
    pub replicates: usize,
    /// Confidence level for the reported interval.
    pub level: f64,
    /// Also report the percentile-bootstrap interval (sensitivity check).
    pub percentile_ci: bool,
    /// Ordinal range R of the income-bracket rank.
    pub ordinal_range: u32,
    /// Candidate cluster counts; `None` uses 2..=min(40, J−1).
    pub candidate_clusters: Option<(usize, usize)>,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replicates: 999,
            level: 0.95,
            percentile_ci: false,
            ordinal_range: 16,
            candidate_clusters: None,
        }
    }
}

/// Everything the bootstrap pipeline produces for one query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub estimate: ShareEstimate,
    pub ci_lower: f64,
    pub ci_upper: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percentile_ci: Option<(f64, f64)>,
    pub replicate_mean: f64,
    pub sampling_share_percent: Option<f64>,
    pub clustering: ClusterSelection,
    pub warnings: Vec<String>,
}

/// Run the whole uncertainty pipeline for one share query:
/// cluster strata, draw L replicates, estimate σ̂₁ on the first implicate,
/// estimate σ̂₂ across implicates, combine, and build the interval.
///
/// Replicate evaluation is embarrassingly parallel; per-replicate sub-seeds
/// make the result independent of worker count and evaluation order.
pub fn bootstrap_share(
    set: &MicrodataSet,
    profiles: &[StratumProfile],
    query: &ShareQuery,
    options: &BootstrapOptions,
    seed: u64,
) -> Result<BootstrapReport, UncertaintyError> {
    use rayon::prelude::*;

    let mut warnings = Vec::new();

    // Clustering over the strata actually present in the sample.
    let view = set.implicate(1).map_err(crate::topshare::ShareError::from)?;
    let strata_labels = view.strata().ok_or(UncertaintyError::NotStratified)?;
    let mut present: Vec<StratumProfile> = profiles
        .iter()
        .filter(|p| strata_labels.contains(&p.stratum_id))
        .cloned()
        .collect();
    for p in &mut present {
        p.size = strata_labels.iter().filter(|&&s| s == p.stratum_id).count();
    }
    for &label in strata_labels {
        if !present.iter().any(|p| p.stratum_id == label) {
            return Err(UncertaintyError::UnassignedStratum(label));
        }
    }

    let selection = if present.len() < 3 {
        // Too few strata to select a cluster count; one cluster per stratum.
        let assignment = pam_cluster(&present, present.len(), options.ordinal_range, seed)?;
        warnings.push(format!(
            "only {} strata; skipped silhouette selection",
            present.len()
        ));
        ClusterSelection {
            assignment,
            silhouette_by_j: Vec::new(),
            warnings: Vec::new(),
        }
    } else {
        let range = options
            .candidate_clusters
            .map(|(lo, hi)| lo..=hi)
            .unwrap_or_else(|| default_candidate_range(present.len()));
        select_cluster_count(&present, range, options.ordinal_range)?
    };
    warnings.extend(selection.warnings.iter().cloned());

    let clustered = ClusteredSample::new(&view, &selection.assignment)?;
    for (j, members) in clustered.clusters().iter().enumerate() {
        if members.len() < MIN_CLUSTER_SIZE {
            warnings.push(format!(
                "cluster {j} has only {} observations (< {MIN_CLUSTER_SIZE})",
                members.len()
            ));
        }
    }

    // σ̂₁ from replicates on the first implicate.
    let values = view.values(&query.variable).map_err(crate::topshare::ShareError::from)?;
    let evaluator = topshare::ShareEvaluator::new(values, view.weights(), view.ids())?;
    let replicate_estimates: Vec<f64> = (1..=options.replicates as u64)
        .into_par_iter()
        .map(|l| {
            let mut counts = vec![0u32; view.len()];
            clustered.fill_replicate_counts(l, seed, &mut counts);
            evaluator.estimate_with_counts(&counts, query.k)
        })
        .collect::<Result<_, _>>()?;
    let sigma1 = sampling_error(&replicate_estimates)?;
    let replicate_mean = cmean(&replicate_estimates).expect("nonempty");

    // Point estimate and σ̂₂ across implicates.
    let mut estimate = topshare::estimate_for_set(set, query)?;
    if set.implicate_count() == 1 {
        warnings.push("single implicate: imputation error is zero by convention".into());
    }
    let sigma2 = imputation_error(&estimate.per_implicate, estimate.point)?;
    let sigma = combined_error(sigma1, sigma2, set.implicate_count())?;
    estimate.sigma1 = Some(sigma1);
    estimate.sigma2 = Some(sigma2);
    estimate.sigma = Some(sigma);
    estimate.replicate_count = Some(options.replicates);

    let (ci_lower, ci_upper) = confidence_interval(estimate.point, sigma, options.level)?;
    let percentile_ci = if options.percentile_ci {
        let mut sorted = replicate_estimates.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let tail = (1.0 - options.level) / 2.0;
        Some((
            percentile_sorted(&sorted, tail).expect("nonempty"),
            percentile_sorted(&sorted, 1.0 - tail).expect("nonempty"),
        ))
    } else {
        None
    };

    let sampling_share = if sigma > 0.0 {
        Some(100.0 * sigma1 / sigma)
    } else {
        None
    };

    Ok(BootstrapReport {
        estimate,
        ci_lower,
        ci_upper,
        percentile_ci,
        replicate_mean,
        sampling_share_percent: sampling_share,
        clustering: selection,
        warnings,
    })
}

/// Combined weighted-variance helper for reuse in reports: given replicate
/// estimates and per-implicate estimates, fill the σ fields of an estimate.
pub fn apply_rubin(
    estimate: &mut ShareEstimate,
    replicate_estimates: &[f64],
) -> Result<(), UncertaintyError> {
    let sigma1 = sampling_error(replicate_estimates)?;
    let sigma2 = imputation_error(&estimate.per_implicate, estimate.point)?;
    let sigma = combined_error(sigma1, sigma2, estimate.implicate_count)?;
    estimate.sigma1 = Some(sigma1);
    estimate.sigma2 = Some(sigma2);
    estimate.sigma = Some(sigma);
    estimate.replicate_count = Some(replicate_estimates.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_error_examples() {
        assert_eq!(sampling_error(&[0.4, 0.4, 0.4]).unwrap(), 0.0);
        let two_point = sampling_error(&[1.0, 3.0]).unwrap();
        assert!((two_point - 2.0_f64.sqrt()).abs() < 1e-12);
        assert!(sampling_error(&[1.0]).is_err());
    }

    #[test]
    fn sampling_error_standard_normal_band() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let draws: Vec<f64> = (0..999)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let sd = sampling_error(&draws).unwrap();
        assert!((0.9..=1.1).contains(&sd), "sd = {sd}");
    }

    #[test]
    fn imputation_error_examples() {
        assert_eq!(imputation_error(&[0.4; 5], 0.4).unwrap(), 0.0);
        let s2 = imputation_error(&[0.38, 0.40, 0.42, 0.40, 0.40], 0.40).unwrap();
        assert!((s2 - (0.0008f64 / 4.0).sqrt()).abs() < 1e-9, "s2 = {s2}");
        assert!((s2 - 0.014142).abs() < 1e-6);
        assert_eq!(imputation_error(&[0.37], 0.37).unwrap(), 0.0);
    }

    #[test]
    fn imputation_error_checks_consistency() {
        let err = imputation_error(&[0.38, 0.42], 0.5).unwrap_err();
        assert!(matches!(err, UncertaintyError::GrandMismatch { .. }));
    }

    #[test]
    fn combined_error_examples() {
        let s1_only = combined_error(0.03, 0.0, 5).unwrap();
        assert_eq!(s1_only, 0.03);
        let rubin = combined_error(0.03, 0.01, 5).unwrap();
        assert!((rubin - 0.001020f64.sqrt()).abs() < 1e-12);
        assert!((rubin - 0.031937).abs() < 1e-6);
    }

    #[test]
    fn combined_error_dominates_components() {
        for (s1, s2, m) in [(0.01, 0.02, 1), (0.5, 0.0, 7), (0.0, 0.3, 5), (1.0, 1.0, 2)] {
            let s = combined_error(s1, s2, m).unwrap();
            assert!(s >= s1 && s >= s2, "σ={s} vs σ1={s1}, σ2={s2}");
        }
    }

    #[test]
    fn confidence_interval_examples() {
        let (lo, hi) = confidence_interval(0.5, 0.0, 0.95).unwrap();
        assert_eq!((lo, hi), (0.5, 0.5));

        // η̂ = 0.39, SE = 0.023: the symmetric interval is ≈ [0.345, 0.435].
        let (lo, hi) = confidence_interval(0.39, 0.023, 0.95).unwrap();
        assert!((lo - 0.34492).abs() < 1e-4, "lo = {lo}");
        assert!((hi - 0.43508).abs() < 1e-4, "hi = {hi}");

        // η̂ = 0.39, SE = 0.001 ⇒ [0.388, 0.392].
        let (lo, hi) = confidence_interval(0.39, 0.001, 0.95).unwrap();
        assert!((lo - 0.388).abs() < 1e-4);
        assert!((hi - 0.392).abs() < 1e-4);

        assert!(confidence_interval(0.0, 0.1, 1.5).is_err());
    }

    #[test]
    fn decomposition_percent_format() {
        // Shape of the published decomposition: sampling / combined in percent.
        let pct = sampling_share_percent(0.0493, 0.1).unwrap();
        assert!((pct - 49.3).abs() < 1e-9);
        assert!(sampling_share_percent(0.1, 0.0).is_err());
    }
}
