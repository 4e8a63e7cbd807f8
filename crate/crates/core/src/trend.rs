//! Linear trend regression: weighted least squares with inverse-variance
//! weights (for series of estimates with per-year standard errors) and plain
//! OLS (for cross-dataset regressions of point estimates).
//!
//! The regressor is centered at its weighted mean before fitting and the
//! intercept transformed back, which keeps the normal equations well
//! conditioned for calendar-year regressors.

use serde::{Deserialize, Serialize};

use crate::numeric::{z_multiplier, CompensatedSum};
use crate::ErrorClass;

#[derive(Debug, thiserror::Error)]
pub enum TrendError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("standard error at index {index} is {value}; use ols_fit for unweighted data")]
    ZeroStandardError { index: usize, value: f64 },
    #[error("regressor is collinear (no variation in x)")]
    CollinearX,
    #[error("inputs have different lengths: {0}")]
    LengthMismatch(String),
    #[error("inputs must be finite (index {0})")]
    NonfiniteInput(usize),
    #[error("fitted value at x0 = {0} is zero; percent change undefined")]
    ZeroBaseline(f64),
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
}

impl TrendError {
    pub fn class(&self) -> ErrorClass {
        ErrorClass::Validation
    }
}

/// A fitted line with inference statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionResult {
    pub intercept: f64,
    pub slope: f64,
    pub se_intercept: f64,
    pub se_slope: f64,
    pub t_intercept: f64,
    pub t_slope: f64,
    pub r_squared: f64,
    pub n: usize,
    pub residual_df: usize,
    /// The weights used in the fit (all ones for OLS).
    pub weights: Vec<f64>,
    // Pieces needed for mean confidence bands.
    weighted_x_mean: f64,
    residual_variance: f64,
    sxx: f64,
    sum_weights: f64,
}

impl RegressionResult {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    /// Pointwise confidence interval for the fitted mean at `x`.
    pub fn mean_interval(&self, x: f64, level: f64) -> Result<(f64, f64), TrendError> {
        let z = z_multiplier(level).ok_or(TrendError::InvalidLevel(level))?;
        let var = self.residual_variance
            * (1.0 / self.sum_weights + (x - self.weighted_x_mean).powi(2) / self.sxx);
        let half = z * var.max(0.0).sqrt();
        let fitted = self.predict(x);
        Ok((fitted - half, fitted + half))
    }
}

/// One row of a fitted-trend export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedPoint {
    pub x: f64,
    pub fitted: f64,
    pub lower95: f64,
    pub upper95: f64,
}

/// Weighted least squares of `y` on a constant and `x`, weights 1/se².
pub fn wls_fit(x: &[f64], y: &[f64], se: &[f64]) -> Result<RegressionResult, TrendError> {
    if x.len() != y.len() || x.len() != se.len() {
        return Err(TrendError::LengthMismatch(format!(
            "x {} / y {} / se {}",
            x.len(),
            y.len(),
            se.len()
        )));
    }
    if let Some(index) = se.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(TrendError::ZeroStandardError {
            index,
            value: se[index],
        });
    }
    let weights: Vec<f64> = se.iter().map(|s| 1.0 / (s * s)).collect();
    fit_with_weights(x, y, weights)
}

/// Ordinary least squares: WLS with unit weights.
pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<RegressionResult, TrendError> {
    if x.len() != y.len() {
        return Err(TrendError::LengthMismatch(format!(
            "x {} / y {}",
            x.len(),
            y.len()
        )));
    }
    fit_with_weights(x, y, vec![1.0; x.len()])
}

fn fit_with_weights(x: &[f64], y: &[f64], weights: Vec<f64>) -> Result<RegressionResult, TrendError> {
    let n = x.len();
    if n < 3 {
        return Err(TrendError::TooFewPoints(n));
    }
    for (i, (&xi, &yi)) in x.iter().zip(y).enumerate() {
        if !xi.is_finite() || !yi.is_finite() {
            return Err(TrendError::NonfiniteInput(i));
        }
    }

    let sum_w = csum_by(&weights, |&w| w);
    let x_mean = weighted_mean(x, &weights, sum_w);
    let y_mean = weighted_mean(y, &weights, sum_w);

    let mut sxx = CompensatedSum::new();
    let mut sxy = CompensatedSum::new();
    let mut syy = CompensatedSum::new();
    for i in 0..n {
        let dx = x[i] - x_mean;
        let dy = y[i] - y_mean;
        sxx.add(weights[i] * dx * dx);
        sxy.add(weights[i] * dx * dy);
        syy.add(weights[i] * dy * dy);
    }
    let sxx = sxx.value();
    let syy = syy.value();
    if sxx <= 0.0 || !sxx.is_finite() {
        return Err(TrendError::CollinearX);
    }

    let slope = sxy.value() / sxx;
    let intercept = y_mean - slope * x_mean;

    let mut rss = CompensatedSum::new();
    for i in 0..n {
        let e = y[i] - intercept - slope * x[i];
        rss.add(weights[i] * e * e);
    }
    let rss = rss.value();
    let residual_df = n - 2;
    let residual_variance = rss / residual_df as f64;

    let se_slope = (residual_variance / sxx).sqrt();
    let se_intercept =
        (residual_variance * (1.0 / sum_w + x_mean * x_mean / sxx)).sqrt();

    let r_squared = if syy > 0.0 {
        (1.0 - rss / syy).clamp(0.0, 1.0)
    } else if rss <= f64::EPSILON {
        1.0
    } else {
        0.0
    };

    Ok(RegressionResult {
        intercept,
        slope,
        se_intercept,
        se_slope,
        t_intercept: safe_ratio(intercept, se_intercept),
        t_slope: safe_ratio(slope, se_slope),
        r_squared,
        n,
        residual_df,
        weights,
        weighted_x_mean: x_mean,
        residual_variance,
        sxx,
        sum_weights: sum_w,
    })
}

/// Percent change of the fitted value between `x0` and `x1`.
pub fn trend_percent_change(
    fit: &RegressionResult,
    x0: f64,
    x1: f64,
) -> Result<f64, TrendError> {
    let base = fit.predict(x0);
    if base == 0.0 {
        return Err(TrendError::ZeroBaseline(x0));
    }
    Ok(100.0 * (fit.predict(x1) - base) / base)
}

/// Fitted line with pointwise 95% bands over a grid of x values.
pub fn fitted_series(fit: &RegressionResult, xs: &[f64]) -> Result<Vec<FittedPoint>, TrendError> {
    xs.iter()
        .map(|&x| {
            let (lower95, upper95) = fit.mean_interval(x, 0.95)?;
            Ok(FittedPoint {
                x,
                fitted: fit.predict(x),
                lower95,
                upper95,
            })
        })
        .collect()
}

fn weighted_mean(values: &[f64], weights: &[f64], sum_w: f64) -> f64 {
    let mut acc = CompensatedSum::new();
    for (v, w) in values.iter().zip(weights) {
        acc.add(v * w);
    }
    acc.value() / sum_w
}

fn csum_by<T, F: Fn(&T) -> f64>(items: &[T], f: F) -> f64 {
    let mut acc = CompensatedSum::new();
    for item in items {
        acc.add(f(item));
    }
    acc.value()
}

fn safe_ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}
