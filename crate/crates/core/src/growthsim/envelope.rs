//! Monte Carlo confidence envelopes over calibration-target uncertainty.
//!
//! The inequality index η is estimated from data with a standard error; the
//! model is recalibrated to B draws of η from its 95% confidence interval,
//! each draw's economy is shocked at the start year by a fixed increment to
//! the high-type drift, and the transition is solved to the end year. The
//! pointwise 2.5/50/97.5 percentile bands of the projected top share across
//! draws quantify how data uncertainty propagates through the model.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{
    mu_high_from_eta, simulate_transition, steady_state, ExponentConvention, Grid,
    GrowthError, GrowthModelParams,
};
use crate::numeric::{percentile_sorted, subseed, Z_975};

/// Drift increment applied at the shock year in the baseline experiment.
///
/// Produced by a one-time run of [`calibrate_delta_mu`] with the
/// administrative-data input (η̂ = 0.39, σ_H = 0.15, default grid and dt) and
/// a 2050 top-1% share target of 22.5%; regenerate with
/// `calibrate_delta_mu(0.225, 0.39, 0.15, &ShockSpec::default())`.
pub const DEFAULT_DELTA_MU: f64 = 0.0520114128;

fn default_draws() -> usize {
    100
}

fn default_sigma_set() -> Vec<f64> {
    vec![0.15, 0.175, 0.2]
}

/// Point estimate and uncertainty of the calibration target η.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationInput {
    pub eta_hat: f64,
    pub se: f64,
    /// Coefficient of variation se/η̂; informational.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<String>,
    /// Number of Monte Carlo draws B.
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// High-type volatilities to sweep.
    #[serde(default = "default_sigma_set")]
    pub sigma_high_set: Vec<f64>,
}

impl CalibrationInput {
    pub fn validate(&self) -> Result<(), GrowthError> {
        let fail = |m: String| Err(GrowthError::InvalidParams(m));
        if !(self.eta_hat > 0.0 && self.eta_hat.is_finite()) {
            return fail(format!("eta_hat must be positive, got {}", self.eta_hat));
        }
        if !(self.se >= 0.0 && self.se.is_finite()) {
            return fail(format!("se must be nonnegative, got {}", self.se));
        }
        if self.draws == 0 {
            return fail("draws must be at least 1".into());
        }
        if self.sigma_high_set.is_empty() || self.sigma_high_set.iter().any(|&s| !(s > 0.0)) {
            return fail("sigma_high_set must be nonempty and positive".into());
        }
        Ok(())
    }
}

/// How η is drawn from its 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawLaw {
    /// Uniform on [η̂ − z·SE, η̂ + z·SE].
    #[default]
    Uniform,
    /// Normal(η̂, SE) truncated to the same interval (sensitivity check).
    TruncatedNormal,
}

/// Overrides for the parameters the published calibration leaves open.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct ModelOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_low_offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_high_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retire_rate: Option<f64>,
}

impl ModelOverrides {
    pub fn apply(&self, mut params: GrowthModelParams) -> GrowthModelParams {
        if let Some(offset) = self.mu_low_offset {
            params.mu_low = params.mu_high - offset;
        }
        if let Some(v) = self.sigma_low {
            params.sigma_low = v;
        }
        if let Some(v) = self.entry_high_prob {
            params.entry_high_prob = v;
        }
        if let Some(v) = self.entry_mean {
            params.entry_mean = v;
        }
        if let Some(v) = self.entry_sd {
            params.entry_sd = v;
        }
        if let Some(v) = self.switch_rate {
            params.switch_rate = v;
        }
        if let Some(v) = self.retire_rate {
            params.retire_rate = v;
        }
        params
    }
}

/// The shock experiment: when, how hard, and how to solve it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShockSpec {
    #[serde(default = "default_delta_mu")]
    pub delta_mu: f64,
    #[serde(default = "default_start_year")]
    pub start_year: f64,
    #[serde(default = "default_end_year")]
    pub end_year: f64,
    /// Top fraction tracked (0.01 = top 1%).
    #[serde(default = "default_top_fraction")]
    pub top_fraction: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub convention: ExponentConvention,
    #[serde(default)]
    pub draw_law: DrawLaw,
    #[serde(default)]
    pub model: ModelOverrides,
}

fn default_delta_mu() -> f64 {
    DEFAULT_DELTA_MU
}
fn default_start_year() -> f64 {
    1973.0
}
fn default_end_year() -> f64 {
    2050.0
}
fn default_top_fraction() -> f64 {
    0.01
}
fn default_dt() -> f64 {
    0.05
}

impl Default for ShockSpec {
    fn default() -> Self {
        Self {
            delta_mu: default_delta_mu(),
            start_year: default_start_year(),
            end_year: default_end_year(),
            top_fraction: default_top_fraction(),
            dt: default_dt(),
            grid: Grid::default(),
            convention: ExponentConvention::default(),
            draw_law: DrawLaw::default(),
            model: ModelOverrides::default(),
        }
    }
}

impl ShockSpec {
    pub fn horizon_years(&self) -> f64 {
        self.end_year - self.start_year
    }

    pub fn validate(&self) -> Result<(), GrowthError> {
        if !(self.end_year > self.start_year) {
            return Err(GrowthError::InvalidParams(format!(
                "end_year {} must exceed start_year {}",
                self.end_year, self.start_year
            )));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction < 1.0) {
            return Err(GrowthError::InvalidTopFraction(self.top_fraction));
        }
        self.grid.validate()
    }
}

/// Full experiment file: calibration input plus shock specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub calibration: CalibrationInput,
    #[serde(default)]
    pub shock: ShockSpec,
}

/// One year of an envelope band.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub year: f64,
    pub median: f64,
    pub lower95: f64,
    pub upper95: f64,
}

/// Envelope for one value of σ_H.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvelopeBand {
    pub sigma_high: f64,
    pub points: Vec<EnvelopePoint>,
    /// Draw indices (1-based) that were infeasible and excluded.
    pub excluded_draws: Vec<usize>,
}

impl EnvelopeBand {
    pub fn at_year(&self, year: f64) -> Option<&EnvelopePoint> {
        self.points.iter().find(|p| p.year == year)
    }
}

fn draw_eta(calib: &CalibrationInput, law: DrawLaw, u: f64) -> f64 {
    let half = Z_975 * calib.se;
    match law {
        DrawLaw::Uniform => calib.eta_hat + (2.0 * u - 1.0) * half,
        DrawLaw::TruncatedNormal => {
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            let p = 0.025 + 0.95 * u;
            (calib.eta_hat + calib.se * normal.inverse_cdf(p))
                .clamp(calib.eta_hat - half, calib.eta_hat + half)
        }
    }
}

fn run_draw(
    eta: f64,
    sigma_high: f64,
    shock: &ShockSpec,
) -> Result<Vec<f64>, GrowthError> {
    let mu0 = mu_high_from_eta(
        eta,
        sigma_high,
        shock
            .model
            .switch_rate
            .unwrap_or(super::DEFAULT_SWITCH_RATE),
        shock
            .model
            .retire_rate
            .unwrap_or(super::DEFAULT_RETIRE_RATE),
        shock.convention,
    )?;
    let params = shock.model.apply(GrowthModelParams::baseline(mu0, sigma_high));
    let initial = steady_state(&params, &shock.grid)?;
    let mut shocked = params;
    shocked.mu_high += shock.delta_mu;
    // The low-type drift stays at its pre-shock level: the shock raises
    // high-type growth only.
    let series = simulate_transition(
        &initial,
        &shocked,
        shock.horizon_years(),
        shock.dt,
        shock.top_fraction,
    )?;
    Ok(series.shares)
}

/// Propagate η-uncertainty through the model: B draws, one transition per
/// draw and σ_H, pointwise percentile bands per year.
///
/// Draw b uses the sub-seed `subseed(seed, b)`, so results are independent of
/// parallel scheduling, and the same seed reuses the same draw ranks across
/// inputs (envelope widths are then comparable across SE values).
pub fn mc_envelope(
    calib: &CalibrationInput,
    shock: &ShockSpec,
    seed: u64,
) -> Result<Vec<EnvelopeBand>, GrowthError> {
    calib.validate()?;
    shock.validate()?;

    let uniforms: Vec<f64> = (1..=calib.draws as u64)
        .map(|b| ChaCha8Rng::seed_from_u64(subseed(seed, b)).random::<f64>())
        .collect();
    let etas: Vec<f64> = uniforms
        .iter()
        .map(|&u| draw_eta(calib, shock.draw_law, u))
        .collect();

    let n_years = shock.horizon_years().round() as usize;
    let mut bands = Vec::with_capacity(calib.sigma_high_set.len());

    for &sigma_high in &calib.sigma_high_set {
        let results: Vec<(usize, Result<Vec<f64>, GrowthError>)> = etas
            .par_iter()
            .enumerate()
            .map(|(i, &eta)| (i + 1, run_draw(eta, sigma_high, shock)))
            .collect();

        let mut excluded = Vec::new();
        let mut first_failure = None;
        let mut series = Vec::new();
        for (draw, result) in results {
            match result {
                Ok(shares) => series.push(shares),
                Err(e) => {
                    if first_failure.is_none() {
                        first_failure = Some(e.to_string());
                    }
                    excluded.push(draw);
                }
            }
        }
        if excluded.len() * 10 > calib.draws {
            return Err(GrowthError::TooManyExcluded {
                excluded: excluded.len(),
                total: calib.draws,
                first: first_failure.unwrap_or_default(),
            });
        }

        let mut points = Vec::with_capacity(n_years + 1);
        for year_idx in 0..=n_years {
            let mut values: Vec<f64> = series.iter().map(|s| s[year_idx]).collect();
            values.sort_by(|a, b| a.partial_cmp(b).expect("finite shares"));
            points.push(EnvelopePoint {
                year: shock.start_year + year_idx as f64,
                median: percentile_sorted(&values, 0.5).expect("nonempty"),
                lower95: percentile_sorted(&values, 0.025).expect("nonempty"),
                upper95: percentile_sorted(&values, 0.975).expect("nonempty"),
            });
        }
        bands.push(EnvelopeBand {
            sigma_high,
            points,
            excluded_draws: excluded,
        });
    }
    Ok(bands)
}

/// Write envelope bands as tidy CSV: year, sigmaH, median, lo95, hi95.
pub fn write_envelope_csv<W: std::io::Write>(
    bands: &[EnvelopeBand],
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(out, "year,sigmaH,median,lo95,hi95")?;
    for band in bands {
        for p in &band.points {
            writeln!(
                out,
                "{},{},{},{},{}",
                p.year, band.sigma_high, p.median, p.lower95, p.upper95
            )?;
        }
    }
    Ok(())
}

/// One-time calibration of the shock increment: bisect Δμ so the
/// deterministic baseline (η fixed at `eta`, volatility `sigma_high`) ends at
/// `target_share` of income in the top `shock.top_fraction` at the end year.
pub fn calibrate_delta_mu(
    target_share: f64,
    eta: f64,
    sigma_high: f64,
    shock: &ShockSpec,
) -> Result<f64, GrowthError> {
    shock.validate()?;
    let switch = shock
        .model
        .switch_rate
        .unwrap_or(super::DEFAULT_SWITCH_RATE);
    let retire = shock
        .model
        .retire_rate
        .unwrap_or(super::DEFAULT_RETIRE_RATE);
    let mu0 = mu_high_from_eta(eta, sigma_high, switch, retire, shock.convention)?;
    let params = shock.model.apply(GrowthModelParams::baseline(mu0, sigma_high));
    let initial = steady_state(&params, &shock.grid)?;

    let share_at = |delta_mu: f64| -> Result<f64, GrowthError> {
        let mut shocked = params;
        shocked.mu_high += delta_mu;
        let series = simulate_transition(
            &initial,
            &shocked,
            shock.horizon_years(),
            shock.dt,
            shock.top_fraction,
        )?;
        Ok(*series.shares.last().expect("nonempty series"))
    };

    // Largest admissible increment keeps the shocked tail integrable
    // (ξ comfortably above 1).
    let exit = shock.convention.exit_rate(switch, retire);
    let xi_floor = 1.02;
    let mu_cap = exit / xi_floor - xi_floor * sigma_high * sigma_high / 2.0;
    let mut lo = 0.0;
    let mut hi = mu_cap - mu0;
    if hi <= 0.0 {
        return Err(GrowthError::TargetUnreachable {
            target: target_share,
            detail: format!("baseline drift {mu0} already at the integrability cap {mu_cap}"),
        });
    }

    let share_lo = share_at(lo)?;
    if share_lo >= target_share {
        return Err(GrowthError::TargetUnreachable {
            target: target_share,
            detail: format!("unshocked end-of-horizon share {share_lo} already meets the target"),
        });
    }
    let share_hi = share_at(hi)?;
    if share_hi < target_share {
        return Err(GrowthError::TargetUnreachable {
            target: target_share,
            detail: format!(
                "even the largest integrable shock ({hi}) only reaches {share_hi}"
            ),
        });
    }

    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if share_at(mid)? < target_share {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
