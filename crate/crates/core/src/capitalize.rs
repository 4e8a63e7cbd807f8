//! Wealth estimation by capitalizing capital income flows.
//!
//! Each asset category's rate of return is pinned by an adding-up identity
//! against the category's aggregate balance-sheet total FA_a: dividing every
//! taxpayer's category income by the category rate reproduces FA_a exactly.
//! Under the heterogeneous regime one category (taxable interest, in the
//! published variants) carries an exogenous higher rate for the top wealth
//! group, and the bottom group's rate is solved from the same identity.
//! Because top-group membership depends on estimated wealth, which depends on
//! the rates, membership is resolved by fixed-point iteration seeded from the
//! homogeneous solution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::numeric::CompensatedSum;
use crate::ErrorClass;

/// Iteration cap for the top-membership fixed point.
pub const MAX_MEMBERSHIP_ITERATIONS: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum CapitalizeError {
    #[error("FA total for '{category}' must be positive, got {fa}")]
    NonpositiveFa { category: String, fa: f64 },
    #[error("category '{category}' has zero aggregate income but FA total {fa}; rate undefined")]
    UndefinedRate { category: String, fa: f64 },
    #[error(
        "infeasible top rate for '{category}': top holdings {top_holdings} meet or exceed FA total {fa} \
         (top income {top_income} at rate {top_rate})"
    )]
    InfeasibleTopRate {
        category: String,
        top_holdings: f64,
        fa: f64,
        top_income: f64,
        top_rate: f64,
    },
    #[error("no rate available for held category '{0}'")]
    MissingRate(String),
    #[error("bottom group of '{category}' has zero aggregate income; split rate undefined")]
    EmptyBottomGroup { category: String },
    #[error("top fraction must lie in (0, 1), got {0}")]
    InvalidTopFraction(f64),
    #[error("rates must be positive, got {0}")]
    NonpositiveRate(f64),
    #[error("column lengths disagree: {0}")]
    LengthMismatch(String),
    #[error("heterogeneous category '{0}' not found among asset categories")]
    UnknownCategory(String),
}

impl CapitalizeError {
    pub fn class(&self) -> ErrorClass {
        ErrorClass::Validation
    }
}

/// Rate-of-return regime.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateRegime {
    /// One rate per category, shared by every taxpayer.
    Homogeneous,
    /// One category carries an exogenous `top_rate` for the top
    /// `top_fraction` of the wealth distribution; the bottom group's rate is
    /// solved from the adding-up identity.
    Heterogeneous {
        category: String,
        #[serde(default = "default_top_fraction")]
        top_fraction: f64,
        top_rate: f64,
    },
}

fn default_top_fraction() -> f64 {
    0.01
}

/// How a taxpayer's nonfinancial wealth is assigned.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonfinRule {
    #[default]
    Zero,
    /// Taken from a named value column of the dataset.
    Column { name: String },
}

/// Asset categories, their aggregate totals, and the regime.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapitalizationSpec {
    /// Category names in reporting order; incomes live in columns named
    /// `income_<category>`.
    pub categories: Vec<String>,
    pub fa_totals: BTreeMap<String, f64>,
    pub regime: RateRegime,
    #[serde(default)]
    pub nonfin_rule: NonfinRule,
}

/// Solved rate for one category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CategoryRate {
    Single { rate: f64 },
    Split { top: f64, bottom: f64 },
}

impl CategoryRate {
    pub fn for_group(&self, in_top: bool) -> f64 {
        match *self {
            CategoryRate::Single { rate } => rate,
            CategoryRate::Split { top, bottom } => {
                if in_top {
                    top
                } else {
                    bottom
                }
            }
        }
    }
}

/// Rates for all categories plus fixed-point diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateSolution {
    pub rates: BTreeMap<String, CategoryRate>,
    pub iterations: usize,
    pub converged: bool,
}

/// Per-taxpayer income columns for one category.
#[derive(Debug, Clone, Copy)]
pub struct CategoryData<'a> {
    pub name: &'a str,
    pub incomes: &'a [f64],
    pub fa_total: f64,
}

/// Estimated rate of return for one category: weighted aggregate income over
/// the category's balance-sheet total.
pub fn estimate_rate(incomes: &[f64], weights: &[f64], fa_total: f64) -> Result<f64, CapitalizeError> {
    estimate_rate_named("", incomes, weights, fa_total)
}

fn estimate_rate_named(
    name: &str,
    incomes: &[f64],
    weights: &[f64],
    fa_total: f64,
) -> Result<f64, CapitalizeError> {
    if fa_total <= 0.0 {
        return Err(CapitalizeError::NonpositiveFa {
            category: name.to_string(),
            fa: fa_total,
        });
    }
    let total = weighted_sum(incomes, weights)?;
    if total <= 0.0 {
        return Err(CapitalizeError::UndefinedRate {
            category: name.to_string(),
            fa: fa_total,
        });
    }
    Ok(total / fa_total)
}

/// Solve the split rates of a heterogeneous category: the top group's rate is
/// exogenous; the bottom group's rate makes the adding-up identity hold.
pub fn solve_heterogeneous_rates(
    incomes: &[f64],
    weights: &[f64],
    fa_total: f64,
    top_membership: &[bool],
    top_rate: f64,
) -> Result<(f64, f64), CapitalizeError> {
    solve_heterogeneous_named("", incomes, weights, fa_total, top_membership, top_rate)
}

fn solve_heterogeneous_named(
    name: &str,
    incomes: &[f64],
    weights: &[f64],
    fa_total: f64,
    top_membership: &[bool],
    top_rate: f64,
) -> Result<(f64, f64), CapitalizeError> {
    if fa_total <= 0.0 {
        return Err(CapitalizeError::NonpositiveFa {
            category: name.to_string(),
            fa: fa_total,
        });
    }
    if top_rate <= 0.0 {
        return Err(CapitalizeError::NonpositiveRate(top_rate));
    }
    if incomes.len() != top_membership.len() || incomes.len() != weights.len() {
        return Err(CapitalizeError::LengthMismatch(format!(
            "incomes {} / weights {} / membership {}",
            incomes.len(),
            weights.len(),
            top_membership.len()
        )));
    }

    let mut top_income = CompensatedSum::new();
    let mut bottom_income = CompensatedSum::new();
    for i in 0..incomes.len() {
        if top_membership[i] {
            top_income.add(weights[i] * incomes[i]);
        } else {
            bottom_income.add(weights[i] * incomes[i]);
        }
    }
    let top_income = top_income.value();
    let bottom_income = bottom_income.value();

    if top_income == 0.0 {
        // Degenerate split: everything sits in the bottom group.
        let rate = estimate_rate_named(name, incomes, weights, fa_total)?;
        return Ok((top_rate, rate));
    }

    let top_holdings = top_income / top_rate;
    if top_holdings >= fa_total {
        return Err(CapitalizeError::InfeasibleTopRate {
            category: name.to_string(),
            top_holdings,
            fa: fa_total,
            top_income,
            top_rate,
        });
    }
    if bottom_income <= 0.0 {
        return Err(CapitalizeError::EmptyBottomGroup {
            category: name.to_string(),
        });
    }
    Ok((top_rate, bottom_income / (fa_total - top_holdings)))
}

/// Wealth of one taxpayer: nonfinancial wealth plus capitalized income in
/// every held category (income over the applicable group rate).
pub fn capitalize_wealth(
    incomes_by_category: &[(&str, f64)],
    rates: &RateSolution,
    nonfin: f64,
    in_top: bool,
) -> Result<f64, CapitalizeError> {
    let mut wealth = nonfin;
    for &(name, income) in incomes_by_category {
        if income == 0.0 {
            continue;
        }
        let rate = rates
            .rates
            .get(name)
            .ok_or_else(|| CapitalizeError::MissingRate(name.to_string()))?
            .for_group(in_top);
        wealth += income / rate;
    }
    Ok(wealth)
}

/// Membership of the weighted top `top_fraction` of a wealth ranking.
///
/// Units are ranked by (wealth descending, index ascending) and taken whole
/// until the accumulated weight reaches `top_fraction × N`; the crossing unit
/// is included. Membership is a set, so no fractional unit exists here — the
/// rates absorb the granularity.
pub fn classify_top_membership(
    wealth: &[f64],
    weights: &[f64],
    top_fraction: f64,
) -> Result<Vec<bool>, CapitalizeError> {
    if !(top_fraction > 0.0 && top_fraction < 1.0) {
        return Err(CapitalizeError::InvalidTopFraction(top_fraction));
    }
    if wealth.len() != weights.len() {
        return Err(CapitalizeError::LengthMismatch(format!(
            "wealth {} / weights {}",
            wealth.len(),
            weights.len()
        )));
    }
    let total: f64 = weighted_total(weights);
    let target = top_fraction * total;

    let mut order: Vec<usize> = (0..wealth.len()).collect();
    order.sort_by(|&a, &b| {
        wealth[b]
            .partial_cmp(&wealth[a])
            .expect("finite wealth")
            .then(a.cmp(&b))
    });

    let mut membership = vec![false; wealth.len()];
    let mut acc = CompensatedSum::new();
    for &i in &order {
        if acc.value() >= target {
            break;
        }
        membership[i] = true;
        acc.add(weights[i]);
    }
    Ok(membership)
}

/// Full capitalization run over a dataset's category income columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapitalizationResult {
    pub wealth: Vec<f64>,
    pub rates: RateSolution,
    /// Present under the heterogeneous regime.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_membership: Option<Vec<bool>>,
}

/// Capitalize a whole sample.
///
/// Homogeneous: one rate per category from the adding-up identity, one pass.
/// Heterogeneous: start from the homogeneous solution, then alternate
/// classify-top → re-solve split rate → re-capitalize until membership is
/// stable or [`MAX_MEMBERSHIP_ITERATIONS`] is hit (reported, not fatal).
pub fn run_capitalization(
    categories: &[CategoryData<'_>],
    weights: &[f64],
    nonfin: &[f64],
    regime: &RateRegime,
) -> Result<CapitalizationResult, CapitalizeError> {
    let n = weights.len();
    for c in categories {
        if c.incomes.len() != n {
            return Err(CapitalizeError::LengthMismatch(format!(
                "category '{}' has {} rows, weights {}",
                c.name,
                c.incomes.len(),
                n
            )));
        }
    }
    if nonfin.len() != n {
        return Err(CapitalizeError::LengthMismatch(format!(
            "nonfin has {} rows, weights {}",
            nonfin.len(),
            n
        )));
    }

    let homogeneous_rates = || -> Result<BTreeMap<String, CategoryRate>, CapitalizeError> {
        categories
            .iter()
            .map(|c| {
                estimate_rate_named(c.name, c.incomes, weights, c.fa_total)
                    .map(|rate| (c.name.to_string(), CategoryRate::Single { rate }))
            })
            .collect()
    };

    let wealth_under = |rates: &BTreeMap<String, CategoryRate>,
                        membership: Option<&[bool]>|
     -> Result<Vec<f64>, CapitalizeError> {
        let mut wealth = nonfin.to_vec();
        for c in categories {
            let rate = rates
                .get(c.name)
                .ok_or_else(|| CapitalizeError::MissingRate(c.name.to_string()))?;
            for i in 0..n {
                if c.incomes[i] != 0.0 {
                    let in_top = membership.is_some_and(|m| m[i]);
                    wealth[i] += c.incomes[i] / rate.for_group(in_top);
                }
            }
        }
        Ok(wealth)
    };

    match regime {
        RateRegime::Homogeneous => {
            let rates = homogeneous_rates()?;
            let wealth = wealth_under(&rates, None)?;
            Ok(CapitalizationResult {
                wealth,
                rates: RateSolution {
                    rates,
                    iterations: 1,
                    converged: true,
                },
                top_membership: None,
            })
        }
        RateRegime::Heterogeneous {
            category,
            top_fraction,
            top_rate,
        } => {
            let het = categories
                .iter()
                .find(|c| c.name == category)
                .ok_or_else(|| CapitalizeError::UnknownCategory(category.clone()))?;

            let mut rates = homogeneous_rates()?;
            let mut wealth = wealth_under(&rates, None)?;
            let mut membership = classify_top_membership(&wealth, weights, *top_fraction)?;
            let mut converged = false;
            let mut iterations = 0;

            while iterations < MAX_MEMBERSHIP_ITERATIONS {
                iterations += 1;
                let (top, bottom) = solve_heterogeneous_named(
                    het.name,
                    het.incomes,
                    weights,
                    het.fa_total,
                    &membership,
                    *top_rate,
                )?;
                rates.insert(category.clone(), CategoryRate::Split { top, bottom });
                wealth = wealth_under(&rates, Some(&membership))?;
                let next = classify_top_membership(&wealth, weights, *top_fraction)?;
                if next == membership {
                    converged = true;
                    break;
                }
                membership = next;
            }
            if !converged {
                // The cap interrupted mid-cycle: re-solve once for the last
                // membership so the reported rates, wealth, and membership
                // satisfy the adding-up identity together.
                let (top, bottom) = solve_heterogeneous_named(
                    het.name,
                    het.incomes,
                    weights,
                    het.fa_total,
                    &membership,
                    *top_rate,
                )?;
                rates.insert(category.clone(), CategoryRate::Split { top, bottom });
                wealth = wealth_under(&rates, Some(&membership))?;
            }

            Ok(CapitalizationResult {
                wealth,
                rates: RateSolution {
                    rates,
                    iterations,
                    converged,
                },
                top_membership: Some(membership),
            })
        }
    }
}

fn weighted_sum(values: &[f64], weights: &[f64]) -> Result<f64, CapitalizeError> {
    if values.len() != weights.len() {
        return Err(CapitalizeError::LengthMismatch(format!(
            "values {} / weights {}",
            values.len(),
            weights.len()
        )));
    }
    let mut acc = CompensatedSum::new();
    for (v, w) in values.iter().zip(weights) {
        acc.add(v * w);
    }
    Ok(acc.value())
}

fn weighted_total(weights: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for &w in weights {
        acc.add(w);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_from_two_taxpayers() {
        let r = estimate_rate(&[10.0, 30.0], &[1.0, 1.0], 800.0).unwrap();
        assert!((r - 0.05).abs() < 1e-15);
    }

    #[test]
    fn rate_one_when_fa_equals_income() {
        let r = estimate_rate(&[25.0, 75.0], &[1.0, 1.0], 100.0).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_income_rate_is_undefined() {
        assert!(matches!(
            estimate_rate(&[0.0, 0.0], &[1.0, 1.0], 500.0),
            Err(CapitalizeError::UndefinedRate { .. })
        ));
    }

    #[test]
    fn dividend_worked_example() {
        // 2012 dividend rate 0.03411: $6,710 of dividends capitalizes to
        // $196,716.5 of dividend-generating assets.
        let mut rates = BTreeMap::new();
        rates.insert("div".to_string(), CategoryRate::Single { rate: 0.03411 });
        let solution = RateSolution {
            rates,
            iterations: 1,
            converged: true,
        };
        let wealth = capitalize_wealth(&[("div", 6710.0)], &solution, 0.0, false).unwrap();
        assert!((wealth - 196_716.5).abs() < 1.0, "wealth = {wealth}");
        assert!((wealth - 196_717.0).abs() < 1.0);
    }

    #[test]
    fn zero_incomes_leave_nonfin() {
        let solution = RateSolution {
            rates: BTreeMap::new(),
            iterations: 1,
            converged: true,
        };
        let w = capitalize_wealth(&[("div", 0.0)], &solution, 1234.5, false).unwrap();
        assert_eq!(w, 1234.5);
    }

    #[test]
    fn adding_up_two_taxpayers() {
        let incomes = [10.0, 30.0];
        let weights = [1.0, 1.0];
        let r = estimate_rate(&incomes, &weights, 800.0).unwrap();
        let wealth: Vec<f64> = incomes.iter().map(|i| i / r).collect();
        assert!((wealth[0] - 200.0).abs() < 1e-9);
        assert!((wealth[1] - 600.0).abs() < 1e-9);
        assert!((wealth.iter().sum::<f64>() - 800.0).abs() < 1e-9);
    }

    #[test]
    fn split_rate_direct_solve() {
        // Top income 50 at rate 0.05 holds 1000; bottom income 10 over the
        // remaining 500 gives 0.02.
        let incomes = [50.0, 10.0];
        let weights = [1.0, 1.0];
        let (top, bottom) =
            solve_heterogeneous_rates(&incomes, &weights, 1500.0, &[true, false], 0.05).unwrap();
        assert_eq!(top, 0.05);
        assert!((bottom - 0.02).abs() < 1e-15);
    }

    #[test]
    fn empty_top_reduces_to_homogeneous() {
        let incomes = [10.0, 30.0];
        let weights = [1.0, 1.0];
        let (_, bottom) =
            solve_heterogeneous_rates(&incomes, &weights, 800.0, &[false, false], 0.07).unwrap();
        let homogeneous = estimate_rate(&incomes, &weights, 800.0).unwrap();
        assert_eq!(bottom, homogeneous);
    }

    #[test]
    fn infeasible_top_rate() {
        // Top holdings 50 / 0.05 = 1000 = FA: nothing left for the bottom.
        let err = solve_heterogeneous_rates(&[50.0, 10.0], &[1.0, 1.0], 1000.0, &[true, false], 0.05)
            .unwrap_err();
        assert!(matches!(err, CapitalizeError::InfeasibleTopRate { .. }));
    }

    #[test]
    fn membership_fixed_point_on_separated_data() {
        // 100 units; two clearly separated wealth tiers via incomes.
        let n = 100;
        let mut incomes = vec![1.0; n];
        incomes[0] = 1000.0; // the single top-1% unit by any ranking
        let weights = vec![1.0; n];
        let nonfin = vec![0.0; n];
        let fa = 2_000.0;
        let cats = [CategoryData {
            name: "int",
            incomes: &incomes,
            fa_total: fa,
        }];
        let result = run_capitalization(
            &cats,
            &weights,
            &nonfin,
            &RateRegime::Heterogeneous {
                category: "int".into(),
                top_fraction: 0.01,
                top_rate: 1.0,
            },
        )
        .unwrap();
        assert!(result.rates.converged);
        assert!(result.rates.iterations <= 3);
        let membership = result.top_membership.unwrap();
        assert!(membership[0]);
        assert_eq!(membership.iter().filter(|&&m| m).count(), 1);
        // Adding-up identity holds for the split category.
        let top_holdings = 1000.0 / 1.0;
        let bottom_rate = match result.rates.rates["int"] {
            CategoryRate::Split { bottom, .. } => bottom,
            _ => panic!("expected split"),
        };
        let bottom_holdings = 99.0 / bottom_rate;
        assert!(((top_holdings + bottom_holdings) - fa).abs() < 1e-9 * fa);
    }

    #[test]
    fn near_threshold_ties_terminate() {
        // Many identical units around the cutoff: membership flaps but the
        // iteration cap terminates with a flag either way.
        let n = 200;
        let incomes = vec![1.0; n];
        let weights = vec![1.0; n];
        let nonfin = vec![0.0; n];
        let cats = [CategoryData {
            name: "int",
            incomes: &incomes,
            fa_total: 400.0,
        }];
        let result = run_capitalization(
            &cats,
            &weights,
            &nonfin,
            &RateRegime::Heterogeneous {
                category: "int".into(),
                top_fraction: 0.05,
                top_rate: 0.9,
            },
        )
        .unwrap();
        assert!(result.rates.iterations <= MAX_MEMBERSHIP_ITERATIONS);
        // With total ties the ranking is deterministic by index, so the
        // fixed point actually lands; either way we must have a verdict.
        assert!(result.rates.converged || result.rates.iterations == MAX_MEMBERSHIP_ITERATIONS);
    }

    #[test]
    fn raising_top_rate_lowers_top_holdings_and_raises_bottom_rate() {
        let incomes = [50.0, 10.0, 5.0];
        let weights = [1.0, 1.0, 1.0];
        let membership = [true, false, false];
        let fa = 1500.0;
        let (_, bottom_low) =
            solve_heterogeneous_rates(&incomes, &weights, fa, &membership, 0.05).unwrap();
        let (_, bottom_high) =
            solve_heterogeneous_rates(&incomes, &weights, fa, &membership, 0.10).unwrap();
        let holdings_low = 50.0 / 0.05;
        let holdings_high = 50.0 / 0.10;
        assert!(holdings_high < holdings_low);
        assert!(bottom_high < bottom_low); // more FA left for the bottom ⇒ lower rate
    }
}
