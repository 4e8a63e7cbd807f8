//! Synthetic population generation and design-based sampling.
//!
//! Restricted survey and tax microdata cannot ship with this crate, so the
//! test and acceptance pipelines run against synthetic populations with known
//! ground truth: a lognormal body with a Pareto tail for income, per-asset
//! incomes generated as `wealth_share × wealth × true_rate` (so capitalization
//! can be checked exactly), and a stratified design assigning units to strata
//! by income bracket and two simulated nominal design flags.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Pareto};
use serde::{Deserialize, Serialize};

use super::{MicrodataError, MicrodataSet, Observation, StratumProfile};
use crate::numeric::CompensatedSum;

/// Lognormal body of the synthetic income distribution.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BodyDistribution {
    pub meanlog: f64,
    pub sdlog: f64,
}

/// One asset category with a known rate of return.
///
/// Each unit holds `wealth_share × wealth` in the category and receives
/// income `true_rate` times that holding, so the capitalization pipeline has
/// an exact round trip.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssetCategorySpec {
    pub name: String,
    pub true_rate: f64,
    pub wealth_share: f64,
}

/// One design row: an income bracket with nominal-flag probabilities and a
/// Bernoulli sampling rate.
///
/// A design row induces up to `2 × usefulness_probs.len()` strata, one per
/// (special-forms, usefulness) combination; all of them share the row's
/// sampling rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumDesign {
    pub bracket_lo: f64,
    /// Upper bracket bound; `None` means unbounded.
    pub bracket_hi: Option<f64>,
    pub special_forms_prob: f64,
    pub usefulness_probs: Vec<f64>,
    pub sampling_rate: f64,
}

/// Full recipe for a synthetic population.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticPopulationSpec {
    pub population_size: usize,
    pub body: BodyDistribution,
    /// Pareto tail exponent ξ of the income mixture; must exceed 1.
    pub tail_exponent: f64,
    /// Mixture weight on the Pareto tail, in [0, 1).
    pub tail_mix_weight: f64,
    pub strata: Vec<StratumDesign>,
    pub seed: u64,
    /// Wealth is `wealth_income_ratio × income` per unit.
    #[serde(default = "default_wealth_income_ratio")]
    pub wealth_income_ratio: f64,
    #[serde(default)]
    pub assets: Vec<AssetCategorySpec>,
}

fn default_wealth_income_ratio() -> f64 {
    5.0
}

impl SyntheticPopulationSpec {
    pub fn validate(&self) -> Result<(), MicrodataError> {
        let fail = |msg: String| Err(MicrodataError::InvalidSpec(msg));
        if self.population_size == 0 {
            return fail("population_size must be positive".into());
        }
        if !(self.tail_exponent > 1.0) {
            return fail(format!(
                "tail_exponent must exceed 1 for a finite mean, got {}",
                self.tail_exponent
            ));
        }
        if !(0.0..1.0).contains(&self.tail_mix_weight) {
            return fail(format!(
                "tail_mix_weight must lie in [0, 1), got {}",
                self.tail_mix_weight
            ));
        }
        if !(self.body.sdlog > 0.0) {
            return fail("body sdlog must be positive".into());
        }
        if self.strata.is_empty() {
            return fail("strata design must not be empty".into());
        }
        let mut lo = 0.0;
        for (r, row) in self.strata.iter().enumerate() {
            if (row.bracket_lo - lo).abs() > 1e-12 * lo.abs().max(1.0) {
                return fail(format!(
                    "bracket rows must tile [0, ∞): row {r} starts at {} but previous ends at {lo}",
                    row.bracket_lo
                ));
            }
            match row.bracket_hi {
                Some(hi) if hi <= row.bracket_lo => {
                    return fail(format!("row {r}: empty bracket [{}, {hi})", row.bracket_lo))
                }
                Some(hi) => lo = hi,
                None => {
                    if r + 1 != self.strata.len() {
                        return fail(format!("row {r} is unbounded but not last"));
                    }
                    lo = f64::INFINITY;
                }
            }
            if !(row.sampling_rate > 0.0 && row.sampling_rate <= 1.0) {
                return fail(format!(
                    "row {r}: sampling rate must lie in (0, 1], got {}",
                    row.sampling_rate
                ));
            }
            if !(0.0..=1.0).contains(&row.special_forms_prob) {
                return fail(format!("row {r}: special_forms_prob outside [0, 1]"));
            }
            if row.usefulness_probs.is_empty() {
                return fail(format!("row {r}: usefulness_probs must not be empty"));
            }
            let total: f64 = row.usefulness_probs.iter().sum();
            if row.usefulness_probs.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
                return fail(format!("row {r}: usefulness_probs must sum to 1"));
            }
        }
        if !lo.is_infinite() {
            return fail("last bracket must be unbounded so strata are exhaustive".into());
        }
        let share_total: f64 = self.assets.iter().map(|a| a.wealth_share).sum();
        if self.assets.iter().any(|a| a.wealth_share < 0.0 || a.true_rate <= 0.0) {
            return fail("asset categories need positive rates and nonnegative shares".into());
        }
        if share_total > 1.0 + 1e-12 {
            return fail(format!("asset wealth shares sum to {share_total} > 1"));
        }
        if !(self.wealth_income_ratio > 0.0) {
            return fail("wealth_income_ratio must be positive".into());
        }
        Ok(())
    }

    /// Number of usefulness codes shared by all rows (the maximum declared).
    fn usefulness_codes(&self) -> usize {
        self.strata.iter().map(|r| r.usefulness_probs.len()).max().unwrap_or(1)
    }

    /// Stratum label for (design row, special flag, usefulness code).
    pub fn stratum_id(&self, row: usize, special: u32, usefulness: u32) -> u32 {
        let codes = self.usefulness_codes() as u32;
        (row as u32) * 2 * codes + special * codes + usefulness
    }

    /// Profiles for every stratum the design can produce, sizes zeroed.
    ///
    /// Callers fill `size` from whichever dataset (population or sample) the
    /// profiles will describe.
    pub fn stratum_profiles(&self) -> Vec<StratumProfile> {
        let codes = self.usefulness_codes() as u32;
        let mut out = Vec::new();
        for (r, _) in self.strata.iter().enumerate() {
            for special in 0..2u32 {
                for code in 0..codes {
                    out.push(StratumProfile {
                        stratum_id: self.stratum_id(r, special, code),
                        size: 0,
                        income_bracket_rank: r as u32 + 1,
                        special_forms_flag: special,
                        usefulness_code: code,
                    });
                }
            }
        }
        out
    }

    /// Design row owning a stratum label.
    pub fn design_row_of(&self, stratum_id: u32) -> usize {
        (stratum_id as usize) / (2 * self.usefulness_codes())
    }
}

/// A fully enumerated synthetic population (all weights one).
#[derive(Debug, Clone)]
pub struct Population {
    pub ids: Vec<u64>,
    pub incomes: Vec<f64>,
    /// Per-asset-category incomes, aligned with `spec.assets`.
    pub asset_incomes: Vec<(String, Vec<f64>)>,
    pub wealth: Vec<f64>,
    pub strata: Vec<u32>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Read a population back from the CSV layout written by
    /// [`Population::write_csv`].
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self, MicrodataError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| MicrodataError::Parse {
                row: 0,
                message: e.to_string(),
            })?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| MicrodataError::MissingColumn(name.to_string()))
        };
        let id_col = col("id")?;
        let income_col = col("income")?;
        let wealth_col = col("wealth")?;
        let stratum_col = col("stratum")?;
        let asset_cols: Vec<(String, usize)> = headers
            .iter()
            .enumerate()
            .filter_map(|(i, h)| {
                h.strip_prefix("income_")
                    .map(|name| (name.to_string(), i))
            })
            .collect();

        let mut pop = Population {
            ids: Vec::new(),
            incomes: Vec::new(),
            asset_incomes: asset_cols
                .iter()
                .map(|(n, _)| (n.clone(), Vec::new()))
                .collect(),
            wealth: Vec::new(),
            strata: Vec::new(),
        };
        for (idx, record) in rdr.records().enumerate() {
            let row = idx + 1;
            let record = record.map_err(|e| MicrodataError::Parse {
                row,
                message: e.to_string(),
            })?;
            let parse = |c: usize, what: &str| -> Result<f64, MicrodataError> {
                record
                    .get(c)
                    .unwrap_or("")
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| MicrodataError::Parse {
                        row,
                        message: format!("cannot parse {what}"),
                    })
            };
            pop.ids.push(record.get(id_col).unwrap_or("").trim().parse().map_err(|_| {
                MicrodataError::Parse {
                    row,
                    message: "cannot parse id".into(),
                }
            })?);
            pop.incomes.push(parse(income_col, "income")?);
            pop.wealth.push(parse(wealth_col, "wealth")?);
            pop.strata.push(
                record
                    .get(stratum_col)
                    .unwrap_or("")
                    .trim()
                    .parse()
                    .map_err(|_| MicrodataError::Parse {
                        row,
                        message: "cannot parse stratum".into(),
                    })?,
            );
            for ((_, values), (_, c)) in pop.asset_incomes.iter_mut().zip(&asset_cols) {
                values.push(parse(*c, "asset income")?);
            }
        }
        if pop.ids.is_empty() {
            return Err(MicrodataError::Empty);
        }
        Ok(pop)
    }

    /// Write as CSV with header (id, income, income_<asset>..., wealth, stratum).
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        let mut header = vec!["id".to_string(), "income".into()];
        for (name, _) in &self.asset_incomes {
            header.push(format!("income_{name}"));
        }
        header.push("wealth".into());
        header.push("stratum".into());
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut fields = vec![self.ids[i].to_string(), format!("{}", self.incomes[i])];
            for (_, col) in &self.asset_incomes {
                fields.push(format!("{}", col[i]));
            }
            fields.push(format!("{}", self.wealth[i]));
            fields.push(self.strata[i].to_string());
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// Where the Pareto tail begins, in units of the body distribution:
/// `exp(meanlog + PARETO_SCALE_SDS × sdlog)`, i.e. roughly the body's 99.87th
/// percentile, far enough out that the top percentiles of the mixture are
/// effectively pure Pareto.
pub const PARETO_SCALE_SDS: f64 = 3.0;

/// Generate a population deterministically from `spec.seed`.
///
/// Draw order per unit is fixed (mixture branch, income, special flag,
/// usefulness code) so output is identical across runs and platforms.
pub fn generate_population(spec: &SyntheticPopulationSpec) -> Result<Population, MicrodataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let body = LogNormal::new(spec.body.meanlog, spec.body.sdlog)
        .map_err(|e| MicrodataError::InvalidSpec(e.to_string()))?;
    let pareto_scale = (spec.body.meanlog + PARETO_SCALE_SDS * spec.body.sdlog).exp();
    let tail = Pareto::new(pareto_scale, spec.tail_exponent)
        .map_err(|e| MicrodataError::InvalidSpec(e.to_string()))?;

    let n = spec.population_size;
    let mut incomes = Vec::with_capacity(n);
    let mut strata = Vec::with_capacity(n);
    let mut wealth = Vec::with_capacity(n);

    for _ in 0..n {
        let branch: f64 = rng.random();
        let income = if branch < spec.tail_mix_weight {
            tail.sample(&mut rng)
        } else {
            body.sample(&mut rng)
        };
        let row = spec
            .strata
            .iter()
            .position(|r| income >= r.bracket_lo && r.bracket_hi.is_none_or(|hi| income < hi))
            .expect("brackets tile [0, inf)");
        let special = (rng.random::<f64>() < spec.strata[row].special_forms_prob) as u32;
        let u: f64 = rng.random();
        let mut code = 0u32;
        let mut acc = 0.0;
        for (c, &p) in spec.strata[row].usefulness_probs.iter().enumerate() {
            acc += p;
            if u < acc {
                code = c as u32;
                break;
            }
            code = c as u32;
        }
        incomes.push(income);
        strata.push(spec.stratum_id(row, special, code));
        wealth.push(spec.wealth_income_ratio * income);
    }

    let asset_incomes = spec
        .assets
        .iter()
        .map(|a| {
            let col = wealth
                .iter()
                .map(|&w| a.wealth_share * w * a.true_rate)
                .collect();
            (a.name.clone(), col)
        })
        .collect();

    Ok(Population {
        ids: (0..n as u64).collect(),
        incomes,
        asset_incomes,
        wealth,
        strata,
    })
}

/// A drawn sample plus any design warnings (e.g. strata that came up empty).
#[derive(Debug)]
pub struct SampleOutcome {
    pub data: MicrodataSet,
    pub warnings: Vec<String>,
}

/// Draw a stratified Bernoulli sample: every unit enters independently with
/// its stratum's rate and carries weight `1 / rate`.
pub fn draw_stratified_sample(
    population: &Population,
    spec: &SyntheticPopulationSpec,
    seed: u64,
) -> Result<SampleOutcome, MicrodataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observations = Vec::new();

    for i in 0..population.len() {
        let stratum = population.strata[i];
        let rate = spec.strata[spec.design_row_of(stratum)].sampling_rate;
        if rng.random::<f64>() >= rate {
            continue;
        }
        let mut obs = Observation::new(population.ids[i], 1.0 / rate).with_stratum(stratum);
        obs.values.insert("income".into(), population.incomes[i]);
        for (name, col) in &population.asset_incomes {
            obs.values.insert(format!("income_{name}"), col[i]);
        }
        obs.values.insert("wealth".into(), population.wealth[i]);
        observations.push(obs);
    }

    let mut warnings = Vec::new();
    for profile in spec.stratum_profiles() {
        let in_population = population.strata.contains(&profile.stratum_id);
        let in_sample = observations
            .iter()
            .any(|o| o.stratum == Some(profile.stratum_id));
        if in_population && !in_sample {
            warnings.push(format!(
                "stratum {} present in population but empty in sample",
                profile.stratum_id
            ));
        }
    }

    let data = MicrodataSet::from_observations(observations)?;
    Ok(SampleOutcome { data, warnings })
}

/// Exact top share of a fully enumerated population (all weights one).
///
/// Takes exactly the top `(1 − k) · N` units by value; the boundary unit is
/// split proportionally, mirroring the interpolation used by the weighted
/// estimator so the two agree exactly on unit-weight data.
pub fn oracle_top_share(values: &[f64], k: f64) -> Result<f64, MicrodataError> {
    if !(k > 0.0 && k < 1.0) {
        return Err(MicrodataError::InvalidSpec(format!(
            "k must lie in (0, 1), got {k}"
        )));
    }
    if values.is_empty() {
        return Err(MicrodataError::Empty);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MicrodataError::InvalidSpec(
            "oracle requires finite values".into(),
        ));
    }

    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));

    let mut total = CompensatedSum::new();
    for &v in &sorted {
        total.add(v);
    }
    let total = total.value();
    if total == 0.0 {
        return Err(MicrodataError::InvalidSpec(
            "total value is zero; share undefined".into(),
        ));
    }

    let top_count = (1.0 - k) * values.len() as f64;
    let full = top_count.floor() as usize;
    let frac = top_count - full as f64;

    let mut top = CompensatedSum::new();
    for &v in sorted.iter().take(full) {
        top.add(v);
    }
    if frac > 0.0 {
        if let Some(&boundary) = sorted.get(full) {
            top.add(frac * boundary);
        }
    }
    Ok(top.value() / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basic_spec(seed: u64) -> SyntheticPopulationSpec {
        SyntheticPopulationSpec {
            population_size: 10_000,
            body: BodyDistribution {
                meanlog: 10.5,
                sdlog: 0.8,
            },
            tail_exponent: 2.5,
            tail_mix_weight: 0.1,
            strata: vec![
                StratumDesign {
                    bracket_lo: 0.0,
                    bracket_hi: Some(50_000.0),
                    special_forms_prob: 0.2,
                    usefulness_probs: vec![0.5, 0.3, 0.2],
                    sampling_rate: 0.05,
                },
                StratumDesign {
                    bracket_lo: 50_000.0,
                    bracket_hi: None,
                    special_forms_prob: 0.6,
                    usefulness_probs: vec![0.2, 0.3, 0.5],
                    sampling_rate: 0.2,
                },
            ],
            seed,
            wealth_income_ratio: 5.0,
            assets: vec![
                AssetCategorySpec {
                    name: "div".into(),
                    true_rate: 0.04,
                    wealth_share: 0.3,
                },
                AssetCategorySpec {
                    name: "int".into(),
                    true_rate: 0.02,
                    wealth_share: 0.2,
                },
            ],
        }
    }

    /// Hill tail-exponent estimator over the top fraction of a sample;
    /// independent oracle for the generator's Pareto tail.
    fn hill_estimate(values: &[f64], top_fraction: f64) -> f64 {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let k = ((sorted.len() as f64) * top_fraction).floor() as usize;
        assert!(k >= 2, "need at least two tail points");
        let threshold = sorted[k];
        let mean_log_excess: f64 =
            sorted[..k].iter().map(|&x| (x / threshold).ln()).sum::<f64>() / k as f64;
        1.0 / mean_log_excess
    }

    #[test]
    fn pure_lognormal_when_mix_zero() {
        let mut spec = basic_spec(7);
        spec.tail_mix_weight = 0.0;
        spec.population_size = 50_000;
        let pop = generate_population(&spec).unwrap();
        // Hill estimate over a lognormal tail keeps climbing with depth;
        // just check there is no Pareto-scale mass: the generator's Pareto
        // would put ~10% of units above the scale cutoff.
        let cutoff = (spec.body.meanlog + PARETO_SCALE_SDS * spec.body.sdlog).exp();
        let above = pop.incomes.iter().filter(|&&x| x > cutoff).count();
        assert!((above as f64) < 0.005 * pop.len() as f64);
    }

    #[test]
    fn hill_recovers_tail_exponent() {
        let mut spec = basic_spec(42);
        spec.population_size = 1_000_000;
        let pop = generate_population(&spec).unwrap();
        let hill = hill_estimate(&pop.incomes, 0.01);
        assert!(
            (hill - 2.5).abs() < 0.1,
            "Hill estimate {hill} not within 0.1 of 2.5"
        );
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = basic_spec(42);
        let a = generate_population(&spec).unwrap();
        let b = generate_population(&spec).unwrap();
        assert_eq!(a.incomes, b.incomes);
        assert_eq!(a.strata, b.strata);
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        a.write_csv(&mut csv_a).unwrap();
        b.write_csv(&mut csv_b).unwrap();
        assert_eq!(csv_a, csv_b);
    }

    #[test]
    fn asset_incomes_follow_true_rates() {
        let spec = basic_spec(3);
        let pop = generate_population(&spec).unwrap();
        let (name, div) = &pop.asset_incomes[0];
        assert_eq!(name, "div");
        for i in 0..10 {
            let holding = 0.3 * pop.wealth[i];
            assert!((div[i] - holding * 0.04).abs() <= 1e-12 * holding.abs());
        }
    }

    #[test]
    fn census_rate_keeps_everyone() {
        let mut spec = basic_spec(5);
        spec.population_size = 500;
        for row in &mut spec.strata {
            row.sampling_rate = 1.0;
        }
        let pop = generate_population(&spec).unwrap();
        let sample = draw_stratified_sample(&pop, &spec, 11).unwrap();
        assert_eq!(sample.data.sample_size(), 500);
        assert!(sample.data.implicate(1).unwrap().weights().iter().all(|&w| w == 1.0));
        assert!(sample.warnings.is_empty());
    }

    #[test]
    fn sample_size_within_binomial_band() {
        let mut spec = basic_spec(17);
        spec.population_size = 10_000;
        spec.strata = vec![StratumDesign {
            bracket_lo: 0.0,
            bracket_hi: None,
            special_forms_prob: 0.0,
            usefulness_probs: vec![1.0],
            sampling_rate: 0.1,
        }];
        let pop = generate_population(&spec).unwrap();
        let sample = draw_stratified_sample(&pop, &spec, 23).unwrap();
        let n = sample.data.sample_size() as f64;
        let sigma = (10_000.0_f64 * 0.1 * 0.9).sqrt();
        assert!(
            (n - 1_000.0).abs() < 3.0 * sigma,
            "n = {n} outside 1000 ± 3σ"
        );
    }

    #[test]
    fn different_seeds_differ() {
        let spec = basic_spec(1);
        let pop = generate_population(&spec).unwrap();
        let a = draw_stratified_sample(&pop, &spec, 100).unwrap();
        let b = draw_stratified_sample(&pop, &spec, 101).unwrap();
        assert_ne!(
            a.data.implicate(1).unwrap().ids(),
            b.data.implicate(1).unwrap().ids()
        );
    }

    #[test]
    fn oracle_uniform_values() {
        let values = vec![1.0; 10];
        let share = oracle_top_share(&values, 0.9).unwrap();
        assert!((share - 0.1).abs() < 1e-15);
    }

    #[test]
    fn oracle_weighted_expansion() {
        // units {1,2,5,10} with weights {3,3,2,2} expanded to unit weights
        let mut values = Vec::new();
        for (v, w) in [(1.0, 3), (2.0, 3), (5.0, 2), (10.0, 2)] {
            values.extend(std::iter::repeat_n(v, w));
        }
        let share = oracle_top_share(&values, 0.9).unwrap();
        assert!((share - 10.0 / 39.0).abs() < 1e-15);
    }

    #[test]
    fn oracle_half_split() {
        let share = oracle_top_share(&[1.0, 1.0, 1.0, 3.0], 0.5).unwrap();
        assert!((share - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn oracle_rejects_nonfinite() {
        assert!(oracle_top_share(&[1.0, f64::NAN], 0.5).is_err());
        assert!(oracle_top_share(&[1.0, 2.0], 1.0).is_err());
    }
}
