//! Weighted, stratified, multiply-imputed microdata.
//!
//! The on-disk format is a single CSV schema: reserved columns `id`,
//! `implicate`, `weight`, `stratum` (the latter two optional per schema), and
//! any number of named value columns (`income`, `wealth`, `income_div`, ...).
//! Multiply-imputed data stores the M completed copies of each respondent as
//! successive records sharing nothing but the implicate index.

mod synth;

pub use synth::{
    draw_stratified_sample, generate_population, oracle_top_share, AssetCategorySpec,
    BodyDistribution, Population, SampleOutcome, StratumDesign, SyntheticPopulationSpec,
};

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numeric::CompensatedSum;
use crate::ErrorClass;

/// Relative tolerance for the cross-implicate population-total check.
pub const IMPLICATE_TOTAL_RTOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum MicrodataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("missing required column '{0}'")]
    MissingColumn(String),
    #[error("nonpositive weight {weight} in row {row} (id {id})")]
    NonpositiveWeight { row: usize, id: u64, weight: f64 },
    #[error("implicate indices must form 1..={m}, found {found}")]
    BadImplicateIndex { m: u16, found: u16 },
    #[error("implicates have unequal sizes: {sizes:?}")]
    UnequalImplicateSizes { sizes: Vec<usize> },
    #[error(
        "population totals differ across implicates beyond relative {IMPLICATE_TOTAL_RTOL:e}: {totals:?}"
    )]
    ImplicateTotalsDiffer { totals: Vec<f64> },
    #[error("dataset is empty")]
    Empty,
    #[error("population total must be positive, got {0}")]
    NonpositiveTotal(f64),
    #[error("observation {id} is missing value column '{column}'")]
    MissingValue { id: u64, column: String },
    #[error("stratum label missing for id {id} in a stratified dataset")]
    MissingStratum { id: u64 },
    #[error("unknown value column '{0}'")]
    UnknownVariable(String),
    #[error("{0}")]
    InvalidSpec(String),
    #[error("value for id {id}, column '{column}' is not finite")]
    NonfiniteValue { id: u64, column: String },
}

impl MicrodataError {
    pub fn class(&self) -> ErrorClass {
        ErrorClass::Validation
    }
}

/// One weighted observation: a record of a sampled unit within one implicate.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub id: u64,
    /// Population units represented by this record; strictly positive.
    pub weight: f64,
    /// Sampling stratum label, when the design is stratified.
    pub stratum: Option<u32>,
    /// Implicate index in 1..=M.
    pub implicate: u16,
    /// Named variables (income, wealth, per-asset incomes, ...).
    pub values: BTreeMap<String, f64>,
}

impl Observation {
    pub fn new(id: u64, weight: f64) -> Self {
        Self {
            id,
            weight,
            stratum: None,
            implicate: 1,
            values: BTreeMap::new(),
        }
    }

    pub fn with_value(mut self, name: &str, value: f64) -> Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn with_stratum(mut self, stratum: u32) -> Self {
        self.stratum = Some(stratum);
        self
    }

    pub fn with_implicate(mut self, m: u16) -> Self {
        self.implicate = m;
        self
    }
}

/// Column mapping for CSV ingestion.
///
/// `values: None` treats every non-reserved column as a value column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub id: String,
    pub weight: String,
    pub implicate: Option<String>,
    pub stratum: Option<String>,
    pub values: Option<Vec<String>>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            weight: "weight".into(),
            implicate: Some("implicate".into()),
            stratum: Some("stratum".into()),
            values: None,
        }
    }
}

/// A validated, immutable set of weighted observations.
///
/// Rows are stored column-wise, grouped contiguously by implicate (stable
/// within each implicate in input order). Immutable after construction, so
/// views can be shared freely across parallel workers.
#[derive(Debug, Clone)]
pub struct MicrodataSet {
    ids: Vec<u64>,
    weights: Vec<f64>,
    strata: Option<Vec<u32>>,
    implicates: Vec<u16>,
    columns: Vec<(String, Vec<f64>)>,
    implicate_count: u16,
    rows_per_implicate: usize,
    population_total: f64,
}

impl MicrodataSet {
    /// Validate and assemble a dataset from observations.
    pub fn from_observations(observations: Vec<Observation>) -> Result<Self, MicrodataError> {
        if observations.is_empty() {
            return Err(MicrodataError::Empty);
        }

        let m = observations.iter().map(|o| o.implicate).max().unwrap_or(1);
        if observations.iter().any(|o| o.implicate == 0) {
            return Err(MicrodataError::BadImplicateIndex { m, found: 0 });
        }

        let column_names: Vec<String> = observations[0].values.keys().cloned().collect();
        let stratified = observations.iter().any(|o| o.stratum.is_some());

        let mut by_implicate: Vec<Vec<&Observation>> = vec![Vec::new(); m as usize];
        for obs in &observations {
            if obs.weight <= 0.0 || !obs.weight.is_finite() {
                return Err(MicrodataError::NonpositiveWeight {
                    row: 0,
                    id: obs.id,
                    weight: obs.weight,
                });
            }
            if stratified && obs.stratum.is_none() {
                return Err(MicrodataError::MissingStratum { id: obs.id });
            }
            for name in &column_names {
                match obs.values.get(name) {
                    None => {
                        return Err(MicrodataError::MissingValue {
                            id: obs.id,
                            column: name.clone(),
                        })
                    }
                    Some(v) if !v.is_finite() => {
                        return Err(MicrodataError::NonfiniteValue {
                            id: obs.id,
                            column: name.clone(),
                        })
                    }
                    Some(_) => {}
                }
            }
            if obs.values.len() != column_names.len() {
                let extra = obs
                    .values
                    .keys()
                    .find(|k| !column_names.contains(k))
                    .cloned()
                    .unwrap_or_default();
                return Err(MicrodataError::MissingValue {
                    id: observations[0].id,
                    column: extra,
                });
            }
            by_implicate[(obs.implicate - 1) as usize].push(obs);
        }

        let sizes: Vec<usize> = by_implicate.iter().map(|v| v.len()).collect();
        if sizes.contains(&0) {
            let found = sizes.iter().position(|&s| s == 0).unwrap() as u16 + 1;
            return Err(MicrodataError::BadImplicateIndex { m, found });
        }
        if sizes.iter().any(|&s| s != sizes[0]) {
            return Err(MicrodataError::UnequalImplicateSizes { sizes });
        }
        let rows_per_implicate = sizes[0];

        let totals: Vec<f64> = by_implicate
            .iter()
            .map(|rows| {
                let mut acc = CompensatedSum::new();
                for o in rows {
                    acc.add(o.weight);
                }
                acc.value()
            })
            .collect();
        let n_total = totals[0];
        if n_total <= 0.0 {
            return Err(MicrodataError::NonpositiveTotal(n_total));
        }
        if totals
            .iter()
            .any(|&t| (t - n_total).abs() > IMPLICATE_TOTAL_RTOL * n_total.abs())
        {
            return Err(MicrodataError::ImplicateTotalsDiffer { totals });
        }

        let n_rows = observations.len();
        let mut ids = Vec::with_capacity(n_rows);
        let mut weights = Vec::with_capacity(n_rows);
        let mut strata = if stratified {
            Some(Vec::with_capacity(n_rows))
        } else {
            None
        };
        let mut implicates = Vec::with_capacity(n_rows);
        let mut columns: Vec<(String, Vec<f64>)> = column_names
            .iter()
            .map(|n| (n.clone(), Vec::with_capacity(n_rows)))
            .collect();

        for rows in &by_implicate {
            for obs in rows {
                ids.push(obs.id);
                weights.push(obs.weight);
                if let Some(s) = strata.as_mut() {
                    s.push(obs.stratum.expect("checked above"));
                }
                implicates.push(obs.implicate);
                for (name, col) in columns.iter_mut() {
                    col.push(obs.values[name]);
                }
            }
        }

        Ok(Self {
            ids,
            weights,
            strata,
            implicates,
            columns,
            implicate_count: m,
            rows_per_implicate,
            population_total: n_total,
        })
    }

    /// Number of implicates M.
    pub fn implicate_count(&self) -> u16 {
        self.implicate_count
    }

    /// Sample size n within one implicate.
    pub fn sample_size(&self) -> usize {
        self.rows_per_implicate
    }

    /// Total number of stored rows (n × M).
    pub fn row_count(&self) -> usize {
        self.ids.len()
    }

    /// Population total N = Σ wᵢ within one implicate.
    pub fn population_total(&self) -> f64 {
        self.population_total
    }

    pub fn is_stratified(&self) -> bool {
        self.strata.is_some()
    }

    /// Names of the value columns, in stored order.
    pub fn variable_names(&self) -> Vec<&str> {
        self.columns.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn has_variable(&self, name: &str) -> bool {
        self.columns.iter().any(|(n, _)| n == name)
    }

    /// View of one implicate (1-based index).
    pub fn implicate(&self, m: u16) -> Result<ImplicateView<'_>, MicrodataError> {
        if m == 0 || m > self.implicate_count {
            return Err(MicrodataError::BadImplicateIndex {
                m: self.implicate_count,
                found: m,
            });
        }
        let start = (m as usize - 1) * self.rows_per_implicate;
        let end = start + self.rows_per_implicate;
        Ok(ImplicateView {
            set: self,
            range: start..end,
        })
    }

    /// Iterator over all implicate views.
    pub fn implicates(&self) -> impl Iterator<Item = ImplicateView<'_>> {
        (1..=self.implicate_count).map(|m| self.implicate(m).expect("in range"))
    }

    /// Load from CSV, reporting malformed rows by 1-based data-row number.
    pub fn load_csv(path: &Path, schema: &ColumnSchema) -> Result<Self, MicrodataError> {
        let file = std::fs::File::open(path).map_err(|source| MicrodataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_csv(file, schema)
    }

    /// Load from any CSV reader. See [`MicrodataSet::load_csv`].
    pub fn read_csv<R: std::io::Read>(
        reader: R,
        schema: &ColumnSchema,
    ) -> Result<Self, MicrodataError> {
        let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| MicrodataError::Parse {
                row: 0,
                message: e.to_string(),
            })?
            .clone();
        let find = |name: &str| headers.iter().position(|h| h == name);

        let id_col = find(&schema.id).ok_or_else(|| MicrodataError::MissingColumn(schema.id.clone()))?;
        let weight_col = find(&schema.weight)
            .ok_or_else(|| MicrodataError::MissingColumn(schema.weight.clone()))?;
        let implicate_col = schema.implicate.as_ref().and_then(|c| find(c));
        let stratum_col = schema.stratum.as_ref().and_then(|c| find(c));

        let reserved: Vec<usize> = [Some(id_col), Some(weight_col), implicate_col, stratum_col]
            .into_iter()
            .flatten()
            .collect();
        let value_cols: Vec<(String, usize)> = match &schema.values {
            Some(names) => names
                .iter()
                .map(|n| {
                    find(n)
                        .map(|i| (n.clone(), i))
                        .ok_or_else(|| MicrodataError::MissingColumn(n.clone()))
                })
                .collect::<Result<_, _>>()?,
            None => headers
                .iter()
                .enumerate()
                .filter(|(i, _)| !reserved.contains(i))
                .map(|(i, h)| (h.to_string(), i))
                .collect(),
        };

        let mut observations = Vec::new();
        for (idx, record) in rdr.records().enumerate() {
            let row = idx + 1; // 1-based data row
            let record = record.map_err(|e| MicrodataError::Parse {
                row,
                message: e.to_string(),
            })?;
            let field = |col: usize| -> &str { record.get(col).unwrap_or("") };
            let parse_f64 = |col: usize, what: &str| -> Result<f64, MicrodataError> {
                field(col).trim().parse::<f64>().map_err(|_| MicrodataError::Parse {
                    row,
                    message: format!("cannot parse {what} '{}'", field(col)),
                })
            };

            let id = field(id_col)
                .trim()
                .parse::<u64>()
                .map_err(|_| MicrodataError::Parse {
                    row,
                    message: format!("cannot parse id '{}'", field(id_col)),
                })?;
            let weight = parse_f64(weight_col, "weight")?;
            if weight <= 0.0 || !weight.is_finite() {
                return Err(MicrodataError::NonpositiveWeight { row, id, weight });
            }
            let implicate = match implicate_col {
                Some(c) => field(c)
                    .trim()
                    .parse::<u16>()
                    .map_err(|_| MicrodataError::Parse {
                        row,
                        message: format!("cannot parse implicate '{}'", field(c)),
                    })?,
                None => 1,
            };
            let stratum = match stratum_col {
                Some(c) if !field(c).trim().is_empty() => {
                    Some(field(c).trim().parse::<u32>().map_err(|_| {
                        MicrodataError::Parse {
                            row,
                            message: format!("cannot parse stratum '{}'", field(c)),
                        }
                    })?)
                }
                _ => None,
            };

            let mut values = BTreeMap::new();
            for (name, col) in &value_cols {
                values.insert(name.clone(), parse_f64(*col, name)?);
            }

            observations.push(Observation {
                id,
                weight,
                stratum,
                implicate,
                values,
            });
        }

        Self::from_observations(observations)
    }

    /// Write the dataset back out in the canonical CSV schema.
    ///
    /// Floats are written in shortest round-trip form, so load → save → load
    /// is lossless for all declared columns.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let mut header = vec!["id".to_string(), "implicate".into(), "weight".into()];
        if self.strata.is_some() {
            header.push("stratum".into());
        }
        for (name, _) in &self.columns {
            header.push(name.clone());
        }
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.ids.len() {
            let mut fields = vec![
                self.ids[i].to_string(),
                self.implicates[i].to_string(),
                format_f64(self.weights[i]),
            ];
            if let Some(s) = &self.strata {
                fields.push(s[i].to_string());
            }
            for (_, col) in &self.columns {
                fields.push(format_f64(col[i]));
            }
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), MicrodataError> {
        let mut file = std::fs::File::create(path).map_err(|source| MicrodataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.write_csv(&mut file).map_err(|source| MicrodataError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// A copy of this dataset with one extra value column appended to every
    /// implicate (used to attach capitalized wealth to a loaded dataset).
    pub fn with_column(&self, name: &str, per_row: Vec<f64>) -> Result<Self, MicrodataError> {
        if per_row.len() != self.row_count() {
            return Err(MicrodataError::InvalidSpec(format!(
                "column '{name}' has {} rows, dataset has {}",
                per_row.len(),
                self.row_count()
            )));
        }
        if self.has_variable(name) {
            return Err(MicrodataError::InvalidSpec(format!(
                "column '{name}' already exists"
            )));
        }
        let mut copy = self.clone();
        copy.columns.push((name.to_string(), per_row));
        Ok(copy)
    }
}

/// Borrowed view of a single implicate's rows.
#[derive(Debug, Clone)]
pub struct ImplicateView<'a> {
    set: &'a MicrodataSet,
    range: std::ops::Range<usize>,
}

impl<'a> ImplicateView<'a> {
    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }

    pub fn ids(&self) -> &'a [u64] {
        &self.set.ids[self.range.clone()]
    }

    pub fn weights(&self) -> &'a [f64] {
        &self.set.weights[self.range.clone()]
    }

    pub fn strata(&self) -> Option<&'a [u32]> {
        self.set.strata.as_ref().map(|s| &s[self.range.clone()])
    }

    pub fn values(&self, variable: &str) -> Result<&'a [f64], MicrodataError> {
        self.set
            .columns
            .iter()
            .find(|(n, _)| n == variable)
            .map(|(_, col)| &col[self.range.clone()])
            .ok_or_else(|| MicrodataError::UnknownVariable(variable.to_string()))
    }
}

/// Shortest round-trip decimal form of a float.
fn format_f64(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

/// Description of one sampling stratum used as clustering input: an ordinal
/// income-bracket rank plus two nominal design flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumProfile {
    pub stratum_id: u32,
    /// Number of sampled observations n_j in this stratum.
    pub size: usize,
    /// Ordinal rank in 1..=R.
    pub income_bracket_rank: u32,
    /// Nominal category: presence/absence of special forms.
    pub special_forms_flag: u32,
    /// Nominal category: usefulness code.
    pub usefulness_code: u32,
}

impl fmt::Display for StratumProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "stratum {} (n={}, bracket {}, forms {}, code {})",
            self.stratum_id,
            self.size,
            self.income_bracket_rank,
            self.special_forms_flag,
            self.usefulness_code
        )
    }
}

/// On-disk description of a sample's strata: the declared ordinal range R of
/// the income-bracket ranks plus one profile per stratum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrataFile {
    pub ordinal_range: u32,
    pub profiles: Vec<StratumProfile>,
}

impl StrataFile {
    pub fn load(path: &Path) -> Result<Self, MicrodataError> {
        let text = std::fs::read_to_string(path).map_err(|source| MicrodataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| MicrodataError::Parse {
            row: 0,
            message: format!("{}: {e}", path.display()),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), MicrodataError> {
        let text = serde_json::to_string_pretty(self).expect("serializable");
        std::fs::write(path, text).map_err(|source| MicrodataError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
