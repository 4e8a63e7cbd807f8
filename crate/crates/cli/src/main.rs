//! Command-line pipeline: synthesize populations, draw design-based samples,
//! estimate top shares, quantify their uncertainty, capitalize incomes into
//! wealth, fit trends, and project income concentration through the growth
//! model. Every subcommand writes its artifacts plus a machine-readable run
//! manifest into the output directory; stochastic subcommands take explicit
//! seeds and replay bit-identically.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use sharevar_core::capitalize::{self, CapitalizationSpec, NonfinRule, RateSolution};
use sharevar_core::growthsim;
use sharevar_core::microdata::{
    draw_stratified_sample, generate_population, ColumnSchema, MicrodataSet, Population,
    StrataFile, SyntheticPopulationSpec,
};
use sharevar_core::topshare::{self, ShareQuery, DEFAULT_K_SET};
use sharevar_core::trend;
use sharevar_core::uncertainty::{self, BootstrapOptions};
use sharevar_core::ErrorClass;

const EXIT_OK: i32 = 0;
const EXIT_VALIDATION: i32 = 1;
const EXIT_NUMERICAL: i32 = 2;
const EXIT_USAGE: i32 = 64;

#[derive(Parser)]
#[command(
    name = "sharevar",
    version,
    about = "Top-share estimation with survey-design uncertainty and growth-model projections"
)]
struct Cli {
    /// Directory artifacts are written into.
    #[arg(long, global = true, env = "SHAREVAR_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Cap the worker-thread count; results never depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic population with exact ground truth.
    Synth {
        /// Population spec JSON (size, body, tail, strata design, seed).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "population.csv")]
        population: String,
        #[arg(long, default_value = "strata.json")]
        strata: String,
    },
    /// Draw a stratified Bernoulli sample from a population.
    Sample {
        #[arg(long)]
        population: PathBuf,
        /// The population spec (supplies per-stratum sampling rates).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "sample.csv")]
        out: String,
    },
    /// Estimate top shares: point estimate, per-implicate estimates, and the
    /// imputation spread when the data carries multiple implicates.
    Shares {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "income")]
        variable: String,
        /// Bottom fractions k; repeat the flag for several. Defaults to the
        /// standard set 0.9 .. 0.9999.
        #[arg(long = "k")]
        ks: Vec<f64>,
        #[arg(long, default_value = "shares.json")]
        out: String,
    },
    /// Full uncertainty pipeline: cluster strata, draw bootstrap replicates,
    /// combine sampling and imputation error, report the interval.
    Bootstrap {
        #[arg(long)]
        input: PathBuf,
        /// Strata profiles JSON written by `synth` (or hand-built).
        #[arg(long)]
        strata: PathBuf,
        #[arg(long, default_value = "income")]
        variable: String,
        #[arg(long, default_value_t = 0.9)]
        k: f64,
        #[arg(long, default_value_t = 999)]
        replicates: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Also report the percentile-bootstrap interval.
        #[arg(long)]
        percentile_ci: bool,
        #[arg(long, default_value = "bootstrap.json")]
        out: String,
    },
    /// Capitalize per-category asset incomes into wealth estimates.
    Capitalize {
        #[arg(long)]
        input: PathBuf,
        /// Capitalization spec JSON (categories, FA totals, regime).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "capitalized.csv")]
        out: String,
        #[arg(long, default_value = "rates.json")]
        rates: String,
    },
    /// Linear trend regression of a series of estimates on time.
    Trend {
        /// CSV with columns year (or x), estimate (or y), and se.
        #[arg(long)]
        input: PathBuf,
        /// Weight by inverse squared standard errors (requires an se column).
        #[arg(long)]
        weighted: bool,
        /// Report the percent change of the fitted value from x0 to x1.
        #[arg(long)]
        x0: Option<f64>,
        #[arg(long)]
        x1: Option<f64>,
        #[arg(long, default_value = "trend.json")]
        out: String,
        /// Also write the fitted line with pointwise 95% bands.
        #[arg(long)]
        fitted: Option<String>,
    },
    /// Monte Carlo confidence envelope of growth-model projections.
    Simulate {
        /// Experiment JSON: calibration input plus optional shock overrides.
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "envelope.csv")]
        out: String,
    },
}

#[derive(Debug)]
struct CliError {
    message: String,
    exit: i32,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            exit: EXIT_VALIDATION,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

fn from_class(class: ErrorClass, message: String) -> CliError {
    CliError {
        message,
        exit: match class {
            ErrorClass::Validation => EXIT_VALIDATION,
            ErrorClass::Numerical => EXIT_NUMERICAL,
        },
    }
}

macro_rules! impl_from_core_error {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                from_class(e.class(), e.to_string())
            }
        }
    )*};
}

impl_from_core_error!(
    sharevar_core::microdata::MicrodataError,
    sharevar_core::topshare::ShareError,
    sharevar_core::uncertainty::UncertaintyError,
    sharevar_core::capitalize::CapitalizeError,
    sharevar_core::trend::TrendError,
    sharevar_core::growthsim::GrowthError
);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::validation(e.to_string())
    }
}

/// Everything needed to replay a run exactly.
#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    argv: Vec<String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    seed: Option<u64>,
    threads: Option<usize>,
    version: &'static str,
    wall_time_s: f64,
}

fn main() {
    let exit = match Cli::try_parse() {
        Ok(cli) => match run(cli) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit
            }
        },
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    EXIT_OK
                }
                _ => {
                    eprint!("{e}");
                    EXIT_USAGE
                }
            }
        }
    };
    std::process::exit(exit);
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::validation(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&cli.out_dir)?;

    let started = Instant::now();
    let argv: Vec<String> = std::env::args().collect();
    let (name, inputs, outputs, seed) = dispatch(&cli)?;

    let manifest = RunManifest {
        command: name.to_string(),
        argv,
        inputs,
        outputs,
        seed,
        threads: cli.threads,
        version: env!("CARGO_PKG_VERSION"),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let manifest_path = cli.out_dir.join(format!("{name}_manifest.json"));
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("serializable"),
    )?;
    Ok(())
}

type RunOutcome = (&'static str, Vec<String>, Vec<String>, Option<u64>);

fn dispatch(cli: &Cli) -> Result<RunOutcome, CliError> {
    let dir = &cli.out_dir;
    match &cli.command {
        Command::Synth {
            spec,
            population,
            strata,
        } => {
            let spec_json: SyntheticPopulationSpec = read_json(spec)?;
            let pop = generate_population(&spec_json)?;
            let pop_path = dir.join(population);
            let mut file = std::fs::File::create(&pop_path)?;
            pop.write_csv(&mut file)?;

            let mut profiles = spec_json.stratum_profiles();
            for p in &mut profiles {
                p.size = pop.strata.iter().filter(|&&s| s == p.stratum_id).count();
            }
            profiles.retain(|p| p.size > 0);
            let strata_path = dir.join(strata);
            StrataFile {
                ordinal_range: spec_json.strata.len() as u32,
                profiles,
            }
            .save(&strata_path)?;

            eprintln!(
                "synth: {} units, {} strata occupied",
                pop.len(),
                count_distinct(&pop.strata)
            );
            Ok((
                "synth",
                vec![display(spec)],
                vec![display(&pop_path), display(&strata_path)],
                Some(spec_json.seed),
            ))
        }

        Command::Sample {
            population,
            spec,
            seed,
            out,
        } => {
            let spec_json: SyntheticPopulationSpec = read_json(spec)?;
            let pop = Population::read_csv(open(population)?)?;
            let outcome = draw_stratified_sample(&pop, &spec_json, *seed)?;
            for warning in &outcome.warnings {
                eprintln!("warning: {warning}");
            }
            let out_path = dir.join(out);
            outcome.data.save_csv(&out_path)?;
            eprintln!(
                "sample: n = {}, N = {:.1}",
                outcome.data.sample_size(),
                outcome.data.population_total()
            );
            Ok((
                "sample",
                vec![display(population), display(spec)],
                vec![display(&out_path)],
                Some(*seed),
            ))
        }

        Command::Shares {
            input,
            variable,
            ks,
            out,
        } => {
            let data = MicrodataSet::load_csv(input, &ColumnSchema::default())?;
            let ks = if ks.is_empty() {
                DEFAULT_K_SET.to_vec()
            } else {
                ks.clone()
            };
            let mut estimates = Vec::new();
            for &k in &ks {
                let mut est = topshare::estimate_for_set(&data, &ShareQuery::new(variable, k))?;
                if data.implicate_count() > 1 {
                    let sigma2 = uncertainty::imputation_error(&est.per_implicate, est.point)?;
                    est.sigma2 = Some(sigma2);
                }
                est.dataset_id = Some(display(input));
                estimates.push(est);
            }
            let out_path = dir.join(out);
            write_json(&out_path, &estimates)?;
            Ok((
                "shares",
                vec![display(input)],
                vec![display(&out_path)],
                None,
            ))
        }

        Command::Bootstrap {
            input,
            strata,
            variable,
            k,
            replicates,
            seed,
            level,
            percentile_ci,
            out,
        } => {
            let data = MicrodataSet::load_csv(input, &ColumnSchema::default())?;
            let strata_file = StrataFile::load(strata)?;
            let options = BootstrapOptions {
                replicates: *replicates,
                level: *level,
                percentile_ci: *percentile_ci,
                ordinal_range: strata_file.ordinal_range.max(2),
                candidate_clusters: None,
            };
            let report = uncertainty::bootstrap_share(
                &data,
                &strata_file.profiles,
                &ShareQuery::new(variable, *k),
                &options,
                *seed,
            )?;
            for warning in &report.warnings {
                eprintln!("warning: {warning}");
            }
            let out_path = dir.join(out);
            write_json(&out_path, &report)?;
            eprintln!(
                "bootstrap: point = {:.6}, sigma1 = {:.6}, sigma2 = {:.6}, sigma = {:.6}",
                report.estimate.point,
                report.estimate.sigma1.unwrap_or(f64::NAN),
                report.estimate.sigma2.unwrap_or(f64::NAN),
                report.estimate.sigma.unwrap_or(f64::NAN),
            );
            Ok((
                "bootstrap",
                vec![display(input), display(strata)],
                vec![display(&out_path)],
                Some(*seed),
            ))
        }

        Command::Capitalize {
            input,
            spec,
            out,
            rates,
        } => {
            let data = MicrodataSet::load_csv(input, &ColumnSchema::default())?;
            let cap_spec: CapitalizationSpec = read_json(spec)?;
            let (wealth, solutions) = capitalize_dataset(&data, &cap_spec)?;
            let with_wealth = data.with_column("wealth_cap", wealth)?;
            let out_path = dir.join(out);
            with_wealth.save_csv(&out_path)?;
            let rates_path = dir.join(rates);
            write_json(&rates_path, &solutions)?;
            Ok((
                "capitalize",
                vec![display(input), display(spec)],
                vec![display(&out_path), display(&rates_path)],
                None,
            ))
        }

        Command::Trend {
            input,
            weighted,
            x0,
            x1,
            out,
            fitted,
        } => {
            let series = read_trend_series(input)?;
            let fit = if *weighted {
                let se = series
                    .se
                    .ok_or_else(|| CliError::validation("--weighted requires an 'se' column"))?;
                trend::wls_fit(&series.x, &series.y, &se)?
            } else {
                trend::ols_fit(&series.x, &series.y)?
            };
            let percent_change = match (x0, x1) {
                (Some(a), Some(b)) => Some(PercentChange {
                    x0: *a,
                    x1: *b,
                    percent: trend::trend_percent_change(&fit, *a, *b)?,
                }),
                (None, None) => None,
                _ => {
                    return Err(CliError::validation(
                        "--x0 and --x1 must be given together",
                    ))
                }
            };
            let mut outputs = Vec::new();
            if let Some(fitted_name) = fitted {
                let points = trend::fitted_series(&fit, &series.x)?;
                let fitted_path = dir.join(fitted_name);
                let mut w = std::fs::File::create(&fitted_path)?;
                use std::io::Write;
                writeln!(w, "year,fitted,lower95,upper95")?;
                for p in &points {
                    writeln!(w, "{},{},{},{}", p.x, p.fitted, p.lower95, p.upper95)?;
                }
                outputs.push(display(&fitted_path));
            }
            let report = TrendReport {
                weighted: *weighted,
                fit,
                percent_change,
            };
            let out_path = dir.join(out);
            write_json(&out_path, &report)?;
            outputs.insert(0, display(&out_path));
            Ok(("trend", vec![display(input)], outputs, None))
        }

        Command::Simulate { calib, seed, out } => {
            let experiment: growthsim::ExperimentSpec = read_json(calib)?;
            let bands =
                growthsim::mc_envelope(&experiment.calibration, &experiment.shock, *seed)?;
            let out_path = dir.join(out);
            let mut file = std::fs::File::create(&out_path)?;
            growthsim::write_envelope_csv(&bands, &mut file)?;
            for band in &bands {
                if !band.excluded_draws.is_empty() {
                    eprintln!(
                        "warning: sigma_H = {}: excluded {} infeasible draws {:?}",
                        band.sigma_high,
                        band.excluded_draws.len(),
                        band.excluded_draws
                    );
                }
                if let Some(last) = band.points.last() {
                    eprintln!(
                        "simulate: sigma_H = {}: year {} median {:.4} [{:.4}, {:.4}]",
                        band.sigma_high, last.year, last.median, last.lower95, last.upper95
                    );
                }
            }
            Ok((
                "simulate",
                vec![display(calib)],
                vec![display(&out_path)],
                Some(*seed),
            ))
        }
    }
}

#[derive(Debug, Serialize)]
struct PercentChange {
    x0: f64,
    x1: f64,
    percent: f64,
}

#[derive(Debug, Serialize)]
struct TrendReport {
    weighted: bool,
    fit: trend::RegressionResult,
    percent_change: Option<PercentChange>,
}

/// Run capitalization separately within each implicate, returning the wealth
/// column in stored row order plus the per-implicate rate solutions.
fn capitalize_dataset(
    data: &MicrodataSet,
    spec: &CapitalizationSpec,
) -> Result<(Vec<f64>, Vec<RateSolution>), CliError> {
    let mut wealth = Vec::with_capacity(data.row_count());
    let mut solutions = Vec::new();
    for view in data.implicates() {
        let weights = view.weights();
        let mut columns = Vec::new();
        for name in &spec.categories {
            let column_name = format!("income_{name}");
            let incomes = view.values(&column_name)?;
            let fa = *spec.fa_totals.get(name).ok_or_else(|| {
                CliError::validation(format!("no FA total for category '{name}'"))
            })?;
            columns.push((name.as_str(), incomes, fa));
        }
        let category_data: Vec<capitalize::CategoryData<'_>> = columns
            .iter()
            .map(|(name, incomes, fa)| capitalize::CategoryData {
                name,
                incomes,
                fa_total: *fa,
            })
            .collect();
        let nonfin: Vec<f64> = match &spec.nonfin_rule {
            NonfinRule::Zero => vec![0.0; view.len()],
            NonfinRule::Column { name } => view.values(name)?.to_vec(),
        };
        let result =
            capitalize::run_capitalization(&category_data, weights, &nonfin, &spec.regime)?;
        wealth.extend_from_slice(&result.wealth);
        solutions.push(result.rates);
    }
    Ok((wealth, solutions))
}

struct TrendSeries {
    x: Vec<f64>,
    y: Vec<f64>,
    se: Option<Vec<f64>>,
}

fn read_trend_series(path: &Path) -> Result<TrendSeries, CliError> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        .clone();
    let find = |names: &[&str]| {
        names
            .iter()
            .find_map(|n| headers.iter().position(|h| h.eq_ignore_ascii_case(n)))
    };
    let x_col =
        find(&["year", "x"]).ok_or_else(|| CliError::validation("need a 'year' or 'x' column"))?;
    let y_col = find(&["estimate", "y", "point"])
        .ok_or_else(|| CliError::validation("need an 'estimate' or 'y' column"))?;
    let se_col = find(&["se", "sigma"]);

    let mut series = TrendSeries {
        x: Vec::new(),
        y: Vec::new(),
        se: se_col.map(|_| Vec::new()),
    };
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CliError::validation(format!("row {}: {e}", idx + 1)))?;
        let parse = |col: usize| -> Result<f64, CliError> {
            record
                .get(col)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| CliError::validation(format!("row {}: bad number", idx + 1)))
        };
        series.x.push(parse(x_col)?);
        series.y.push(parse(y_col)?);
        if let (Some(se), Some(col)) = (series.se.as_mut(), se_col) {
            se.push(parse(col)?);
        }
    }
    Ok(series)
}

fn open(path: &Path) -> Result<std::fs::File, CliError> {
    std::fs::File::open(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    std::fs::write(
        path,
        serde_json::to_string_pretty(value).expect("serializable"),
    )?;
    Ok(())
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn count_distinct(values: &[u32]) -> usize {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted.len()
}
