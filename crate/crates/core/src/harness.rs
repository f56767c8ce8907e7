//! End-to-end experiment runner: ingestion, the per-series pipeline,
//! replicate loops, timing capture and report emission.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::evaluation::{
    anova_oneway, mape_h, mase_h, naive_mae, report_bands, smape_h, tukey_hsd, AnovaResult, Metric,
    MetricTable, MetricTriple, TukeyResult,
};
use crate::preprocessing::{PreprocessOptions, PreprocessRecord};
use crate::selection::{select_inputs, SearchMethod, SelectionResult};
use crate::series::TimeSeries;
use crate::simulators::{
    henon_generate, henon_row, mackey_glass_generate, mackey_glass_row, HenonConfig,
    MackeyGlassConfig,
};
use crate::solver::{fit, Hyperparams, MsvrModel, SolverOptions};
use crate::strategies::{
    embed, forecast_direct, forecast_iterated, forecast_mimo, forecast_naive,
    forecast_seasonal_naive, ModelKind, Strategy,
};
use crate::tuning::{tune, PsoConfig};

pub const OUTPUT_DIR_ENV: &str = "MSVR_OUTPUT_DIR";
pub const THREADS_ENV: &str = "MSVR_THREADS";

/// Where a manifest's series come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeriesSource {
    Henon {
        /// 1-based rows of the simulation table.
        #[serde(default)]
        rows: Vec<usize>,
        #[serde(default)]
        configs: Vec<HenonConfig>,
        #[serde(default)]
        period: Option<usize>,
    },
    MackeyGlass {
        #[serde(default)]
        rows: Vec<usize>,
        #[serde(default)]
        configs: Vec<MackeyGlassConfig>,
        #[serde(default)]
        period: Option<usize>,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        period: Option<usize>,
    },
    Inline {
        id: String,
        values: Vec<f64>,
        #[serde(default)]
        period: Option<usize>,
    },
}

/// How the direct strategy's H models are tuned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectTuning {
    /// One PSO search per horizon model.
    #[default]
    PerHorizon,
    /// One PSO search on the 1-step dataset, reused by all H models.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentManifest {
    pub name: String,
    pub series: Vec<SeriesSource>,
    pub holdout: usize,
    pub strategies: Vec<Strategy>,
    pub replicates: usize,
    /// The only source of randomness; every PSO seed is derived from it.
    pub seed: u64,
    pub max_lag: usize,
    pub selection: SearchMethod,
    pub cv_folds: usize,
    pub direct_tuning: DirectTuning,
    pub pso: PsoConfig,
    pub preprocessing: PreprocessOptions,
    pub solver: SolverOptions,
    pub alpha: f64,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    /// Directory relative CSV paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for ExperimentManifest {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            series: Vec::new(),
            holdout: 18,
            strategies: Strategy::ALL.to_vec(),
            replicates: 5,
            seed: 0,
            max_lag: 20,
            selection: SearchMethod::ExhaustiveWindows,
            cv_folds: 5,
            direct_tuning: DirectTuning::PerHorizon,
            pso: PsoConfig::default(),
            preprocessing: PreprocessOptions::default(),
            solver: SolverOptions::default(),
            alpha: 0.05,
            output_dir: None,
            threads: None,
            base_dir: None,
        }
    }
}

impl ExperimentManifest {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut m = Self::from_toml_str(&fs::read_to_string(path)?)?;
        m.base_dir = path.parent().map(Path::to_path_buf);
        Ok(m)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Experiment(format!("manifest serialization: {e}")))
    }

    /// Applies `MSVR_OUTPUT_DIR` and `MSVR_THREADS` when set.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                self.output_dir = Some(PathBuf::from(dir));
            }
        }
        if let Ok(t) = std::env::var(THREADS_ENV) {
            if !t.is_empty() {
                let n: usize = t
                    .parse()
                    .map_err(|_| Error::Input(format!("{THREADS_ENV} must be a positive integer, got '{t}'")))?;
                self.threads = Some(n);
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.series.is_empty() {
            return input_err("manifest lists no series");
        }
        if self.holdout == 0 {
            return input_err("holdout must be at least 1");
        }
        if self.replicates == 0 {
            return input_err("replicates must be at least 1");
        }
        if self.max_lag == 0 {
            return input_err("max_lag must be at least 1");
        }
        if self.cv_folds < 2 {
            return input_err("cv_folds must be at least 2");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return input_err(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.threads == Some(0) {
            return input_err("threads must be at least 1");
        }
        let mut seen = self.strategies.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.strategies.len() {
            return input_err("strategies must not repeat");
        }
        self.pso.validate()?;
        for s in &self.series {
            if let SeriesSource::Henon { rows, .. } | SeriesSource::MackeyGlass { rows, .. } = s {
                if rows.iter().any(|r| !(1..=20).contains(r)) {
                    return input_err("simulation table rows are numbered 1..=20");
                }
            }
        }
        Ok(())
    }

    /// Model labels compared in reports: the benchmarks, then each strategy.
    pub fn models(&self) -> Vec<ModelKind> {
        let mut m = vec![ModelKind::Naive, ModelKind::SeasonalNaive];
        m.extend(self.strategies.iter().map(|s| s.model_kind()));
        m
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        }
    }
}

/// A series that could not be loaded or processed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFailure {
    pub id: String,
    pub stage: String,
    pub message: String,
}

/// Generates or reads every series of a manifest; failures are kept per source item.
pub fn load_series(m: &ExperimentManifest) -> Vec<std::result::Result<TimeSeries, SeriesFailure>> {
    let fail = |id: String, e: Error| SeriesFailure {
        id,
        stage: "load".into(),
        message: e.to_string(),
    };
    let with_period = |r: Result<TimeSeries>, id: String, period: Option<usize>| {
        r.and_then(|s| TimeSeries::new(id.clone(), s.values().to_vec(), period))
            .map_err(|e| fail(id, e))
    };
    let mut out = Vec::new();
    for src in &m.series {
        match src {
            SeriesSource::Henon { rows, configs, period } => {
                for r in rows {
                    let id = format!("henon-{r:02}");
                    out.push(with_period(henon_row(*r).and_then(|c| henon_generate(&c)), id, *period));
                }
                for (i, c) in configs.iter().enumerate() {
                    out.push(with_period(henon_generate(c), format!("henon-c{}", i + 1), *period));
                }
            }
            SeriesSource::MackeyGlass { rows, configs, period } => {
                for r in rows {
                    let id = format!("mackey-glass-{r:02}");
                    out.push(with_period(
                        mackey_glass_row(*r).and_then(|c| mackey_glass_generate(&c)),
                        id,
                        *period,
                    ));
                }
                for (i, c) in configs.iter().enumerate() {
                    out.push(with_period(mackey_glass_generate(c), format!("mackey-glass-c{}", i + 1), *period));
                }
            }
            SeriesSource::Csv { path, period } => match ingest_csv(&m.resolve(path)) {
                Ok(list) => out.extend(list.into_iter().map(|mut s| {
                    s.period = *period;
                    Ok(s)
                })),
                Err(e) => out.push(Err(fail(path.display().to_string(), e))),
            },
            SeriesSource::Inline { id, values, period } => {
                out.push(TimeSeries::new(id.clone(), values.clone(), *period).map_err(|e| fail(id.clone(), e)));
            }
        }
    }
    out
}

fn parse_cell(cell: &str) -> Option<std::result::Result<f64, ()>> {
    let t = cell.trim();
    if t.is_empty() {
        None
    } else {
        Some(t.parse::<f64>().map_err(|_| ()))
    }
}

/// Reads series from a CSV file.
///
/// A first row of non-numeric names is a header and each column is a series.
/// When instead the first cell of every row is a name, each row is a series.
/// Without names, columns are series called `s1`, `s2`, … Trailing blank cells
/// are allowed so series may differ in length.
pub fn ingest_csv(path: &Path) -> Result<Vec<TimeSeries>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    while rows.last().is_some_and(|r| r.iter().all(|c| c.trim().is_empty())) {
        rows.pop();
    }
    if rows.is_empty() {
        return input_err(format!("{} contains no data", path.display()));
    }
    let is_name = |c: &str| matches!(parse_cell(c), Some(Err(())));
    let header = rows[0].iter().any(|c| is_name(c))
        && rows[0].iter().all(|c| c.trim().is_empty() || is_name(c));
    let row_labels = !header && rows.iter().all(|r| r.first().is_some_and(|c| is_name(c)));

    // (id, [(file row, file column, cell)])
    let mut cols: Vec<(String, Vec<(usize, usize, String)>)> = Vec::new();
    if row_labels {
        for (ri, r) in rows.iter().enumerate() {
            let cells = r.iter().enumerate().skip(1).map(|(ci, c)| (ri + 1, ci + 1, c.clone())).collect();
            cols.push((r[0].trim().to_string(), cells));
        }
    } else {
        let width = rows.iter().map(Vec::len).max().unwrap_or(0);
        let body_start = usize::from(header);
        for ci in 0..width {
            let id = if header {
                rows[0].get(ci).map(|c| c.trim().to_string()).unwrap_or_default()
            } else {
                format!("s{}", ci + 1)
            };
            let cells = rows[body_start..]
                .iter()
                .enumerate()
                .map(|(ri, r)| (ri + body_start + 1, ci + 1, r.get(ci).cloned().unwrap_or_default()))
                .collect();
            cols.push((id, cells));
        }
        if header {
            cols.retain(|(id, cells)| !(id.is_empty() && cells.iter().all(|c| c.2.trim().is_empty())));
        }
    }

    let mut out = Vec::new();
    for (id, cells) in cols {
        let mut values = Vec::new();
        let mut ended: Option<(usize, usize)> = None;
        for (row, column, cell) in cells {
            match parse_cell(&cell) {
                None => {
                    ended.get_or_insert((row, column));
                }
                Some(Err(())) => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        row,
                        column,
                        message: format!("cannot parse '{}' as a number", cell.trim()),
                    })
                }
                Some(Ok(v)) => {
                    if let Some((r, c)) = ended {
                        return Err(Error::Parse {
                            path: path.to_path_buf(),
                            row: r,
                            column: c,
                            message: format!("blank cell inside series '{id}'"),
                        });
                    }
                    values.push(v);
                }
            }
        }
        let id = if id.is_empty() { format!("s{}", out.len() + 1) } else { id };
        out.push(TimeSeries::new(id, values, None)?);
    }
    if out.is_empty() {
        return input_err(format!("{} contains no series", path.display()));
    }
    Ok(out)
}

/// SplitMix64-style mixing of a root seed with a key path.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    path.iter().fold(mix(root), |acc, k| mix(acc ^ mix(*k)))
}

/// Replicate-independent work on one estimation sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedSeries {
    /// Raw estimation sample.
    pub estimation: TimeSeries,
    /// Estimation sample after preprocessing.
    pub transformed: TimeSeries,
    pub record: PreprocessRecord,
    pub selections: BTreeMap<Strategy, SelectionResult>,
    /// In-sample one-step naive MAE, the MASE denominator.
    pub naive_scale: f64,
}

/// Preprocesses and selects lags using the estimation sample only.
pub fn prepare_series(estimation: &TimeSeries, m: &ExperimentManifest) -> Result<PreparedSeries> {
    let (values, record) = PreprocessRecord::fit(estimation.values(), estimation.period, &m.preprocessing)?;
    let transformed = estimation.with_values(values)?;
    let mut selections = BTreeMap::new();
    for s in &m.strategies {
        let sel = select_inputs(&transformed, m.max_lag, m.holdout, *s, m.selection)?;
        selections.insert(*s, sel);
    }
    Ok(PreparedSeries {
        estimation: estimation.clone(),
        transformed,
        record,
        selections,
        naive_scale: naive_mae(estimation.values())?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedModel {
    /// 1-based horizon for direct models, 0 otherwise.
    pub horizon: usize,
    pub seed: u64,
    pub hyper: Hyperparams,
    pub cv_mse: f64,
    pub evaluations: usize,
}

/// One (series, replicate, strategy) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitOutcome {
    pub strategy: Strategy,
    /// Forecasts on the original scale.
    pub forecasts: Vec<f64>,
    pub tuned: Vec<TunedModel>,
    pub train: Duration,
    pub predict: Duration,
}

fn tune_and_fit(
    ds: &crate::series::EmbeddedDataset,
    seed: u64,
    horizon: usize,
    m: &ExperimentManifest,
) -> Result<(MsvrModel, TunedModel)> {
    let pso = PsoConfig { seed, ..m.pso };
    let t = tune(ds, &pso, m.cv_folds, &m.solver)?;
    let model = fit(ds, &t.hyper, &m.solver)?;
    Ok((
        model,
        TunedModel {
            horizon,
            seed,
            hyper: t.hyper,
            cv_mse: t.best_fitness,
            evaluations: t.evaluations,
        },
    ))
}

/// Tunes, fits and forecasts one strategy; `seed` is the unit's derived seed.
pub fn run_unit(prep: &PreparedSeries, strategy: Strategy, seed: u64, m: &ExperimentManifest) -> Result<UnitOutcome> {
    let h = m.holdout;
    let sel = prep
        .selections
        .get(&strategy)
        .ok_or_else(|| Error::Experiment(format!("no lag selection for {strategy}")))?;
    let lags = &sel.chosen_lags;
    let series = &prep.transformed;
    let started = Instant::now();
    let embedding = embed(series, lags, h, strategy)?;
    let (forecast, tuned) = match strategy {
        Strategy::Iterated | Strategy::Mimo => {
            let ds = embedding
                .into_single()
                .ok_or_else(|| Error::Experiment("expected a single dataset".into()))?;
            let (model, t) = tune_and_fit(&ds, seed, 0, m)?;
            let train = started.elapsed();
            let mut f = if strategy == Strategy::Iterated {
                forecast_iterated(&model, series, lags, h)?
            } else {
                forecast_mimo(&model, series, lags, h)?
            };
            f.elapsed_train = train;
            (f, vec![t])
        }
        Strategy::Direct => {
            let sets = embedding
                .into_per_horizon()
                .ok_or_else(|| Error::Experiment("expected per-horizon datasets".into()))?;
            let mut models = Vec::with_capacity(h);
            let mut tuned = Vec::with_capacity(h);
            let shared = match m.direct_tuning {
                DirectTuning::Shared => Some(tune(&sets[0], &PsoConfig { seed, ..m.pso }, m.cv_folds, &m.solver)?),
                DirectTuning::PerHorizon => None,
            };
            for (i, ds) in sets.iter().enumerate() {
                match &shared {
                    Some(t) => {
                        models.push(fit(ds, &t.hyper, &m.solver)?);
                        tuned.push(TunedModel {
                            horizon: i + 1,
                            seed,
                            hyper: t.hyper,
                            cv_mse: t.best_fitness,
                            evaluations: if i == 0 { t.evaluations } else { 0 },
                        });
                    }
                    None => {
                        let (model, t) = tune_and_fit(ds, derive_seed(seed, &[i as u64 + 1]), i + 1, m)?;
                        models.push(model);
                        tuned.push(t);
                    }
                }
            }
            let train = started.elapsed();
            let mut f = forecast_direct(&models, series, lags, h)?;
            f.elapsed_train = train;
            (f, tuned)
        }
    };
    let forecasts = prep.record.inverse(&forecast.point_forecasts, prep.estimation.len());
    if let Some(i) = forecasts.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite forecast at step {} after rollback", i + 1)));
    }
    Ok(UnitOutcome {
        strategy,
        forecasts,
        tuned,
        train: forecast.elapsed_train,
        predict: forecast.elapsed_predict,
    })
}

/// Benchmark forecasts on the raw estimation sample. Without a period the
/// seasonal naive forecast uses period 1.
pub fn benchmark_forecasts(estimation: &TimeSeries, horizon: usize) -> Result<BTreeMap<ModelKind, Vec<f64>>> {
    let mut out = BTreeMap::new();
    out.insert(ModelKind::Naive, forecast_naive(estimation, horizon)?.point_forecasts);
    let seasonal = if estimation.period.is_some() {
        estimation.clone()
    } else {
        TimeSeries::new(estimation.id.clone(), estimation.values().to_vec(), Some(1))?
    };
    out.insert(ModelKind::SeasonalNaive, forecast_seasonal_naive(&seasonal, horizon)?.point_forecasts);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub series: String,
    pub strategy: ModelKind,
    pub replicate: usize,
    pub train_ms: f64,
    pub predict_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionTally {
    pub model: ModelKind,
    pub metric: Metric,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyOutcome {
    pub metric: Metric,
    /// A single horizon ("7") or a band ("1-18").
    pub horizon: String,
    pub anova: Option<AnovaResult>,
    pub result: Option<TukeyResult>,
    pub note: Option<String>,
}

impl TukeyOutcome {
    pub fn line(&self) -> String {
        let body = match (&self.result, &self.note) {
            (Some(r), _) => r.chain(),
            (None, Some(n)) => format!("not performed: {n}"),
            (None, None) => "not performed".into(),
        };
        format!("{} h={}: {body}", self.metric.label(), self.horizon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub id: String,
    pub length: usize,
    pub estimation_length: usize,
    pub period: Option<usize>,
    pub steps_applied: Vec<crate::preprocessing::Step>,
    pub lags: BTreeMap<Strategy, crate::series::LagSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub name: String,
    pub horizon: usize,
    pub replicates: usize,
    pub models: Vec<ModelKind>,
    /// Mean over replicates.
    pub table: MetricTable,
    pub replicate_tables: Vec<MetricTable>,
    pub exclusions: Vec<ExclusionTally>,
    pub tukey: Vec<TukeyOutcome>,
    pub timings: Vec<TimingRecord>,
    pub series: Vec<SeriesSummary>,
    pub failures: Vec<SeriesFailure>,
}

impl EvaluationReport {
    /// Band averages, average ranks and the full-range Tukey chains as text.
    pub fn summary_text(&self) -> Result<String> {
        let mut s = format!(
            "{}: {} series, {} replicates, horizon {}\n",
            self.name,
            self.series.len(),
            self.replicates,
            self.horizon
        );
        let bands = report_bands(self.horizon);
        for metric in Metric::ALL {
            s.push_str(&format!("\n{}\n{:<10}", metric.label(), "model"));
            for b in &bands {
                s.push_str(&format!("{:>12}", b.to_string()));
            }
            s.push_str(&format!("{:>8}\n", "rank"));
            let ranks = self.table.average_ranks(metric)?;
            for (mi, model) in self.table.models.iter().enumerate() {
                s.push_str(&format!("{:<10}", model.label()));
                for b in &bands {
                    s.push_str(&format!("{:>12.4}", self.table.band_average(mi, metric, *b)));
                }
                s.push_str(&format!("{:>8.3}\n", ranks[mi]));
            }
        }
        let full = format!("1-{}", self.horizon);
        s.push('\n');
        for t in self.tukey.iter().filter(|t| t.horizon == full) {
            s.push_str(&t.line());
            s.push('\n');
        }
        for f in &self.failures {
            s.push_str(&format!("failed: {} ({}): {}\n", f.id, f.stage, f.message));
        }
        Ok(s)
    }

    pub fn timing_csv(&self) -> Result<String> {
        let mut grouped: BTreeMap<(String, ModelKind), (f64, f64, usize)> = BTreeMap::new();
        for t in &self.timings {
            let e = grouped.entry((t.series.clone(), t.strategy)).or_default();
            e.0 += t.train_ms;
            e.1 += t.predict_ms;
            e.2 += 1;
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["series", "strategy", "train_ms", "predict_ms"])?;
        for ((series, model), (train, predict, n)) in grouped {
            w.write_record([
                series,
                model.label().to_string(),
                format!("{:.3}", train / n as f64),
                format!("{:.3}", predict / n as f64),
            ])?;
        }
        csv_string(w)
    }

    pub fn tukey_text(&self) -> String {
        self.tukey.iter().map(|t| t.line() + "\n").collect()
    }

    /// `metric,horizon,model_a,model_b,significant` for every tested pair.
    pub fn tukey_pairs_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "horizon", "model_a", "model_b", "significant"])?;
        for t in &self.tukey {
            let Some(r) = &t.result else { continue };
            for i in 0..r.ordered.len() {
                for j in i + 1..r.ordered.len() {
                    w.write_record([
                        t.metric.label(),
                        &t.horizon,
                        &r.ordered[i],
                        &r.ordered[j],
                        if r.significant[i][j] { "true" } else { "false" },
                    ])?;
                }
            }
        }
        csv_string(w)
    }

    /// Writes every table derived from the report into `dir`.
    pub fn write_tables(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.csv"), self.table.to_csv()?)?;
        for (r, t) in self.replicate_tables.iter().enumerate() {
            fs::write(dir.join(format!("metrics_replicate_{}.csv", r + 1)), t.to_csv()?)?;
        }
        fs::write(dir.join("tukey.txt"), self.tukey_text())?;
        fs::write(dir.join("tukey_pairs.csv"), self.tukey_pairs_csv()?)?;
        fs::write(dir.join("timing.csv"), self.timing_csv()?)?;
        fs::write(dir.join("summary.txt"), self.summary_text()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSeed {
    pub series: String,
    pub replicate: usize,
    pub strategy: Strategy,
    pub seed: u64,
}

/// Every seed and switch needed to rerun an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reproducibility {
    pub crate_version: String,
    pub root_seed: u64,
    pub unit_seeds: Vec<UnitSeed>,
    pub holdout: usize,
    pub replicates: usize,
    pub max_lag: usize,
    pub selection: SearchMethod,
    pub cv_folds: usize,
    pub direct_tuning: DirectTuning,
    pub preprocessing: PreprocessOptions,
    pub solver: SolverOptions,
    pub pso: PsoConfig,
    pub alpha: f64,
    pub seasonal_naive_fallback_period: usize,
}

/// Per-series artifact: data, preprocessing, selections and every forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesArtifact {
    pub id: String,
    pub estimation_length: usize,
    pub actuals: Vec<f64>,
    pub naive_scale: f64,
    pub preprocessing: PreprocessRecord,
    pub selections: BTreeMap<Strategy, SelectionResult>,
    /// `forecasts[replicate][model label]`
    pub forecasts: Vec<BTreeMap<ModelKind, Vec<f64>>>,
    /// `tuning[replicate][strategy]`
    pub tuning: Vec<BTreeMap<Strategy, Vec<TunedModel>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRun {
    pub report: EvaluationReport,
    pub artifacts: Vec<SeriesArtifact>,
    pub reproducibility: Reproducibility,
}

impl ExperimentRun {
    /// Writes the manifest copy, reproducibility record, tables, report and per-series artifacts.
    pub fn write(&self, manifest: &ExperimentManifest, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("series"))?;
        fs::write(dir.join("manifest.toml"), manifest.to_toml()?)?;
        fs::write(
            dir.join("reproducibility.json"),
            serde_json::to_string_pretty(&self.reproducibility)?,
        )?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&self.report)?)?;
        self.report.write_tables(dir)?;
        for a in &self.artifacts {
            let name: String = a
                .id
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
                .collect();
            fs::write(dir.join("series").join(format!("{name}.json")), serde_json::to_string_pretty(a)?)?;
        }
        Ok(())
    }
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Experiment(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

struct Prepared {
    index: usize,
    prep: PreparedSeries,
    actuals: Vec<f64>,
}

fn prepare_all(m: &ExperimentManifest) -> (Vec<Prepared>, Vec<SeriesFailure>) {
    let mut prepared = Vec::new();
    let mut failures = Vec::new();
    for (index, loaded) in load_series(m).into_iter().enumerate() {
        let series = match loaded {
            Ok(s) => s,
            Err(f) => {
                warn!("series {} failed to load: {}", f.id, f.message);
                failures.push(f);
                continue;
            }
        };
        let result = series
            .split(m.holdout)
            .and_then(|(est, actuals)| prepare_series(&est, m).map(|p| (p, actuals)));
        match result {
            Ok((prep, actuals)) => prepared.push(Prepared { index, prep, actuals }),
            Err(e) => {
                warn!("series {} failed during preparation: {e}", series.id);
                failures.push(SeriesFailure {
                    id: series.id.clone(),
                    stage: "prepare".into(),
                    message: e.to_string(),
                });
            }
        }
    }
    (prepared, failures)
}

fn unit_seed(m: &ExperimentManifest, series_index: usize, replicate: usize, strategy: Strategy) -> u64 {
    let s = Strategy::ALL.iter().position(|x| *x == strategy).unwrap_or(0);
    derive_seed(m.seed, &[series_index as u64, replicate as u64, s as u64])
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Runs the full experiment and, when an output directory is configured, writes it out.
pub fn run_experiment(m: &ExperimentManifest) -> Result<ExperimentRun> {
    m.validate()?;
    let run = with_pool(m.threads, || execute(m))??;
    if let Some(dir) = &m.output_dir {
        run.write(m, dir)?;
        info!("wrote results to {}", dir.display());
    }
    Ok(run)
}

fn execute(m: &ExperimentManifest) -> Result<ExperimentRun> {
    let (prepared, mut failures) = prepare_all(m);
    let units: Vec<(usize, usize, Strategy)> = (0..prepared.len())
        .flat_map(|p| (0..m.replicates).flat_map(move |r| m.strategies.iter().map(move |s| (p, r, *s))))
        .collect();
    let outcomes: Vec<Result<UnitOutcome>> = units
        .par_iter()
        .map(|&(p, r, s)| {
            let pr = &prepared[p];
            run_unit(&pr.prep, s, unit_seed(m, pr.index, r, s), m)
        })
        .collect();

    // Drop a series when any of its units failed so every model covers the same series.
    let mut by_series: BTreeMap<usize, Vec<Vec<UnitOutcome>>> = BTreeMap::new();
    let mut failed: BTreeMap<usize, String> = BTreeMap::new();
    for ((p, r, s), out) in units.iter().zip(outcomes) {
        match out {
            Ok(o) => {
                let reps = by_series.entry(*p).or_insert_with(|| vec![Vec::new(); m.replicates]);
                reps[*r].push(o);
            }
            Err(e) => {
                failed.entry(*p).or_insert_with(|| format!("{s} replicate {}: {e}", r + 1));
            }
        }
    }
    let mut kept: Vec<(&Prepared, Vec<BTreeMap<ModelKind, Vec<f64>>>, Vec<Vec<UnitOutcome>>)> = Vec::new();
    for (p, pr) in prepared.iter().enumerate() {
        if let Some(msg) = failed.get(&p) {
            warn!("series {} failed: {msg}", pr.prep.estimation.id);
            failures.push(SeriesFailure {
                id: pr.prep.estimation.id.clone(),
                stage: "forecast".into(),
                message: msg.clone(),
            });
            continue;
        }
        let bench = match benchmark_forecasts(&pr.prep.estimation, m.holdout) {
            Ok(b) => b,
            Err(e) => {
                failures.push(SeriesFailure {
                    id: pr.prep.estimation.id.clone(),
                    stage: "benchmark".into(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let units = by_series.remove(&p).unwrap_or_default();
        let forecasts = units
            .iter()
            .map(|rep| {
                let mut f = bench.clone();
                for o in rep {
                    f.insert(o.strategy.model_kind(), o.forecasts.clone());
                }
                f
            })
            .collect();
        kept.push((pr, forecasts, units));
    }
    if kept.is_empty() {
        let detail: Vec<String> = failures.iter().map(|f| format!("{}: {}", f.id, f.message)).collect();
        return Err(Error::Experiment(format!("every series failed ({})", detail.join("; "))));
    }

    let models = m.models();
    let h = m.holdout;
    let scales: Vec<f64> = kept.iter().map(|k| k.0.prep.naive_scale).collect();
    let mut exclusions: BTreeMap<(ModelKind, Metric), usize> = BTreeMap::new();
    let mut replicate_tables = Vec::with_capacity(m.replicates);
    for r in 0..m.replicates {
        let mut entries = Vec::with_capacity(models.len());
        for model in &models {
            let mut row = Vec::with_capacity(h);
            for step in 0..h {
                let actual: Vec<f64> = kept.iter().map(|k| k.0.actuals[step]).collect();
                let fc: Vec<f64> = kept.iter().map(|k| k.1[r][model][step]).collect();
                let mape = mape_h(&actual, &fc)?;
                let smape = smape_h(&actual, &fc)?;
                let mase = mase_h(&actual, &fc, &scales)?;
                for (metric, v) in [(Metric::Mape, mape), (Metric::Smape, smape), (Metric::Mase, mase)] {
                    *exclusions.entry((*model, metric)).or_default() += v.excluded;
                }
                row.push(MetricTriple {
                    mape: mape.value,
                    smape: smape.value,
                    mase: mase.value,
                });
            }
            entries.push(row);
        }
        replicate_tables.push(MetricTable {
            models: models.clone(),
            horizon: h,
            entries,
        });
    }
    let table = mean_table(&replicate_tables);

    let term_groups = |metric: Metric, steps: std::ops::Range<usize>| -> Vec<(String, Vec<f64>)> {
        models
            .iter()
            .map(|model| {
                let mut obs = Vec::new();
                for r in 0..m.replicates {
                    for (si, k) in kept.iter().enumerate() {
                        let terms: Vec<f64> = steps
                            .clone()
                            .filter_map(|step| metric.term(k.0.actuals[step], k.1[r][model][step], scales[si]))
                            .collect();
                        if terms.len() == steps.len() {
                            obs.push(terms.iter().sum::<f64>() / terms.len() as f64);
                        }
                    }
                }
                (model.label().to_string(), obs)
            })
            .collect()
    };
    let mut tukey = Vec::new();
    for metric in Metric::ALL {
        let mut ranges: Vec<(String, std::ops::Range<usize>)> =
            (0..h).map(|s| ((s + 1).to_string(), s..s + 1)).collect();
        ranges.push((format!("1-{h}"), 0..h));
        for (label, steps) in ranges {
            tukey.push(compare(metric, label, &term_groups(metric, steps), m.alpha));
        }
    }

    let mut timings = Vec::new();
    let mut series = Vec::new();
    let mut artifacts = Vec::new();
    let mut unit_seeds = Vec::new();
    for (pr, forecasts, units) in &kept {
        let id = pr.prep.estimation.id.clone();
        for (r, rep) in units.iter().enumerate() {
            for o in rep {
                timings.push(TimingRecord {
                    series: id.clone(),
                    strategy: o.strategy.model_kind(),
                    replicate: r + 1,
                    train_ms: ms(o.train),
                    predict_ms: ms(o.predict),
                    total_ms: ms(o.train + o.predict),
                });
                unit_seeds.push(UnitSeed {
                    series: id.clone(),
                    replicate: r + 1,
                    strategy: o.strategy,
                    seed: unit_seed(m, pr.index, r, o.strategy),
                });
            }
        }
        series.push(SeriesSummary {
            id: id.clone(),
            length: pr.prep.estimation.len() + pr.actuals.len(),
            estimation_length: pr.prep.estimation.len(),
            period: pr.prep.estimation.period,
            steps_applied: pr.prep.record.steps_applied.clone(),
            lags: pr
                .prep
                .selections
                .iter()
                .map(|(s, sel)| (*s, sel.chosen_lags.clone()))
                .collect(),
        });
        artifacts.push(SeriesArtifact {
            id,
            estimation_length: pr.prep.estimation.len(),
            actuals: pr.actuals.clone(),
            naive_scale: pr.prep.naive_scale,
            preprocessing: pr.prep.record.clone(),
            selections: pr.prep.selections.clone(),
            forecasts: forecasts.clone(),
            tuning: units
                .iter()
                .map(|rep| rep.iter().map(|o| (o.strategy, o.tuned.clone())).collect())
                .collect(),
        });
    }

    let report = EvaluationReport {
        name: m.name.clone(),
        horizon: h,
        replicates: m.replicates,
        models: models.clone(),
        table,
        replicate_tables,
        exclusions: exclusions
            .into_iter()
            .map(|((model, metric), excluded)| ExclusionTally { model, metric, excluded })
            .collect(),
        tukey,
        timings,
        series,
        failures,
    };
    let reproducibility = Reproducibility {
        crate_version: env!("CARGO_PKG_VERSION").into(),
        root_seed: m.seed,
        unit_seeds,
        holdout: m.holdout,
        replicates: m.replicates,
        max_lag: m.max_lag,
        selection: m.selection,
        cv_folds: m.cv_folds,
        direct_tuning: m.direct_tuning,
        preprocessing: m.preprocessing,
        solver: m.solver,
        pso: m.pso,
        alpha: m.alpha,
        seasonal_naive_fallback_period: 1,
    };
    Ok(ExperimentRun {
        report,
        artifacts,
        reproducibility,
    })
}

fn mean_table(tables: &[MetricTable]) -> MetricTable {
    let n = tables.len() as f64;
    let first = &tables[0];
    let entries = (0..first.models.len())
        .map(|mi| {
            (0..first.horizon)
                .map(|h| {
                    let sum = |f: fn(&MetricTriple) -> f64| tables.iter().map(|t| f(&t.entries[mi][h])).sum::<f64>() / n;
                    MetricTriple {
                        mape: sum(|t| t.mape),
                        smape: sum(|t| t.smape),
                        mase: sum(|t| t.mase),
                    }
                })
                .collect()
        })
        .collect();
    MetricTable {
        models: first.models.clone(),
        horizon: first.horizon,
        entries,
    }
}

fn compare(metric: Metric, horizon: String, groups: &[(String, Vec<f64>)], alpha: f64) -> TukeyOutcome {
    let slices: Vec<&[f64]> = groups.iter().map(|g| g.1.as_slice()).collect();
    let anova = match anova_oneway(&slices) {
        Ok(a) => a,
        Err(e) => {
            return TukeyOutcome {
                metric,
                horizon,
                anova: None,
                result: None,
                note: Some(e.to_string()),
            }
        }
    };
    match tukey_hsd(groups, alpha) {
        Ok(r) => TukeyOutcome {
            metric,
            horizon,
            anova: Some(anova),
            result: Some(r),
            note: None,
        },
        Err(e) => TukeyOutcome {
            metric,
            horizon,
            anova: Some(anova),
            result: None,
            note: Some(e.to_string()),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub timings: Vec<TimingRecord>,
    /// Total train + predict milliseconds per strategy.
    pub totals_ms: BTreeMap<Strategy, f64>,
    pub dir_over_iter: Option<f64>,
    pub dir_over_mimo: Option<f64>,
    pub iter_over_mimo: Option<f64>,
    pub failures: Vec<SeriesFailure>,
}

impl BenchSummary {
    pub fn text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.totals_ms {
            s.push_str(&format!("{:<10} {:>12.1} ms\n", k.model_kind().label(), v));
        }
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.2}"));
        s.push_str(&format!("DIR/ITER  {}\n", fmt(self.dir_over_iter)));
        s.push_str(&format!("DIR/MIMO  {}\n", fmt(self.dir_over_mimo)));
        s.push_str(&format!("ITER/MIMO {}\n", fmt(self.iter_over_mimo)));
        s
    }

    pub fn timing_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["series", "strategy", "train_ms", "predict_ms"])?;
        for t in &self.timings {
            w.write_record([
                t.series.clone(),
                t.strategy.label().to_string(),
                format!("{:.3}", t.train_ms),
                format!("{:.3}", t.predict_ms),
            ])?;
        }
        csv_string(w)
    }
}

/// Times every strategy sequentially on every series with the same tuning budget.
pub fn benchmark_strategies(m: &ExperimentManifest) -> Result<BenchSummary> {
    m.validate()?;
    let summary = with_pool(m.threads, || bench(m))??;
    if let Some(dir) = &m.output_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("timing.csv"), summary.timing_csv()?)?;
        fs::write(dir.join("bench.json"), serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(summary)
}

fn bench(m: &ExperimentManifest) -> Result<BenchSummary> {
    let (prepared, mut failures) = prepare_all(m);
    let mut timings = Vec::new();
    let mut totals: BTreeMap<Strategy, f64> = BTreeMap::new();
    for pr in &prepared {
        for r in 0..m.replicates {
            for s in &m.strategies {
                match run_unit(&pr.prep, *s, unit_seed(m, pr.index, r, *s), m) {
                    Ok(o) => {
                        let total = ms(o.train + o.predict);
                        *totals.entry(*s).or_default() += total;
                        timings.push(TimingRecord {
                            series: pr.prep.estimation.id.clone(),
                            strategy: s.model_kind(),
                            replicate: r + 1,
                            train_ms: ms(o.train),
                            predict_ms: ms(o.predict),
                            total_ms: total,
                        });
                    }
                    Err(e) => failures.push(SeriesFailure {
                        id: pr.prep.estimation.id.clone(),
                        stage: format!("bench {s}"),
                        message: e.to_string(),
                    }),
                }
            }
        }
    }
    if timings.is_empty() {
        return Err(Error::Experiment("benchmark produced no timings".into()));
    }
    let ratio = |a: Strategy, b: Strategy| match (totals.get(&a), totals.get(&b)) {
        (Some(x), Some(y)) if *y > 0.0 => Some(x / y),
        _ => None,
    };
    Ok(BenchSummary {
        dir_over_iter: ratio(Strategy::Direct, Strategy::Iterated),
        dir_over_mimo: ratio(Strategy::Direct, Strategy::Mimo),
        iter_over_mimo: ratio(Strategy::Iterated, Strategy::Mimo),
        timings,
        totals_ms: totals,
        failures,
    })
}
