//! Lag embeddings and the multi-step-ahead forecasting strategies.
//!
//! * Iterated: one one-step model applied recursively, feeding predictions
//!   back once the recursion runs past the last observation.
//! * Direct: `H` models, the `h`-th trained on targets `φ_{t+h}`.
//! * MIMO: one multiple-output model returning the whole `H`-vector.
//!
//! Naive and seasonal naive forecasts serve as benchmarks.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::series::{EmbeddedDataset, LagSet, TimeSeries};
use crate::solver::MsvrModel;

/// The three model-based multi-step strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Iterated,
    Direct,
    Mimo,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Iterated, Strategy::Direct, Strategy::Mimo];

    pub fn model_kind(self) -> ModelKind {
        match self {
            Strategy::Iterated => ModelKind::Iterated,
            Strategy::Direct => ModelKind::Direct,
            Strategy::Mimo => ModelKind::Mimo,
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Iterated => "iterated",
            Strategy::Direct => "direct",
            Strategy::Mimo => "mimo",
        })
    }
}

/// Every forecaster compared in a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Naive,
    SeasonalNaive,
    Iterated,
    Direct,
    Mimo,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Naive,
        ModelKind::SeasonalNaive,
        ModelKind::Iterated,
        ModelKind::Direct,
        ModelKind::Mimo,
    ];

    /// Display label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Naive => "Naive",
            ModelKind::SeasonalNaive => "S-Naive",
            ModelKind::Iterated => "ITER-SVR",
            ModelKind::Direct => "DIR-SVR",
            ModelKind::Mimo => "MIMO-SVR",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.label() == label)
    }

    pub fn strategy(self) -> Option<Strategy> {
        match self {
            ModelKind::Iterated => Some(Strategy::Iterated),
            ModelKind::Direct => Some(Strategy::Direct),
            ModelKind::Mimo => Some(Strategy::Mimo),
            _ => None,
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    /// `φ̂_{N+1} … φ̂_{N+H}`
    pub point_forecasts: Vec<f64>,
    pub model: ModelKind,
    pub elapsed_train: Duration,
    pub elapsed_predict: Duration,
}

impl ForecastResult {
    fn new(point_forecasts: Vec<f64>, model: ModelKind, started: Instant) -> Result<Self> {
        if let Some(i) = point_forecasts.iter().position(|v| !v.is_finite()) {
            return Err(crate::Error::Numeric(format!(
                "{model} produced a non-finite forecast at step {}",
                i + 1
            )));
        }
        Ok(Self {
            point_forecasts,
            model,
            elapsed_train: Duration::ZERO,
            elapsed_predict: started.elapsed(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.point_forecasts.len()
    }
}

/// Anything that maps an input row to an output row.
pub trait Regressor {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn predict_row(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl Regressor for MsvrModel {
    fn input_dim(&self) -> usize {
        MsvrModel::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        self.n_outputs()
    }

    fn predict_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let row = DMatrix::from_row_slice(1, x.len(), x);
        Ok(self.predict(&row)?.row(0).iter().copied().collect())
    }
}

impl<R: Regressor + ?Sized> Regressor for &R {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn predict_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).predict_row(x)
    }
}

/// What [`embed`] produces for each strategy.
#[derive(Debug, Clone, PartialEq)]
pub enum Embedding {
    Single(EmbeddedDataset),
    PerHorizon(Vec<EmbeddedDataset>),
}

impl Embedding {
    pub fn into_single(self) -> Option<EmbeddedDataset> {
        match self {
            Embedding::Single(d) => Some(d),
            Embedding::PerHorizon(_) => None,
        }
    }

    pub fn into_per_horizon(self) -> Option<Vec<EmbeddedDataset>> {
        match self {
            Embedding::Single(_) => None,
            Embedding::PerHorizon(v) => Some(v),
        }
    }
}

/// Embeds `values` with rows whose current index `t` runs from `first_t` to
/// the last index that still has every requested target step in range.
pub fn embed_steps(
    values: &[f64],
    lags: &LagSet,
    steps: &[usize],
    first_t: usize,
) -> Result<EmbeddedDataset> {
    let n = values.len();
    let max_step = *steps.iter().max().unwrap_or(&0);
    if steps.is_empty() || steps.contains(&0) {
        return input_err("target steps must be non-empty and positive");
    }
    let first_t = first_t.max(lags.max_lag());
    // t + max_step ≤ n − 1
    if first_t + max_step + 1 > n {
        return input_err(format!(
            "series of length {n} is too short for max lag {} and horizon {max_step}: need at least {} observations",
            lags.max_lag(),
            lags.max_lag() + max_step + 1
        ));
    }
    let last_t = n - 1 - max_step;
    let rows = last_t - first_t + 1;
    let d = lags.len();
    let mut inputs = DMatrix::zeros(rows, d);
    let mut outputs = DMatrix::zeros(rows, steps.len());
    let mut row_times = Vec::with_capacity(rows);
    for (r, t) in (first_t..=last_t).enumerate() {
        for (c, &l) in lags.lags().iter().enumerate() {
            inputs[(r, c)] = values[t - l];
        }
        for (c, &s) in steps.iter().enumerate() {
            outputs[(r, c)] = values[t + s];
        }
        row_times.push(t);
    }
    Ok(EmbeddedDataset {
        inputs,
        outputs,
        lags: lags.clone(),
        horizon_offsets: steps.to_vec(),
        row_times,
    })
}

/// Lag-embeds a series for the given strategy.
pub fn embed(series: &TimeSeries, lags: &LagSet, horizon: usize, strategy: Strategy) -> Result<Embedding> {
    if horizon == 0 {
        return input_err("horizon must be at least 1");
    }
    let v = series.values();
    Ok(match strategy {
        Strategy::Iterated => Embedding::Single(embed_steps(v, lags, &[1], 0)?),
        Strategy::Direct => Embedding::PerHorizon(
            (1..=horizon)
                .map(|h| embed_steps(v, lags, &[h], 0))
                .collect::<Result<_>>()?,
        ),
        Strategy::Mimo => {
            let steps: Vec<usize> = (1..=horizon).collect();
            Embedding::Single(embed_steps(v, lags, &steps, 0)?)
        }
    })
}

fn check_series_for_lags(series: &TimeSeries, lags: &LagSet, horizon: usize) -> Result<()> {
    if horizon == 0 {
        return input_err("horizon must be at least 1");
    }
    if lags.max_lag() >= series.len() {
        return input_err(format!(
            "max lag {} needs more than {} observations",
            lags.max_lag(),
            series.len()
        ));
    }
    Ok(())
}

fn check_model<R: Regressor>(model: &R, lags: &LagSet, outputs: usize) -> Result<()> {
    if model.input_dim() != lags.len() {
        return input_err(format!(
            "model expects {} inputs but the lag set has {}",
            model.input_dim(),
            lags.len()
        ));
    }
    if model.output_dim() != outputs {
        return input_err(format!(
            "model emits {} outputs, expected {outputs}",
            model.output_dim()
        ));
    }
    Ok(())
}

/// Recursive forecasting with a one-step model.
pub fn forecast_iterated<R: Regressor>(
    model: &R,
    series: &TimeSeries,
    lags: &LagSet,
    horizon: usize,
) -> Result<ForecastResult> {
    let started = Instant::now();
    check_series_for_lags(series, lags, horizon)?;
    check_model(model, lags, 1)?;
    // Observations followed by predictions; index N−1+k is step k.
    let mut path = series.values().to_vec();
    let last = path.len() - 1;
    for h in 1..=horizon {
        let t = last + h - 1;
        let x = lags.input_at(&path, t);
        path.push(model.predict_row(&x)?[0]);
    }
    ForecastResult::new(path.split_off(last + 1), ModelKind::Iterated, started)
}

/// One model per horizon, each applied to the final observed lag vector.
pub fn forecast_direct<R: Regressor>(
    models: &[R],
    series: &TimeSeries,
    lags: &LagSet,
    horizon: usize,
) -> Result<ForecastResult> {
    let started = Instant::now();
    check_series_for_lags(series, lags, horizon)?;
    if models.len() != horizon {
        return input_err(format!(
            "direct strategy needs {horizon} models, got {}",
            models.len()
        ));
    }
    let x = lags.input_at(series.values(), series.len() - 1);
    let mut out = Vec::with_capacity(horizon);
    for m in models {
        check_model(m, lags, 1)?;
        out.push(m.predict_row(&x)?[0]);
    }
    ForecastResult::new(out, ModelKind::Direct, started)
}

/// A single multiple-output prediction from the final observed lag vector.
pub fn forecast_mimo<R: Regressor>(
    model: &R,
    series: &TimeSeries,
    lags: &LagSet,
    horizon: usize,
) -> Result<ForecastResult> {
    let started = Instant::now();
    check_series_for_lags(series, lags, horizon)?;
    check_model(model, lags, horizon)?;
    let x = lags.input_at(series.values(), series.len() - 1);
    ForecastResult::new(model.predict_row(&x)?, ModelKind::Mimo, started)
}

pub fn forecast_naive(series: &TimeSeries, horizon: usize) -> Result<ForecastResult> {
    let started = Instant::now();
    if horizon == 0 {
        return input_err("horizon must be at least 1");
    }
    ForecastResult::new(vec![series.last(); horizon], ModelKind::Naive, started)
}

/// Repeats the last observed seasonal cycle.
pub fn forecast_seasonal_naive(series: &TimeSeries, horizon: usize) -> Result<ForecastResult> {
    let started = Instant::now();
    if horizon == 0 {
        return input_err("horizon must be at least 1");
    }
    let Some(p) = series.period else {
        return input_err(format!("series '{}' has no period for seasonal naive", series.id));
    };
    let n = series.len();
    if p > n {
        return input_err(format!("period {p} exceeds series length {n}"));
    }
    let v = series.values();
    let out = (1..=horizon).map(|h| v[n - p + (h - 1) % p]).collect();
    ForecastResult::new(out, ModelKind::SeasonalNaive, started)
}
