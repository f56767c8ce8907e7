//! Core data carriers: observed series, lag sets and lag-embedded datasets.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};

/// An ordered sequence of finite observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub id: String,
    values: Vec<f64>,
    /// Seasonal cycle length (12 for monthly data), if known.
    pub period: Option<usize>,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, values: Vec<f64>, period: Option<usize>) -> Result<Self> {
        let id = id.into();
        if values.len() < 2 {
            return input_err(format!(
                "series '{id}' needs at least 2 observations, got {}",
                values.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return input_err(format!("series '{id}' has a non-finite value at index {i}"));
        }
        if period == Some(0) {
            return input_err(format!("series '{id}' has period 0"));
        }
        Ok(Self { id, values, period })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Splits off the last `holdout` observations.
    pub fn split(&self, holdout: usize) -> Result<(TimeSeries, Vec<f64>)> {
        if holdout == 0 || holdout + 2 > self.len() {
            return input_err(format!(
                "cannot hold out {holdout} of {} observations in series '{}'",
                self.len(),
                self.id
            ));
        }
        let cut = self.len() - holdout;
        let est = TimeSeries {
            id: self.id.clone(),
            values: self.values[..cut].to_vec(),
            period: self.period,
        };
        Ok((est, self.values[cut..].to_vec()))
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<TimeSeries> {
        TimeSeries::new(self.id.clone(), values, self.period)
    }
}

/// A set of lags relative to the current time `t`: lag 0 is `φ_t`, lag 1 is
/// `φ_{t-1}` and so on. Stored sorted and deduplicated; the input vector
/// follows this order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LagSet(Vec<usize>);

impl LagSet {
    pub fn new(mut lags: Vec<usize>) -> Result<Self> {
        if lags.is_empty() {
            return input_err("lag set must not be empty");
        }
        lags.sort_unstable();
        lags.dedup();
        Ok(Self(lags))
    }

    /// The contiguous window `{t, t-1, ..., t-k+1}`.
    pub fn window(k: usize) -> Result<Self> {
        Self::new((0..k).collect())
    }

    pub fn lags(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_lag(&self) -> usize {
        *self.0.last().expect("lag set is never empty")
    }

    /// Input vector for current index `t` (0-based) read from `values`.
    pub fn input_at(&self, values: &[f64], t: usize) -> Vec<f64> {
        self.0.iter().map(|&l| values[t - l]).collect()
    }
}

impl std::fmt::Display for LagSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Input/output pairs produced by lag embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedDataset {
    pub inputs: DMatrix<f64>,
    pub outputs: DMatrix<f64>,
    pub lags: LagSet,
    /// Forecast steps held by the output columns (1-based).
    pub horizon_offsets: Vec<usize>,
    /// 0-based series index of the "current" observation of every row.
    pub row_times: Vec<usize>,
}

impl EmbeddedDataset {
    pub fn from_parts(inputs: DMatrix<f64>, outputs: DMatrix<f64>) -> Result<Self> {
        if inputs.nrows() != outputs.nrows() {
            return input_err(format!(
                "inputs have {} rows but outputs have {}",
                inputs.nrows(),
                outputs.nrows()
            ));
        }
        let d = inputs.ncols().max(1);
        Ok(Self {
            row_times: (0..inputs.nrows()).collect(),
            horizon_offsets: (1..=outputs.ncols()).collect(),
            lags: LagSet::window(d)?,
            inputs,
            outputs,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.ncols()
    }

    /// Subset of rows, preserving order.
    pub fn select_rows(&self, rows: &[usize]) -> EmbeddedDataset {
        EmbeddedDataset {
            inputs: self.inputs.select_rows(rows.iter()),
            outputs: self.outputs.select_rows(rows.iter()),
            lags: self.lags.clone(),
            horizon_offsets: self.horizon_offsets.clone(),
            row_times: rows.iter().map(|&r| self.row_times[r]).collect(),
        }
    }
}
