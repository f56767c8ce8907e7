//! Invertible preprocessing: min-max scaling, classical multiplicative
//! (ratio-to-moving-average) seasonal adjustment, and Mann-Kendall-gated
//! polynomial detrending.
//!
//! Everything is fitted on the estimation sample and frozen; the same record
//! maps hold-out values and forecasts in either direction. Positions are
//! absolute 0-based indices into the original series so seasonal phase and
//! trend extrapolation line up across the estimation/hold-out boundary.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{input_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Normalize,
    /// Constant estimation sample: scaling left as the identity.
    NormalizeSkipped,
    Deseasonalize,
    Detrend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(values: &[f64]) -> Option<Self> {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (max > min).then_some(Self { min, max })
    }

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn inverse(&self, v: f64) -> f64 {
        v * (self.max - self.min) + self.min
    }
}

/// Multiplicative seasonal indices with phase anchored at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalIndices {
    pub period: usize,
    pub indices: Vec<f64>,
}

impl SeasonalIndices {
    pub fn at(&self, t: usize) -> f64 {
        self.indices[t % self.period]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    /// Ascending powers of t.
    pub coeffs: Vec<f64>,
}

impl Trend {
    pub fn at(&self, t: usize) -> f64 {
        let t = t as f64;
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }
}

/// Centered moving average of window `p`; `None` where the window does not fit.
/// Even `p` uses the 2×p average (half weights on the two end points).
pub fn centered_moving_average(values: &[f64], p: usize) -> Vec<Option<f64>> {
    let n = values.len();
    let half = p / 2;
    (0..n)
        .map(|t| {
            if t < half || t + half >= n {
                return None;
            }
            let window = &values[t - half..=t + half];
            let s = if p % 2 == 1 {
                window.iter().sum::<f64>()
            } else {
                0.5 * window[0] + window[1..p].iter().sum::<f64>() + 0.5 * window[p]
            };
            Some(s / p as f64)
        })
        .collect()
}

/// Seasonal indices by ratio to centered moving average, averaged per season
/// and rescaled to mean exactly one.
pub fn seasonal_indices(values: &[f64], period: usize) -> Result<SeasonalIndices> {
    if period < 2 {
        return input_err(format!("seasonal period must be at least 2, got {period}"));
    }
    if values.len() < 2 * period {
        return input_err(format!(
            "seasonal decomposition needs at least {} observations, got {}",
            2 * period,
            values.len()
        ));
    }
    if let Some(v) = values.iter().find(|v| **v < 0.0) {
        return Err(Error::Preprocess(format!(
            "multiplicative decomposition needs non-negative values, found {v}"
        )));
    }
    let cma = centered_moving_average(values, period);
    let mut sums = vec![0.0; period];
    let mut counts = vec![0usize; period];
    for (t, m) in cma.iter().enumerate() {
        if let Some(m) = m {
            if *m <= 0.0 {
                return Err(Error::Preprocess(format!(
                    "moving average is not positive at index {t}"
                )));
            }
            sums[t % period] += values[t] / m;
            counts[t % period] += 1;
        }
    }
    let mut indices: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| s / *c as f64).collect();
    let mean = indices.iter().sum::<f64>() / period as f64;
    for v in indices.iter_mut() {
        *v /= mean;
    }
    if indices.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Preprocess("a seasonal index is not positive".into()));
    }
    Ok(SeasonalIndices { period, indices })
}

pub fn deseasonalize(values: &[f64], period: usize) -> Result<(Vec<f64>, SeasonalIndices)> {
    let idx = seasonal_indices(values, period)?;
    let out = values.iter().enumerate().map(|(t, v)| v / idx.at(t)).collect();
    Ok((out, idx))
}

/// Multiplies the seasonal factor back; `start` is the absolute index of `values[0]`.
pub fn reseasonalize(values: &[f64], idx: &SeasonalIndices, start: usize) -> Vec<f64> {
    values.iter().enumerate().map(|(i, v)| v * idx.at(start + i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannKendall {
    pub s: i64,
    pub variance: f64,
    pub z: f64,
    pub trend_detected: bool,
}

pub fn mann_kendall(values: &[f64], alpha: f64) -> Result<MannKendall> {
    let n = values.len();
    if n < 4 {
        return input_err(format!("Mann-Kendall needs at least 4 observations, got {n}"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return input_err(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    let mut s: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            s += match values[j].partial_cmp(&values[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        if t > 1.0 {
            tie_term += t * (t - 1.0) * (2.0 * t + 5.0);
        }
        i = j + 1;
    }
    let nf = n as f64;
    let variance = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - tie_term) / 18.0;
    let z = if variance <= 0.0 || s == 0 {
        0.0
    } else if s > 0 {
        (s as f64 - 1.0) / variance.sqrt()
    } else {
        (s as f64 + 1.0) / variance.sqrt()
    };
    let crit = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - alpha / 2.0);
    Ok(MannKendall {
        s,
        variance,
        z,
        trend_detected: z.abs() > crit,
    })
}

/// Least-squares polynomial in the absolute index `t`.
pub fn fit_trend(values: &[f64], degree: usize, start: usize) -> Result<Trend> {
    let n = values.len();
    if degree >= n {
        return input_err(format!(
            "polynomial of degree {degree} is ill-conditioned for {n} observations"
        ));
    }
    let design = DMatrix::from_fn(n, degree + 1, |i, p| ((start + i) as f64).powi(p as i32));
    let y = DVector::from_column_slice(values);
    let qr = design.qr();
    let qty = qr.q().transpose() * y;
    let coeffs = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Input("trend design matrix is rank deficient".into()))?;
    Ok(Trend {
        coeffs: coeffs.iter().copied().collect(),
    })
}

pub fn detrend(values: &[f64], degree: usize) -> Result<(Vec<f64>, Trend)> {
    let trend = fit_trend(values, degree, 0)?;
    let out = values.iter().enumerate().map(|(t, v)| v - trend.at(t)).collect();
    Ok((out, trend))
}

pub fn retrend(values: &[f64], trend: &Trend, start: usize) -> Vec<f64> {
    values.iter().enumerate().map(|(i, v)| v + trend.at(start + i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessOptions {
    pub normalize: bool,
    pub deseasonalize: bool,
    pub detrend: bool,
    pub trend_degree: usize,
    /// Significance level of the Mann-Kendall gate.
    pub trend_alpha: f64,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            normalize: true,
            deseasonalize: true,
            detrend: true,
            trend_degree: 1,
            trend_alpha: 0.05,
        }
    }
}

/// Everything needed to replay or invert the preprocessing of one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessRecord {
    pub scaling: Option<MinMax>,
    pub seasonal: Option<SeasonalIndices>,
    pub trend: Option<Trend>,
    pub mann_kendall: Option<MannKendall>,
    pub steps_applied: Vec<Step>,
    /// Always "classical-ratio-to-moving-average" when seasonal adjustment runs.
    pub decomposition: Option<String>,
    pub notes: Vec<String>,
}

impl PreprocessRecord {
    pub fn identity() -> Self {
        Self {
            scaling: None,
            seasonal: None,
            trend: None,
            mann_kendall: None,
            steps_applied: Vec::new(),
            decomposition: None,
            notes: Vec::new(),
        }
    }

    /// Fits the pipeline on an estimation sample and returns its transformed values.
    pub fn fit(
        estimation: &[f64],
        period: Option<usize>,
        opts: &PreprocessOptions,
    ) -> Result<(Vec<f64>, Self)> {
        let mut rec = Self::identity();
        let mut v = estimation.to_vec();

        if opts.normalize {
            match MinMax::fit(&v) {
                Some(mm) => {
                    v.iter_mut().for_each(|x| *x = mm.forward(*x));
                    rec.scaling = Some(mm);
                    rec.steps_applied.push(Step::Normalize);
                }
                None => {
                    rec.steps_applied.push(Step::NormalizeSkipped);
                    rec.notes.push("constant estimation sample: scaling left as identity".into());
                }
            }
        }

        if let (true, Some(p)) = (opts.deseasonalize, period.filter(|p| *p >= 2)) {
            if v.len() < 2 * p {
                let msg = format!(
                    "seasonal adjustment skipped: {} observations < 2 x period {p}",
                    v.len()
                );
                warn!("{msg}");
                rec.notes.push(msg);
            } else {
                match deseasonalize(&v, p) {
                    Ok((out, idx)) => {
                        v = out;
                        rec.seasonal = Some(idx);
                        rec.steps_applied.push(Step::Deseasonalize);
                        rec.decomposition = Some("classical-ratio-to-moving-average".into());
                    }
                    Err(Error::Preprocess(msg)) => {
                        warn!("seasonal adjustment skipped: {msg}");
                        rec.notes.push(format!("seasonal adjustment skipped: {msg}"));
                    }
                    Err(e) => return Err(e),
                }
            }
        }

        if opts.detrend && v.len() >= 4 {
            let mk = mann_kendall(&v, opts.trend_alpha)?;
            rec.mann_kendall = Some(mk);
            if mk.trend_detected {
                let (out, trend) = detrend(&v, opts.trend_degree)?;
                v = out;
                rec.trend = Some(trend);
                rec.steps_applied.push(Step::Detrend);
            }
        }
        Ok((v, rec))
    }

    /// Applies the fitted steps to values whose first element sits at absolute index `start`.
    pub fn forward(&self, values: &[f64], start: usize) -> Vec<f64> {
        let mut v = values.to_vec();
        if let Some(mm) = &self.scaling {
            v.iter_mut().for_each(|x| *x = mm.forward(*x));
        }
        if let Some(idx) = &self.seasonal {
            v.iter_mut()
                .enumerate()
                .for_each(|(i, x)| *x /= idx.at(start + i));
        }
        if let Some(tr) = &self.trend {
            v.iter_mut()
                .enumerate()
                .for_each(|(i, x)| *x -= tr.at(start + i));
        }
        v
    }

    /// Rolls every step back in reverse order.
    pub fn inverse(&self, values: &[f64], start: usize) -> Vec<f64> {
        let mut v = values.to_vec();
        if let Some(tr) = &self.trend {
            v = retrend(&v, tr, start);
        }
        if let Some(idx) = &self.seasonal {
            v = reseasonalize(&v, idx, start);
        }
        if let Some(mm) = &self.scaling {
            v.iter_mut().for_each(|x| *x = mm.inverse(*x));
        }
        v
    }
}
