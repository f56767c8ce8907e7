//! Accuracy metrics per forecast horizon, one-way ANOVA and Tukey HSD.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal};
use statrs::function::gamma::ln_gamma;

use crate::error::{input_err, Error, Result};
use crate::strategies::ModelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mape,
    Smape,
    Mase,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Mape, Metric::Smape, Metric::Mase];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Mape => "MAPE",
            Metric::Smape => "SMAPE",
            Metric::Mase => "MASE",
        }
    }

    /// One series' contribution, `None` when its denominator vanishes.
    pub fn term(self, actual: f64, forecast: f64, scale: f64) -> Option<f64> {
        let err = (actual - forecast).abs();
        match self {
            Metric::Mape => (actual != 0.0).then(|| err / actual.abs() * 100.0),
            Metric::Smape => {
                let den = (actual + forecast) / 2.0;
                (den != 0.0).then(|| err / den * 100.0)
            }
            Metric::Mase => (scale > 0.0 && scale.is_finite()).then(|| err / scale),
        }
    }
}

/// A metric averaged over series, with the number of series left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub excluded: usize,
}

fn average_terms(
    metric: Metric,
    actuals: &[f64],
    forecasts: &[f64],
    scales: Option<&[f64]>,
) -> Result<MetricValue> {
    if actuals.len() != forecasts.len() {
        return input_err(format!(
            "{} actuals but {} forecasts",
            actuals.len(),
            forecasts.len()
        ));
    }
    if let Some(s) = scales {
        if s.len() != actuals.len() {
            return input_err("one naive scale per series is required");
        }
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for (i, (a, f)) in actuals.iter().zip(forecasts).enumerate() {
        let scale = scales.map_or(1.0, |s| s[i]);
        if let Some(t) = metric.term(*a, *f, scale) {
            sum += t;
            used += 1;
        }
    }
    let excluded = actuals.len() - used;
    let value = if used == 0 { f64::NAN } else { sum / used as f64 };
    Ok(MetricValue { value, excluded })
}

/// Mean absolute percentage error over series at one horizon.
pub fn mape_h(actuals: &[f64], forecasts: &[f64]) -> Result<MetricValue> {
    average_terms(Metric::Mape, actuals, forecasts, None)
}

/// Symmetric MAPE with `(φ + φ̂)/2` as denominator.
pub fn smape_h(actuals: &[f64], forecasts: &[f64]) -> Result<MetricValue> {
    average_terms(Metric::Smape, actuals, forecasts, None)
}

/// Mean absolute scaled error; `naive_maes[s]` is series `s`'s in-sample one-step naive MAE.
pub fn mase_h(actuals: &[f64], forecasts: &[f64], naive_maes: &[f64]) -> Result<MetricValue> {
    average_terms(Metric::Mase, actuals, forecasts, Some(naive_maes))
}

/// `(1/(M−1)) Σ |φ_i − φ_{i−1}|` over an estimation sample.
pub fn naive_mae(estimation: &[f64]) -> Result<f64> {
    if estimation.len() < 2 {
        return input_err("naive MAE needs at least 2 observations");
    }
    let s: f64 = estimation.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(s / (estimation.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f: f64,
    pub p: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub ms_within: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Classic one-way ANOVA.
pub fn anova_oneway(groups: &[&[f64]]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return input_err("ANOVA needs at least 2 groups");
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return input_err(format!("every ANOVA group needs 2 observations, found {}", g.len()));
    }
    if groups.iter().flat_map(|g| g.iter()).any(|v| !v.is_finite()) {
        return input_err("ANOVA observations must be finite");
    }
    let k = groups.len();
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let df_between = k - 1;
    let df_within = n - k;
    let ms_between = ss_between / df_between as f64;
    let ms_within = ss_within / df_within as f64;
    let means_equal = {
        let m0 = mean(groups[0]);
        groups.iter().all(|g| mean(g) == m0)
    };
    let (f, p) = if means_equal || ss_between == 0.0 {
        (0.0, 1.0)
    } else if ms_within == 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        let f = ms_between / ms_within;
        let dist = FisherSnedecor::new(df_between as f64, df_within as f64)
            .map_err(|e| Error::Numeric(format!("F distribution: {e}")))?;
        (f, dist.sf(f))
    };
    Ok(AnovaResult {
        f,
        p,
        df_between,
        df_within,
        ms_within,
    })
}

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl20() -> &'static (Vec<f64>, Vec<f64>) {
    static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre(20))
}

/// Composite 20-point Gauss-Legendre over `panels` equal panels of [a, b].
fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let (nodes, weights) = gl20();
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let mut s = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            s += w * f(mid + 0.5 * h * x);
        }
        total += 0.5 * h * s;
    }
    total
}

/// `P(range of k standard normals < w)`.
fn normal_range_cdf(w: f64, k: usize) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let km1 = (k - 1) as i32;
    let inner = |z: f64| {
        let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let band = std.cdf(z) - std.cdf(z - w);
        phi * band.powi(km1)
    };
    (k as f64 * integrate(inner, -8.5, 8.5 + w, 48)).min(1.0)
}

/// CDF of the studentized range with `k` groups and `df` degrees of freedom
/// (`f64::INFINITY` for the normal-range limit), by numeric double integration.
pub fn studentized_range_cdf(q: f64, k: usize, df: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    if df.is_infinite() {
        return normal_range_cdf(q, k);
    }
    // Density of s = sqrt(χ²_df / df).
    let half = df / 2.0;
    let log_norm = half * df.ln() - ln_gamma(half) - (half - 1.0) * 2f64.ln();
    let density = |s: f64| {
        if s <= 0.0 {
            0.0
        } else {
            (log_norm + (df - 1.0) * s.ln() - 0.5 * df * s * s).exp()
        }
    };
    let spread = 1.0 / (2.0 * df).sqrt();
    let upper = 1.0 + 14.0 * spread.max(0.1) + 2.0;
    integrate(|s| density(s) * normal_range_cdf(q * s, k), 0.0, upper, 48).min(1.0)
}

/// Upper `alpha` quantile of the studentized range.
pub fn studentized_range_quantile(alpha: f64, k: usize, df: f64) -> Result<f64> {
    if k < 2 {
        return input_err("studentized range needs k >= 2");
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return input_err(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    if !(df > 0.0) {
        return input_err(format!("degrees of freedom must be positive, got {df}"));
    }
    let target = 1.0 - alpha;
    let (mut lo, mut hi) = (0.0, 1.0);
    while studentized_range_cdf(hi, k, df) < target {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::Numeric("studentized range quantile did not bracket".into()));
        }
    }
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if studentized_range_cdf(mid, k, df) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Degrees of freedom of the embedded critical-value table (∞ last).
pub const Q05_DF: [f64; 6] = [5.0, 10.0, 20.0, 30.0, 60.0, f64::INFINITY];

/// q₀.₀₅ for k = 2..=6 (rows) at [`Q05_DF`] (columns).
pub const Q05_TABLE: [[f64; 6]; 5] = [
    [3.6354, 3.1511, 2.9500, 2.8882, 2.8288, 2.7718],
    [4.6017, 3.8768, 3.5779, 3.4864, 3.3987, 3.3145],
    [5.2183, 4.3266, 3.9583, 3.8454, 3.7371, 3.6332],
    [5.6731, 4.6543, 4.2319, 4.1021, 3.9774, 3.8577],
    [6.0329, 4.9120, 4.4452, 4.3015, 4.1632, 4.0301],
];

/// Table lookup when `(k, df)` is tabulated.
pub fn q05_table_value(k: usize, df: f64) -> Option<f64> {
    if !(2..=6).contains(&k) {
        return None;
    }
    let col = Q05_DF.iter().position(|d| *d == df)?;
    Some(Q05_TABLE[k - 2][col])
}

fn critical_q(alpha: f64, k: usize, df: usize) -> Result<f64> {
    static CACHE: OnceLock<std::sync::Mutex<BTreeMap<(u64, usize, usize), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (alpha.to_bits(), k, df);
    if let Some(q) = cache.lock().expect("cache lock").get(&key) {
        return Ok(*q);
    }
    let q = studentized_range_quantile(alpha, k, df as f64)?;
    cache.lock().expect("cache lock").insert(key, q);
    Ok(q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyResult {
    /// Group labels ordered by mean, ascending.
    pub ordered: Vec<String>,
    pub means: Vec<f64>,
    /// `significant[i][j]` for groups in `ordered` order; symmetric.
    pub significant: Vec<Vec<bool>>,
    pub q_critical: f64,
    pub alpha: f64,
    pub anova: AnovaResult,
}

impl TukeyResult {
    /// `A <* B < C = D`: `<*` marks a significant adjacent difference, `=` equal means.
    pub fn chain(&self) -> String {
        let mut out = self.ordered[0].clone();
        for i in 1..self.ordered.len() {
            let sep = if self.significant[i - 1][i] {
                "<*"
            } else if self.means[i - 1] == self.means[i] {
                "="
            } else {
                "<"
            };
            out.push_str(&format!(" {sep} {}", self.ordered[i]));
        }
        out
    }

    pub fn is_significant(&self, a: &str, b: &str) -> Option<bool> {
        let i = self.ordered.iter().position(|x| x == a)?;
        let j = self.ordered.iter().position(|x| x == b)?;
        Some(self.significant[i][j])
    }
}

/// Tukey-Kramer all-pairs comparison, gated on a significant ANOVA.
pub fn tukey_hsd(groups: &[(String, Vec<f64>)], alpha: f64) -> Result<TukeyResult> {
    let slices: Vec<&[f64]> = groups.iter().map(|(_, g)| g.as_slice()).collect();
    let anova = anova_oneway(&slices)?;
    if !(anova.p < alpha) {
        return Err(Error::PostHocGate {
            p_value: anova.p,
            alpha,
        });
    }
    let k = groups.len();
    let q = critical_q(alpha, k, anova.df_within)?;
    let mut order: Vec<usize> = (0..k).collect();
    let means: Vec<f64> = slices.iter().map(|g| mean(g)).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b)));
    let mut significant = vec![vec![false; k]; k];
    for (oi, &i) in order.iter().enumerate() {
        for (oj, &j) in order.iter().enumerate() {
            if i == j {
                continue;
            }
            let se = (anova.ms_within / 2.0
                * (1.0 / slices[i].len() as f64 + 1.0 / slices[j].len() as f64))
                .sqrt();
            significant[oi][oj] = (means[i] - means[j]).abs() > q * se;
        }
    }
    Ok(TukeyResult {
        ordered: order.iter().map(|&i| groups[i].0.clone()).collect(),
        means: order.iter().map(|&i| means[i]).collect(),
        significant,
        q_critical: q,
        alpha,
        anova,
    })
}

/// Ranks (1 = smallest, ties averaged) of one score per model.
pub fn rank_ascending(scores: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &m in &idx[i..=j] {
            ranks[m] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Average over horizons of each model's per-horizon rank. `scores[m][h]`.
pub fn average_rank(scores: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = scores.first() else {
        return Ok(Vec::new());
    };
    let horizons = first.len();
    if horizons == 0 || scores.iter().any(|s| s.len() != horizons) {
        return input_err("every model must be scored at every horizon");
    }
    let mut totals = vec![0.0; scores.len()];
    for h in 0..horizons {
        let col: Vec<f64> = scores.iter().map(|s| s[h]).collect();
        for (t, r) in totals.iter_mut().zip(rank_ascending(&col)) {
            *t += r;
        }
    }
    Ok(totals.into_iter().map(|t| t / horizons as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub mape: f64,
    pub smape: f64,
    pub mase: f64,
}

impl MetricTriple {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Mape => self.mape,
            Metric::Smape => self.smape,
            Metric::Mase => self.mase,
        }
    }
}

/// Inclusive 1-based horizon band such as 1–6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub from: usize,
    pub to: usize,
}

impl std::fmt::Display for Band {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.from, self.to)
    }
}

/// Six-step bands (clipped to the horizon) followed by the full range.
pub fn report_bands(horizon: usize) -> Vec<Band> {
    let mut bands: Vec<Band> = (0..horizon.div_ceil(6))
        .map(|b| Band {
            from: 6 * b + 1,
            to: (6 * b + 6).min(horizon),
        })
        .collect();
    if bands.len() > 1 || horizon > 6 {
        bands.push(Band { from: 1, to: horizon });
    }
    bands
}

/// Per-model, per-horizon metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub models: Vec<ModelKind>,
    pub horizon: usize,
    /// `entries[m][h-1]`
    pub entries: Vec<Vec<MetricTriple>>,
}

impl MetricTable {
    pub fn model_index(&self, m: ModelKind) -> Option<usize> {
        self.models.iter().position(|x| *x == m)
    }

    pub fn series(&self, model: usize, metric: Metric) -> Vec<f64> {
        self.entries[model].iter().map(|t| t.get(metric)).collect()
    }

    pub fn band_average(&self, model: usize, metric: Metric, band: Band) -> f64 {
        let v = &self.entries[model][band.from - 1..band.to];
        v.iter().map(|t| t.get(metric)).sum::<f64>() / v.len() as f64
    }

    pub fn average(&self, model: ModelKind, metric: Metric) -> Option<f64> {
        let m = self.model_index(model)?;
        Some(self.band_average(m, metric, Band { from: 1, to: self.horizon }))
    }

    pub fn average_ranks(&self, metric: Metric) -> Result<Vec<f64>> {
        let scores: Vec<Vec<f64>> = (0..self.models.len()).map(|m| self.series(m, metric)).collect();
        average_rank(&scores)
    }

    /// CSV with header `model,horizon,mape,smape,mase`; the horizon column also
    /// carries band averages (`1-6`, …) and the average rank (`rank`).
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model", "horizon", "mape", "smape", "mase"])?;
        let ranks: Vec<Vec<f64>> = Metric::ALL
            .iter()
            .map(|m| self.average_ranks(*m))
            .collect::<Result<_>>()?;
        for (mi, model) in self.models.iter().enumerate() {
            for h in 0..self.horizon {
                let t = self.entries[mi][h];
                w.write_record([
                    model.label().to_string(),
                    (h + 1).to_string(),
                    t.mape.to_string(),
                    t.smape.to_string(),
                    t.mase.to_string(),
                ])?;
            }
            for band in report_bands(self.horizon) {
                let vals: Vec<String> = Metric::ALL
                    .iter()
                    .map(|m| self.band_average(mi, *m, band).to_string())
                    .collect();
                w.write_record([model.label().to_string(), band.to_string(), vals[0].clone(), vals[1].clone(), vals[2].clone()])?;
            }
            w.write_record([
                model.label().to_string(),
                "rank".to_string(),
                ranks[0][mi].to_string(),
                ranks[1][mi].to_string(),
                ranks[2][mi].to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mape_examples() {
        assert_eq!(mape_h(&[3.0, 4.0], &[3.0, 4.0]).unwrap().value, 0.0);
        assert!((mape_h(&[100.0], &[90.0]).unwrap().value - 10.0).abs() < 1e-10);
        assert!((mape_h(&[100.0, 200.0], &[90.0, 220.0]).unwrap().value - 10.0).abs() < 1e-10);
        let v = mape_h(&[0.0, 100.0], &[1.0, 90.0]).unwrap();
        assert_eq!(v.excluded, 1);
        assert!((v.value - 10.0).abs() < 1e-10);
        assert!(mape_h(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn smape_examples() {
        assert_eq!(smape_h(&[5.0], &[5.0]).unwrap().value, 0.0);
        let a = smape_h(&[100.0], &[90.0]).unwrap().value;
        assert!((a - 10.0 / 95.0 * 100.0).abs() < 1e-10);
        assert!((a - 10.5263).abs() < 1e-4);
        assert_eq!(smape_h(&[90.0], &[100.0]).unwrap().value, a);
        assert_eq!(smape_h(&[1.0], &[-1.0]).unwrap().excluded, 1);
    }

    #[test]
    fn mase_examples() {
        let scale = naive_mae(&[1.0, 3.0, 2.0]).unwrap();
        assert_eq!(scale, 1.5);
        assert!((mase_h(&[4.0], &[1.0], &[scale]).unwrap().value - 2.0).abs() < 1e-10);
        assert_eq!(mase_h(&[4.0], &[4.0 + scale], &[scale]).unwrap().value, 1.0);
        assert_eq!(mase_h(&[4.0], &[4.0], &[scale]).unwrap().value, 0.0);
        let v = mase_h(&[4.0, 2.0], &[3.0, 1.0], &[0.0, 1.0]).unwrap();
        assert_eq!(v.excluded, 1);
        assert_eq!(v.value, 1.0);
        assert!(mase_h(&[4.0], &[4.0], &[0.0]).unwrap().value.is_nan());
    }

    #[test]
    fn anova_examples() {
        let g = [1.0, 2.0, 3.0];
        let r = anova_oneway(&[&g, &g, &g]).unwrap();
        assert_eq!((r.f, r.p), (0.0, 1.0));

        let r = anova_oneway(&[&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]]).unwrap();
        // Grand mean 2.5; SSB = 3·0.25·2 = 1.5; SSW = 2 + 2 = 4; F = 1.5 / (4/4)
        assert!((r.f - 1.5).abs() < 1e-10);
        assert_eq!((r.df_between, r.df_within), (1, 4));
        assert!(r.p > 0.2 && r.p < 0.4);

        let r = anova_oneway(&[&[1.0, 1.0], &[2.0, 2.0]]).unwrap();
        assert_eq!((r.f, r.p), (f64::INFINITY, 0.0));

        assert!(anova_oneway(&[&[1.0, 2.0]]).is_err());
        assert!(anova_oneway(&[&[1.0], &[1.0, 2.0]]).is_err());
    }

    #[test]
    fn anova_p_value_against_closed_form() {
        // With df = (1, 2) the F survival function is 1 − sqrt(F/(F+2)).
        let r = anova_oneway(&[&[0.0, 1.0], &[2.0, 4.0]]).unwrap();
        assert_eq!(r.df_within, 2);
        let want = 1.0 - (r.f / (r.f + 2.0)).sqrt();
        assert!((r.p - want).abs() < 1e-8, "{} vs {want}", r.p);
    }

    #[test]
    fn anova_is_location_invariant() {
        let a = [1.2, 3.4, 2.2, 5.0];
        let b = [0.2, 0.9, 1.7];
        let c = [4.4, 3.9, 5.1, 6.0, 4.2];
        let r0 = anova_oneway(&[&a, &b, &c]).unwrap();
        let sh = |v: &[f64]| v.iter().map(|x| x + 1000.0).collect::<Vec<_>>();
        let (a2, b2, c2) = (sh(&a), sh(&b), sh(&c));
        let r1 = anova_oneway(&[&a2, &b2, &c2]).unwrap();
        assert!((r0.f - r1.f).abs() < 1e-8 * r0.f);
    }

    #[test]
    fn studentized_range_matches_table() {
        for (ki, row) in Q05_TABLE.iter().enumerate() {
            let k = ki + 2;
            for (ci, df) in Q05_DF.iter().enumerate() {
                let q = studentized_range_quantile(0.05, k, *df).unwrap();
                assert!((q - row[ci]).abs() < 1e-3, "k={k} df={df}: {q} vs {}", row[ci]);
            }
        }
        assert_eq!(q05_table_value(5, 20.0), Some(4.2319));
        assert_eq!(q05_table_value(7, 20.0), None);
    }

    #[test]
    fn studentized_range_two_groups_reduces_to_normal() {
        // For k = 2 and df = ∞, Q = √2 |Z|, so P(Q < q) = 2Φ(q/√2) − 1.
        let std = Normal::new(0.0, 1.0).unwrap();
        for q in [0.5, 1.0, 2.77, 4.0] {
            let want = 2.0 * std.cdf(q / 2f64.sqrt()) - 1.0;
            assert!((studentized_range_cdf(q, 2, f64::INFINITY) - want).abs() < 1e-9);
        }
    }

    fn groups(v: &[(&str, &[f64])]) -> Vec<(String, Vec<f64>)> {
        v.iter().map(|(n, g)| (n.to_string(), g.to_vec())).collect()
    }

    #[test]
    fn tukey_flags_far_apart_groups() {
        let g = groups(&[("B", &[10.0, 10.1, 9.9]), ("A", &[1.0, 1.1, 0.9])]);
        let t = tukey_hsd(&g, 0.05).unwrap();
        assert_eq!(t.ordered, vec!["A", "B"]);
        assert!(t.significant[0][1] && t.significant[1][0]);
        assert_eq!(t.chain(), "A <* B");
    }

    #[test]
    fn tukey_refuses_without_significant_anova() {
        let g = groups(&[("A", &[1.0, 2.0, 3.0]), ("B", &[1.0, 2.0, 3.0]), ("C", &[1.5, 2.0, 2.5])]);
        assert!(matches!(tukey_hsd(&g, 0.05), Err(Error::PostHocGate { .. })));
    }

    #[test]
    fn tukey_chain_marks_equal_means() {
        let g = groups(&[
            ("N", &[5.0, 5.2, 4.8, 5.1]),
            ("S", &[5.0, 5.2, 4.8, 5.1]),
            ("M", &[1.0, 1.1, 0.9, 1.05]),
        ]);
        let t = tukey_hsd(&g, 0.05).unwrap();
        assert_eq!(t.chain(), "M <* N = S");
        assert_eq!(t.is_significant("N", "S"), Some(false));
        assert_eq!(t.is_significant("M", "S"), Some(true));
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(t.significant[i][j], t.significant[j][i]);
            }
        }
    }

    #[test]
    fn rank_examples() {
        let r = average_rank(&[vec![1.0, 1.0, 1.0], vec![2.0, 3.0, 4.0]]).unwrap();
        assert_eq!(r, vec![1.0, 2.0]);
        let r = average_rank(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(r, vec![1.5, 1.5]);
        assert_eq!(rank_ascending(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert!(average_rank(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn bands() {
        let b = report_bands(18);
        assert_eq!(b.iter().map(|b| b.to_string()).collect::<Vec<_>>(), vec!["1-6", "7-12", "13-18", "1-18"]);
        assert_eq!(report_bands(4).len(), 1);
        assert_eq!(report_bands(8).last().unwrap().to_string(), "1-8");
    }

    #[test]
    fn table_csv_layout() {
        let t = MetricTable {
            models: vec![ModelKind::Naive, ModelKind::Mimo],
            horizon: 2,
            entries: vec![
                vec![MetricTriple { mape: 2.0, smape: 2.0, mase: 1.0 }; 2],
                vec![MetricTriple { mape: 1.0, smape: 1.0, mase: 0.5 }; 2],
            ],
        };
        let csv = t.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "model,horizon,mape,smape,mase");
        assert_eq!(lines[1], "Naive,1,2,2,1");
        assert!(lines.contains(&"MIMO-SVR,rank,1,1,1"));
        assert!(lines.contains(&"Naive,1-2,2,2,1"));
    }
}
