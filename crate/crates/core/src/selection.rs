//! Lag selection with the (multi-output) Delta test.
//!
//! The Delta test estimates the output noise variance as half the mean
//! squared output gap between every sample and its nearest neighbour in input
//! space. A lag set that makes the mapping deterministic drives it to zero.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::series::{LagSet, TimeSeries};
use crate::strategies::{embed_steps, Strategy};

/// `(1 / 2n) Σ_i ‖y_NN(i) − y_i‖²` with Euclidean nearest neighbours, the
/// sample itself excluded and ties going to the lowest index.
pub fn delta_test(inputs: &DMatrix<f64>, outputs: &DMatrix<f64>) -> Result<f64> {
    let n = inputs.nrows();
    if n < 2 {
        return input_err(format!("Delta test needs at least 2 samples, got {n}"));
    }
    if outputs.nrows() != n {
        return input_err("Delta test inputs and outputs differ in row count");
    }
    // Samples as contiguous columns.
    let x = inputs.transpose();
    let y = outputs.transpose();
    let mut total = 0.0;
    for i in 0..n {
        let xi = x.column(i);
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = (x.column(j) - xi).norm_squared();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        total += (y.column(best) - y.column(i)).norm_squared();
    }
    Ok(total / (2.0 * n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    /// Contiguous windows `{t, …, t−k+1}` for k = 1..=d.
    ExhaustiveWindows,
    /// Greedy forward addition of single lags.
    Forward,
}

impl std::fmt::Display for SearchMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SearchMethod::ExhaustiveWindows => "exhaustive_windows",
            SearchMethod::Forward => "forward",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub lags: LagSet,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen_lags: LagSet,
    pub delta_value: f64,
    pub candidates_evaluated: usize,
    pub candidates: Vec<Candidate>,
    pub search: SearchMethod,
}

/// Fewer lags first, then lexicographically smaller lag indices.
fn simpler(a: &LagSet, b: &LagSet) -> bool {
    (a.len(), a.lags()) < (b.len(), b.lags())
}

fn better(c: &Candidate, best: &Candidate) -> bool {
    c.delta < best.delta || (c.delta == best.delta && simpler(&c.lags, &best.lags))
}

/// Scores lag sets on a shared row range so every candidate sees the same samples.
struct Scorer<'a> {
    values: &'a [f64],
    steps: Vec<usize>,
    first_t: usize,
}

impl Scorer<'_> {
    fn score(&self, lags: &LagSet) -> Result<Candidate> {
        let ds = embed_steps(self.values, lags, &self.steps, self.first_t)?;
        Ok(Candidate {
            lags: lags.clone(),
            delta: delta_test(&ds.inputs, &ds.outputs)?,
        })
    }
}

/// Picks the lag set minimising the Delta test for a strategy.
///
/// Iterated selection uses one-step targets. Direct and MIMO selection use the
/// joint block of targets `φ_{t+1} … φ_{t+H}`.
pub fn select_inputs(
    series: &TimeSeries,
    max_lag: usize,
    horizon: usize,
    strategy: Strategy,
    search: SearchMethod,
) -> Result<SelectionResult> {
    if max_lag == 0 {
        return input_err("max lag must be at least 1");
    }
    if horizon == 0 {
        return input_err("horizon must be at least 1");
    }
    let steps: Vec<usize> = match strategy {
        Strategy::Iterated => vec![1],
        Strategy::Direct | Strategy::Mimo => (1..=horizon).collect(),
    };
    let needed = max_lag + steps.len() + 1;
    if series.len() < needed {
        return input_err(format!(
            "input selection with max lag {max_lag} and horizon {} needs {needed} observations, got {}",
            steps.len(),
            series.len()
        ));
    }
    let scorer = Scorer {
        values: series.values(),
        steps,
        first_t: max_lag - 1,
    };

    let mut candidates = Vec::new();
    let best = match search {
        SearchMethod::ExhaustiveWindows => {
            let mut best: Option<Candidate> = None;
            for k in 1..=max_lag {
                let c = scorer.score(&LagSet::window(k)?)?;
                if best.as_ref().map_or(true, |b| better(&c, b)) {
                    best = Some(c.clone());
                }
                candidates.push(c);
            }
            best
        }
        SearchMethod::Forward => {
            let mut chosen: Vec<usize> = Vec::new();
            let mut current: Option<Candidate> = None;
            loop {
                let mut round_best: Option<Candidate> = None;
                for lag in (0..max_lag).filter(|l| !chosen.contains(l)) {
                    let mut lags = chosen.clone();
                    lags.push(lag);
                    let c = scorer.score(&LagSet::new(lags)?)?;
                    if round_best.as_ref().map_or(true, |b| better(&c, b)) {
                        round_best = Some(c.clone());
                    }
                    candidates.push(c);
                }
                match (round_best, &current) {
                    (Some(rb), None) => {
                        chosen = rb.lags.lags().to_vec();
                        current = Some(rb);
                    }
                    (Some(rb), Some(cur)) if rb.delta < cur.delta => {
                        chosen = rb.lags.lags().to_vec();
                        current = Some(rb);
                    }
                    _ => break,
                }
            }
            current
        }
    };
    let best = best.ok_or_else(|| crate::Error::Input("no feasible lag candidate".into()))?;
    Ok(SelectionResult {
        chosen_lags: best.lags,
        delta_value: best.delta,
        candidates_evaluated: candidates.len(),
        candidates,
        search,
    })
}
