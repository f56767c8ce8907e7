//! Kernel functions and Gram-matrix construction.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `exp(-γ‖x − y‖²)`
    Rbf,
    /// Plain inner product. Not used by the experiments; handy as a test aid.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub gamma: f64,
}

impl KernelConfig {
    pub fn rbf(gamma: f64) -> Result<Self> {
        let cfg = Self {
            kind: KernelKind::Rbf,
            gamma,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            gamma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == KernelKind::Rbf && !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return input_err(format!("RBF gamma must be positive and finite, got {}", self.gamma));
        }
        Ok(())
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Rbf => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-self.gamma * d2).exp()
            }
            KernelKind::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }
}

pub fn kernel_eval(x: &[f64], y: &[f64], cfg: &KernelConfig) -> Result<f64> {
    if x.len() != y.len() {
        return input_err(format!(
            "kernel arguments differ in dimension: {} vs {}",
            x.len(),
            y.len()
        ));
    }
    cfg.validate()?;
    Ok(cfg.eval_unchecked(x, y))
}

/// Kernel matrix between two input sets (one sample per row).
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
}

impl GramMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.entries.is_square()
    }
}

/// Samples as contiguous columns, so each one is a plain slice.
fn samples_as_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.transpose()
}

pub fn gram(rows: &DMatrix<f64>, cols: &DMatrix<f64>, cfg: &KernelConfig) -> Result<GramMatrix> {
    if rows.ncols() != cols.ncols() {
        return input_err(format!(
            "gram inputs differ in dimension: {} vs {}",
            rows.ncols(),
            cols.ncols()
        ));
    }
    cfg.validate()?;
    let r = samples_as_columns(rows);
    let same = std::ptr::eq(rows, cols);
    let c = if same { r.clone() } else { samples_as_columns(cols) };
    let (n, m) = (rows.nrows(), cols.nrows());
    let mut entries = DMatrix::zeros(n, m);
    for j in 0..m {
        let cj = c.column(j);
        let cj = cj.as_slice();
        let start = if same { j } else { 0 };
        for i in start..n {
            let v = cfg.eval_unchecked(r.column(i).as_slice(), cj);
            entries[(i, j)] = v;
            if same {
                entries[(j, i)] = v;
            }
        }
    }
    Ok(GramMatrix { entries })
}

/// Gram matrix of a single input set against itself.
pub fn gram_self(inputs: &DMatrix<f64>, cfg: &KernelConfig) -> Result<GramMatrix> {
    gram(inputs, inputs, cfg)
}
