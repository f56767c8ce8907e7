//! Multi-output support vector regression trained by iteratively reweighted
//! least squares (IRWLS).
//!
//! The primal objective is
//!
//! ```text
//! L(W, b) = ½ Σ_j ‖w^j‖² + C Σ_i L_ε(u_i),   u_i = ‖y_i − φ(x_i)W − b‖
//! ```
//!
//! with the quadratic ε-insensitive loss `L_ε(u) = max(0, u − ε)²`. All
//! outputs share one residual norm per sample, so every regressor sees the
//! errors of every output. With `w^j = Σ_i β_ij φ(x_i)` each IRWLS iteration
//! reweights samples by `a_i = 2C(u_i − ε)/u_i`, solves one weighted
//! least-squares system (shared across outputs) and backtracks along the
//! resulting direction until the objective decreases.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::kernels::{gram, gram_self, GramMatrix, KernelConfig};
use crate::matrix_serde;
use crate::series::EmbeddedDataset;

/// The tuned triple (C, ε, γ); γ lives in the kernel config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub c: f64,
    pub epsilon: f64,
    pub kernel: KernelConfig,
}

impl Hyperparams {
    pub fn new(c: f64, epsilon: f64, gamma: f64) -> Result<Self> {
        let h = Self {
            c,
            epsilon,
            kernel: KernelConfig::rbf(gamma)?,
        };
        h.validate()?;
        Ok(h)
    }

    /// From a position in `(log10 C, log10 ε, log10 γ)` space.
    pub fn from_log10(position: &[f64; 3]) -> Result<Self> {
        Self::new(
            10f64.powf(position[0]),
            10f64.powf(position[1]),
            10f64.powf(position[2]),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return input_err(format!("C must be positive and finite, got {}", self.c));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return input_err(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        self.kernel.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop once `|obj_k − obj_{k+1}| / (1 + obj_k)` drops below this.
    pub tolerance: f64,
    /// Smallest backtracking multiplier tried before giving up.
    pub min_step: f64,
    /// Diagonal jitter added once when the weighted system is singular.
    pub jitter: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-8,
            min_step: 1e-12,
            jitter: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Relative objective decrease fell below tolerance.
    Converged,
    /// Backtracking could not find a decrease.
    StepUnderflow,
    MaxIterations,
    /// Every residual already sits inside the ε-tube with zero weights.
    InsideTube,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub objective: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// Objective of the starting point followed by every accepted iterate.
    pub objective_trace: Vec<f64>,
}

/// A trained M-SVR: predictions are `K(x, X_train) β + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsvrModel {
    #[serde(with = "matrix_serde::rows")]
    pub beta: DMatrix<f64>,
    #[serde(with = "matrix_serde::vector")]
    pub intercept: DVector<f64>,
    #[serde(with = "matrix_serde::rows")]
    pub train_inputs: DMatrix<f64>,
    pub hyper: Hyperparams,
    pub diagnostics: FitDiagnostics,
}

/// Quadratic ε-insensitive loss.
pub fn quad_eps_loss(u: f64, epsilon: f64) -> Result<f64> {
    if u < 0.0 || u.is_nan() {
        return input_err(format!("residual norm must be non-negative, got {u}"));
    }
    Ok(loss_unchecked(u, epsilon))
}

#[inline]
fn loss_unchecked(u: f64, epsilon: f64) -> f64 {
    if u < epsilon {
        0.0
    } else {
        u * u - 2.0 * u * epsilon + epsilon * epsilon
    }
}

/// IRWLS sample weights. At `u = 0` with `ε = 0` the weight is the limit `2C`.
pub fn irwls_weights(u: &[f64], epsilon: f64, c: f64) -> Result<Vec<f64>> {
    if let Some(bad) = u.iter().find(|&&v| v < 0.0 || v.is_nan()) {
        return input_err(format!("residual norm must be non-negative, got {bad}"));
    }
    Ok(weights_unchecked(u, epsilon, c))
}

fn weights_unchecked(u: &[f64], epsilon: f64, c: f64) -> Vec<f64> {
    u.iter()
        .map(|&ui| {
            if ui < epsilon {
                0.0
            } else if ui == 0.0 {
                2.0 * c
            } else {
                2.0 * c * (ui - epsilon) / ui
            }
        })
        .collect()
}

/// Objective value and residual norms at `(β, b)` given a precomputed Gram matrix.
fn evaluate(
    k: &DMatrix<f64>,
    y: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    b: &DVector<f64>,
    hyper: &Hyperparams,
) -> (f64, Vec<f64>) {
    evaluate_with_kb(&(k * beta), y, beta, b, hyper)
}

/// As [`evaluate`] with `K β` supplied.
fn evaluate_with_kb(
    kb: &DMatrix<f64>,
    y: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    b: &DVector<f64>,
    hyper: &Hyperparams,
) -> (f64, Vec<f64>) {
    let reg = 0.5 * kb.component_mul(beta).sum();
    let n = y.nrows();
    let mut u = vec![0.0; n];
    for j in 0..y.ncols() {
        let bj = b[j];
        let yj = y.column(j);
        let kbj = kb.column(j);
        for i in 0..n {
            let e = yj[i] - kbj[i] - bj;
            u[i] += e * e;
        }
    }
    let mut loss = 0.0;
    for ui in u.iter_mut() {
        *ui = ui.sqrt();
        loss += loss_unchecked(*ui, hyper.epsilon);
    }
    (reg + hyper.c * loss, u)
}

fn check_shapes(
    n: usize,
    outputs: usize,
    beta: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<()> {
    if beta.nrows() != n || beta.ncols() != outputs || b.len() != outputs {
        return input_err(format!(
            "coefficient shapes β {}×{}, b {} do not match {n} samples with {outputs} outputs",
            beta.nrows(),
            beta.ncols(),
            b.len()
        ));
    }
    Ok(())
}

/// Objective value at `(β, b)` with the Gram matrix already built.
pub fn objective_with_gram(
    beta: &DMatrix<f64>,
    b: &DVector<f64>,
    k: &GramMatrix,
    targets: &DMatrix<f64>,
    hyper: &Hyperparams,
) -> Result<f64> {
    check_shapes(targets.nrows(), targets.ncols(), beta, b)?;
    if !k.is_square() || k.nrows() != targets.nrows() {
        return input_err("Gram matrix does not match the number of samples");
    }
    if beta.iter().chain(b.iter()).chain(targets.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite coefficients or targets".into()));
    }
    let (obj, _) = evaluate(k.entries(), targets, beta, b, hyper);
    if !obj.is_finite() {
        return Err(Error::Numeric(format!("objective evaluated to {obj}")));
    }
    Ok(obj)
}

/// Objective value of `(β, b)` on a dataset.
pub fn objective(
    beta: &DMatrix<f64>,
    b: &DVector<f64>,
    dataset: &EmbeddedDataset,
    hyper: &Hyperparams,
) -> Result<f64> {
    hyper.validate()?;
    let k = gram_self(&dataset.inputs, &hyper.kernel)?;
    objective_with_gram(beta, b, &k, &dataset.outputs, hyper)
}

/// Solves the weighted least-squares subproblem for fixed weights `a`.
///
/// For every output `j` the unknowns are `β^j` on the samples with `a_i > 0`
/// and `b^j`; samples with zero weight get `β_i = 0`. The system
///
/// ```text
/// [ K_aa + D_a⁻¹   1   ] [β^j]   [ y^j_a   ]
/// [ aᵀ K_aa       1ᵀa  ] [b^j] = [ aᵀ y^j_a ]
/// ```
///
/// is solved through its equivalent symmetric form (the second row reduces to
/// `Σ β_i = 0` given the first), with one Cholesky factorization shared by all
/// outputs.
pub fn solve_weighted_system(
    k: &GramMatrix,
    a: &[f64],
    targets: &DMatrix<f64>,
    jitter: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = targets.nrows();
    if !k.is_square() || k.nrows() != n || a.len() != n {
        return input_err(format!(
            "weighted system shape mismatch: K {}×{}, {} weights, {} targets",
            k.nrows(),
            k.ncols(),
            a.len(),
            n
        ));
    }
    let active: Vec<usize> = (0..n).filter(|&i| a[i] > 0.0).collect();
    if active.is_empty() {
        return input_err("weighted system needs at least one positive weight");
    }
    let na = active.len();
    let ke = k.entries();
    let mut m = DMatrix::from_fn(na, na, |r, c| ke[(active[r], active[c])]);
    for (r, &i) in active.iter().enumerate() {
        m[(r, r)] += 1.0 / a[i];
    }
    let chol = match m.clone().cholesky() {
        Some(c) => c,
        None => {
            for r in 0..na {
                m[(r, r)] += jitter;
            }
            m.cholesky().ok_or_else(|| {
                Error::Solver(format!(
                    "weighted system with {na} active samples is singular even after jitter {jitter}"
                ))
            })?
        }
    };

    let h = targets.ncols();
    let mut rhs = DMatrix::zeros(na, h + 1);
    for (r, &i) in active.iter().enumerate() {
        for j in 0..h {
            rhs[(r, j)] = targets[(i, j)];
        }
        rhs[(r, h)] = 1.0;
    }
    let z = chol.solve(&rhs);
    let ones_sum: f64 = z.column(h).sum();
    if !(ones_sum.is_finite() && ones_sum > 0.0) {
        return Err(Error::Solver("degenerate weighted system".into()));
    }

    let mut beta = DMatrix::zeros(n, h);
    let mut b = DVector::zeros(h);
    for j in 0..h {
        let bj = z.column(j).sum() / ones_sum;
        b[j] = bj;
        for (r, &i) in active.iter().enumerate() {
            beta[(i, j)] = z[(r, j)] - bj * z[(r, h)];
        }
    }
    if beta.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Solver("weighted system produced non-finite coefficients".into()));
    }
    Ok((beta, b))
}

/// Trains an M-SVR on `dataset` (any number of output columns).
pub fn fit(dataset: &EmbeddedDataset, hyper: &Hyperparams, opts: &SolverOptions) -> Result<MsvrModel> {
    fit_matrices(&dataset.inputs, &dataset.outputs, hyper, opts)
}

pub fn fit_matrices(
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    hyper: &Hyperparams,
    opts: &SolverOptions,
) -> Result<MsvrModel> {
    hyper.validate()?;
    let n = inputs.nrows();
    let h = targets.ncols();
    if n == 0 || h == 0 {
        return input_err("cannot fit an empty dataset");
    }
    if targets.nrows() != n {
        return input_err(format!(
            "inputs have {n} rows but targets have {}",
            targets.nrows()
        ));
    }
    if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
        return input_err("training data contains non-finite values");
    }

    let k = gram_self(inputs, &hyper.kernel)?;
    let ke = k.entries();
    let mut beta = DMatrix::zeros(n, h);
    let mut kb = DMatrix::zeros(n, h);
    let mut b = DVector::zeros(h);
    let (mut obj, mut u) = evaluate(ke, targets, &beta, &b, hyper);
    let mut a = weights_unchecked(&u, hyper.epsilon, hyper.c);

    // The zero start can stall with every residual inside the tube even though
    // the intercepts are wrong; restart from the target means in that case.
    if a.iter().all(|&w| w == 0.0) && hyper.epsilon > 0.0 {
        b = DVector::from_fn(h, |j, _| targets.column(j).mean());
        (obj, u) = evaluate(ke, targets, &beta, &b, hyper);
        a = weights_unchecked(&u, hyper.epsilon, hyper.c);
    }

    let mut trace = vec![obj];
    let mut iterations = 0;
    let mut stop_reason = StopReason::MaxIterations;
    if a.iter().all(|&w| w == 0.0) && beta.iter().all(|&v| v == 0.0) {
        stop_reason = StopReason::InsideTube;
    } else {
        while iterations < opts.max_iterations {
            let (beta_s, b_s) = if a.iter().any(|&w| w > 0.0) {
                solve_weighted_system(&k, &a, targets, opts.jitter)?
            } else {
                // No active samples: the subproblem only asks for the smallest norm.
                (DMatrix::zeros(n, h), b.clone())
            };
            let d_beta = &beta_s - &beta;
            let d_b = &b_s - &b;
            let k_d_beta = ke * &d_beta;

            let mut eta = 1.0;
            let accepted = loop {
                let cand_beta = &beta + &d_beta * eta;
                let cand_kb = &kb + &k_d_beta * eta;
                let cand_b = &b + &d_b * eta;
                let (cand_obj, cand_u) = evaluate_with_kb(&cand_kb, targets, &cand_beta, &cand_b, hyper);
                if cand_obj < obj {
                    break Some((cand_beta, cand_kb, cand_b, cand_obj, cand_u));
                }
                eta *= 0.5;
                if eta < opts.min_step {
                    break None;
                }
            };
            let Some((nb, nkb, nbias, nobj, nu)) = accepted else {
                stop_reason = StopReason::StepUnderflow;
                break;
            };
            let rel = (obj - nobj).abs() / (1.0 + obj);
            beta = nb;
            kb = nkb;
            b = nbias;
            obj = nobj;
            u = nu;
            a = weights_unchecked(&u, hyper.epsilon, hyper.c);
            iterations += 1;
            trace.push(obj);
            if rel < opts.tolerance {
                stop_reason = StopReason::Converged;
                break;
            }
        }
    }

    if !obj.is_finite() {
        return Err(Error::Numeric(format!("final objective is {obj}")));
    }
    Ok(MsvrModel {
        beta,
        intercept: b,
        train_inputs: inputs.clone(),
        hyper: *hyper,
        diagnostics: FitDiagnostics {
            objective: obj,
            iterations,
            stop_reason,
            objective_trace: trace,
        },
    })
}

impl MsvrModel {
    pub fn n_outputs(&self) -> usize {
        self.beta.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.train_inputs.ncols()
    }

    /// Predicts one output row per input row.
    pub fn predict(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if inputs.ncols() != self.input_dim() {
            return input_err(format!(
                "model expects {} inputs per row, got {}",
                self.input_dim(),
                inputs.ncols()
            ));
        }
        let k = gram(inputs, &self.train_inputs, &self.hyper.kernel)?.into_inner();
        let mut out = k * &self.beta;
        for mut row in out.row_iter_mut() {
            row += self.intercept.transpose();
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: MsvrModel = serde_json::from_str(text)?;
        if model.beta.nrows() != model.train_inputs.nrows()
            || model.intercept.len() != model.beta.ncols()
        {
            return input_err("persisted model has inconsistent shapes");
        }
        model.hyper.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Convenience wrapper: predictions for inputs given as `(β, b)` without a fit.
pub fn predict_with(
    beta: &DMatrix<f64>,
    intercept: &DVector<f64>,
    train_inputs: &DMatrix<f64>,
    hyper: &Hyperparams,
    inputs: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    MsvrModel {
        beta: beta.clone(),
        intercept: intercept.clone(),
        train_inputs: train_inputs.clone(),
        hyper: *hyper,
        diagnostics: FitDiagnostics {
            objective: 0.0,
            iterations: 0,
            stop_reason: StopReason::Converged,
            objective_trace: Vec::new(),
        },
    }
    .predict(inputs)
}
