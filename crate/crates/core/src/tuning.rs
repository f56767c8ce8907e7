//! Hyperparameter search: global-best particle swarm optimisation over
//! `(log10 C, log10 ε, log10 γ)` scored by k-fold cross-validation.

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::series::EmbeddedDataset;
use crate::solver::{fit, Hyperparams, SolverOptions};

pub const DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: f64,
    pub high: f64,
}

impl Bounds {
    pub const fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    fn width(&self) -> f64 {
        self.high - self.low
    }

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.low, self.high)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub cognitive_coeff: f64,
    pub social_coeff: f64,
    pub inertia_initial: f64,
    pub inertia_final: f64,
    pub seed: u64,
    /// log10 C, log10 ε, log10 γ.
    pub bounds: [Bounds; DIM],
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 20,
            iterations: 100,
            cognitive_coeff: 2.0,
            social_coeff: 2.0,
            inertia_initial: 0.9,
            inertia_final: 0.4,
            seed: 0,
            bounds: [
                Bounds::new(-2.0, 4.0),
                Bounds::new(-4.0, 0.0),
                Bounds::new(-4.0, 2.0),
            ],
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return input_err(format!("swarm size must be at least 2, got {}", self.swarm_size));
        }
        if self.iterations == 0 {
            return input_err("PSO needs at least one iteration");
        }
        if self.inertia_initial < self.inertia_final {
            return input_err("initial inertia must not be below final inertia");
        }
        for b in &self.bounds {
            if !(b.low.is_finite() && b.high.is_finite() && b.low < b.high) {
                return input_err(format!("invalid bounds [{}, {}]", b.low, b.high));
            }
        }
        Ok(())
    }

    /// Inertia weight of iteration `i` (0-based), linear from initial to final.
    pub fn inertia(&self, i: usize) -> f64 {
        if self.iterations <= 1 {
            return self.inertia_initial;
        }
        self.inertia_initial
            - (self.inertia_initial - self.inertia_final) * i as f64 / (self.iterations - 1) as f64
    }

    fn max_velocity(&self) -> [f64; DIM] {
        std::array::from_fn(|d| 0.5 * self.bounds[d].width())
    }

    /// Independent stream for one particle at one iteration (iteration 0 is initialisation).
    fn rng(&self, iteration: usize, particle: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((iteration * self.swarm_size + particle) as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: [f64; DIM],
    pub velocity: [f64; DIM],
    pub personal_best_position: [f64; DIM],
    pub personal_best_fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoOutcome {
    pub best_position: [f64; DIM],
    pub best_fitness: f64,
    /// Global best fitness after initialisation and after every iteration.
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub non_finite_evaluations: usize,
}

fn sanitize(f: f64, count: &mut usize) -> f64 {
    if f.is_finite() {
        f
    } else {
        *count += 1;
        f64::INFINITY
    }
}

/// Minimises `fitness` with a global-best swarm.
pub fn pso_search<F>(fitness: F, cfg: &PsoConfig) -> Result<PsoOutcome>
where
    F: Fn(&[f64; DIM]) -> f64 + Sync,
{
    cfg.validate()?;
    let vmax = cfg.max_velocity();
    let mut non_finite = 0usize;

    let mut swarm: Vec<Particle> = (0..cfg.swarm_size)
        .map(|p| {
            let mut rng = cfg.rng(0, p);
            let position = std::array::from_fn(|d| rng.gen_range(cfg.bounds[d].low..=cfg.bounds[d].high));
            let velocity = std::array::from_fn(|d| rng.gen_range(-vmax[d]..=vmax[d]));
            Particle {
                position,
                velocity,
                personal_best_position: position,
                personal_best_fitness: f64::INFINITY,
            }
        })
        .collect();

    let scores: Vec<f64> = swarm.par_iter().map(|p| fitness(&p.position)).collect();
    let mut gbest_pos = swarm[0].position;
    let mut gbest = f64::INFINITY;
    for (p, s) in swarm.iter_mut().zip(scores) {
        let s = sanitize(s, &mut non_finite);
        p.personal_best_fitness = s;
        if s < gbest {
            gbest = s;
            gbest_pos = p.position;
        }
    }
    let mut trace = vec![gbest];
    let mut evaluations = cfg.swarm_size;

    for it in 0..cfg.iterations {
        let w = cfg.inertia(it);
        for (idx, p) in swarm.iter_mut().enumerate() {
            let mut rng = cfg.rng(it + 1, idx);
            for d in 0..DIM {
                let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
                let v = w * p.velocity[d]
                    + cfg.cognitive_coeff * r1 * (p.personal_best_position[d] - p.position[d])
                    + cfg.social_coeff * r2 * (gbest_pos[d] - p.position[d]);
                p.velocity[d] = v.clamp(-vmax[d], vmax[d]);
                p.position[d] = cfg.bounds[d].clamp(p.position[d] + p.velocity[d]);
            }
        }
        let scores: Vec<f64> = swarm.par_iter().map(|p| fitness(&p.position)).collect();
        evaluations += swarm.len();
        for (p, s) in swarm.iter_mut().zip(scores) {
            let s = sanitize(s, &mut non_finite);
            if s < p.personal_best_fitness {
                p.personal_best_fitness = s;
                p.personal_best_position = p.position;
            }
            if s < gbest {
                gbest = s;
                gbest_pos = p.position;
            }
        }
        trace.push(gbest);
    }
    if non_finite > 0 {
        debug!("{non_finite} PSO evaluations returned non-finite fitness");
    }
    Ok(PsoOutcome {
        best_position: gbest_pos,
        best_fitness: gbest,
        trace,
        evaluations,
        non_finite_evaluations: non_finite,
    })
}

/// Contiguous fold boundaries: the first `n % k` folds get one extra row.
pub fn fold_ranges(n: usize, k: usize) -> Result<Vec<std::ops::Range<usize>>> {
    if k < 2 {
        return input_err(format!("cross-validation needs at least 2 folds, got {k}"));
    }
    if n < k {
        return input_err(format!("{n} rows cannot fill {k} folds"));
    }
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    Ok((0..k)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

/// Mean over folds of the held-out mean squared error (over all outputs).
pub fn cv_fitness(
    dataset: &EmbeddedDataset,
    hyper: &Hyperparams,
    folds: usize,
    opts: &SolverOptions,
) -> Result<f64> {
    let n = dataset.n_rows();
    let ranges = fold_ranges(n, folds)?;
    let mut total = 0.0;
    for r in &ranges {
        let train: Vec<usize> = (0..n).filter(|i| !r.contains(i)).collect();
        let test: Vec<usize> = r.clone().collect();
        let model = fit(&dataset.select_rows(&train), hyper, opts)?;
        let held = dataset.select_rows(&test);
        let pred = model.predict(&held.inputs)?;
        let mse = (pred - &held.outputs).norm_squared() / (held.outputs.len() as f64);
        total += mse;
    }
    Ok(total / ranges.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub hyper: Hyperparams,
    pub best_position: [f64; DIM],
    pub best_fitness: f64,
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub non_finite_evaluations: usize,
    pub folds: usize,
    pub seed: u64,
}

/// PSO over hyperparameters with cross-validated fitness on one dataset.
pub fn tune(
    dataset: &EmbeddedDataset,
    pso: &PsoConfig,
    folds: usize,
    opts: &SolverOptions,
) -> Result<TuningResult> {
    fold_ranges(dataset.n_rows(), folds)?;
    let outcome = pso_search(
        |pos| {
            Hyperparams::from_log10(pos)
                .and_then(|h| cv_fitness(dataset, &h, folds, opts))
                .unwrap_or(f64::INFINITY)
        },
        pso,
    )?;
    if !outcome.best_fitness.is_finite() {
        return Err(crate::Error::Solver(
            "no hyperparameter candidate produced a finite cross-validation score".into(),
        ));
    }
    Ok(TuningResult {
        hyper: Hyperparams::from_log10(&outcome.best_position)?,
        best_position: outcome.best_position,
        best_fitness: outcome.best_fitness,
        trace: outcome.trace,
        evaluations: outcome.evaluations,
        non_finite_evaluations: outcome.non_finite_evaluations,
        folds,
        seed: pso.seed,
    })
}
