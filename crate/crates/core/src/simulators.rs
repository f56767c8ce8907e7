//! Chaotic benchmark series: the canonical Hénon map and the Mackey-Glass
//! delay differential equation.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::series::TimeSeries;

const HENON_A: f64 = 1.4;
const HENON_B: f64 = 0.3;
const HENON_ESCAPE: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HenonConfig {
    pub x0: f64,
    pub y0: f64,
    pub length: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

fn default_burn_in() -> usize {
    100
}

impl HenonConfig {
    pub fn new(x0: f64, y0: f64, length: usize) -> Self {
        Self {
            x0,
            y0,
            length,
            burn_in: default_burn_in(),
        }
    }
}

/// One step of `x ← 1 + y − a x²`, `y ← b x`.
pub fn henon_step((x, y): (f64, f64)) -> (f64, f64) {
    (1.0 + y - HENON_A * x * x, HENON_B * x)
}

/// Iterates the map from `(x0, y0)`, drops `burn_in` states and emits the
/// x-coordinate of the next `length` states (the start state counts as the
/// first when `burn_in` is 0).
pub fn henon_generate(cfg: &HenonConfig) -> Result<TimeSeries> {
    if cfg.length == 0 {
        return input_err("Hénon length must be at least 1");
    }
    let mut state = (cfg.x0, cfg.y0);
    let mut out = Vec::with_capacity(cfg.length);
    for step in 0..cfg.burn_in + cfg.length {
        if !(state.0.abs() <= HENON_ESCAPE) {
            return Err(Error::Simulator {
                step,
                message: format!("Hénon trajectory diverged (x = {})", state.0),
            });
        }
        if step >= cfg.burn_in {
            out.push(state.0);
        }
        state = henon_step(state);
    }
    let id = format!("henon_x{}_y{}_n{}", cfg.x0, cfg.y0, cfg.length);
    raw_series(id, out, None)
}

fn raw_series(id: String, values: Vec<f64>, period: Option<usize>) -> Result<TimeSeries> {
    // A single-sample output is legal for a generator even though TimeSeries needs two.
    if values.len() < 2 {
        return input_err("generated series must have at least 2 samples");
    }
    TimeSeries::new(id, values, period)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MackeyGlassConfig {
    /// Constant initial history.
    pub phi0: f64,
    pub tau: f64,
    pub length: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Integrator steps between emitted samples.
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    /// Emitted samples to discard.
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

fn default_dt() -> f64 {
    0.1
}

fn default_stride() -> usize {
    10
}

impl MackeyGlassConfig {
    pub fn new(phi0: f64, tau: f64, length: usize) -> Self {
        Self {
            phi0,
            tau,
            length,
            dt: default_dt(),
            sample_stride: default_stride(),
            burn_in: default_burn_in(),
        }
    }

    /// Delay expressed in integrator steps.
    pub fn delay_steps(&self) -> Result<usize> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return input_err(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return input_err(format!("dt must be positive, got {}", self.dt));
        }
        let ratio = self.tau / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) || steps < 1.0 {
            return input_err(format!(
                "tau/dt must be a positive integer, got {}/{}",
                self.tau, self.dt
            ));
        }
        Ok(steps as usize)
    }
}

/// Right-hand side `0.2 φ_τ / (1 + φ_τ¹⁰) − 0.1 φ`.
#[inline]
pub fn mackey_glass_rhs(phi: f64, phi_delayed: f64) -> f64 {
    0.2 * phi_delayed / (1.0 + phi_delayed.powi(10)) - 0.1 * phi
}

/// Delay line holding the last `delay + 1` grid values and their
/// (left, right) derivatives; the two differ only at t = 0.
struct DelayLine {
    values: VecDeque<f64>,
    slopes: VecDeque<(f64, f64)>,
}

impl DelayLine {
    fn constant(value: f64, len: usize) -> Self {
        Self {
            values: VecDeque::from(vec![value; len]),
            slopes: VecDeque::from(vec![(0.0, 0.0); len]),
        }
    }

    /// `φ(t − τ)`, `φ(t − τ + dt/2)` and `φ(t − τ + dt)` for the current step.
    fn delayed(&self, dt: f64) -> (f64, f64, f64) {
        let (v0, v1) = (self.values[0], self.values[1]);
        let (s0, s1) = (self.slopes[0].1, self.slopes[1].0);
        // Cubic Hermite midpoint keeps the delayed term fourth-order accurate.
        let mid = 0.5 * (v0 + v1) + dt * (s0 - s1) / 8.0;
        (v0, mid, v1)
    }

    fn push(&mut self, value: f64, slope: (f64, f64)) {
        self.values.pop_front();
        self.slopes.pop_front();
        self.values.push_back(value);
        self.slopes.push_back(slope);
    }
}

/// Dense RK4 trajectory on the integrator grid, `steps + 1` points from t = 0.
pub fn mackey_glass_trajectory(phi0: f64, tau: f64, dt: f64, steps: usize) -> Result<Vec<f64>> {
    let cfg = MackeyGlassConfig {
        phi0,
        tau,
        length: 1,
        dt,
        sample_stride: 1,
        burn_in: 0,
    };
    let delay = cfg.delay_steps()?;
    let mut out = Vec::with_capacity(steps + 1);
    integrate(phi0, delay, dt, steps, |_, v| out.push(v))?;
    Ok(out)
}

/// Runs `steps` RK4 steps, calling `emit(step, value)` for every grid point
/// including the initial one.
fn integrate(
    phi0: f64,
    delay: usize,
    dt: f64,
    steps: usize,
    mut emit: impl FnMut(usize, f64),
) -> Result<()> {
    if !phi0.is_finite() {
        return input_err("initial history must be finite");
    }
    // Grid values φ(t−τ) … φ(t); the constant history has zero slope.
    let mut line = DelayLine::constant(phi0, delay + 1);
    let mut phi = phi0;
    emit(0, phi);
    for step in 0..steps {
        let k1 = mackey_glass_rhs(phi, line.values[0]);
        // At t = 0 the history's left derivative is 0.
        let left = if step == 0 { 0.0 } else { k1 };
        *line.slopes.back_mut().expect("delay line is never empty") = (left, k1);
        let (_, dm, d1) = line.delayed(dt);
        let k2 = mackey_glass_rhs(phi + 0.5 * dt * k1, dm);
        let k3 = mackey_glass_rhs(phi + 0.5 * dt * k2, dm);
        let k4 = mackey_glass_rhs(phi + dt * k3, d1);
        phi += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !phi.is_finite() {
            return Err(Error::Simulator {
                step: step + 1,
                message: "Mackey-Glass state became non-finite".into(),
            });
        }
        line.push(phi, (0.0, 0.0));
        emit(step + 1, phi);
    }
    Ok(())
}

pub fn mackey_glass_generate(cfg: &MackeyGlassConfig) -> Result<TimeSeries> {
    let delay = cfg.delay_steps()?;
    if cfg.length == 0 || cfg.sample_stride == 0 {
        return input_err("length and sample_stride must be positive");
    }
    let total = cfg.burn_in + cfg.length;
    let steps = (total - 1) * cfg.sample_stride;
    let mut out = Vec::with_capacity(cfg.length);
    let mut sample = 0usize;
    integrate(cfg.phi0, delay, cfg.dt, steps, |step, v| {
        if step % cfg.sample_stride == 0 {
            if sample >= cfg.burn_in {
                out.push(v);
            }
            sample += 1;
        }
    })?;
    let id = format!("mackey_glass_phi{}_tau{}_n{}", cfg.phi0, cfg.tau, cfg.length);
    raw_series(id, out, None)
}

/// One row of the simulated-series configuration table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationRow {
    pub henon_x0: f64,
    pub henon_y0: f64,
    pub mg_phi0: f64,
    pub mg_tau: f64,
    pub sample_size: usize,
}

const fn row(x0: f64, y0: f64, phi0: f64, tau: f64, n: usize) -> SimulationRow {
    SimulationRow {
        henon_x0: x0,
        henon_y0: y0,
        mg_phi0: phi0,
        mg_tau: tau,
        sample_size: n,
    }
}

/// Initializations and sample sizes of the twenty simulated series per process.
pub const SIMULATION_TABLE: [SimulationRow; 20] = [
    row(0.1, 0.1, 1.0, 15.0, 205),
    row(0.1, 0.3, 1.2, 15.0, 246),
    row(0.1, 0.5, 1.4, 15.0, 297),
    row(0.1, 0.7, 1.6, 15.0, 341),
    row(0.1, 0.9, 1.8, 15.0, 389),
    row(0.3, 0.1, 2.0, 15.0, 428),
    row(0.3, 0.3, 1.0, 16.0, 489),
    row(0.3, 0.5, 1.2, 16.0, 534),
    row(0.3, 0.7, 1.4, 16.0, 584),
    row(0.3, 0.9, 1.6, 16.0, 648),
    row(0.5, 0.1, 1.8, 16.0, 685),
    row(0.5, 0.3, 2.0, 16.0, 718),
    row(0.5, 0.5, 1.0, 17.0, 745),
    row(0.5, 0.7, 1.2, 17.0, 784),
    row(0.5, 0.9, 1.4, 17.0, 804),
    row(0.7, 0.1, 1.6, 17.0, 834),
    row(0.7, 0.3, 1.8, 17.0, 879),
    row(0.7, 0.5, 2.0, 17.0, 915),
    row(0.7, 0.7, 1.0, 18.0, 957),
    row(0.7, 0.9, 1.2, 18.0, 986),
];

/// Hénon config for table row `n` (1-based).
pub fn henon_row(n: usize) -> Result<HenonConfig> {
    let r = table_row(n)?;
    Ok(HenonConfig::new(r.henon_x0, r.henon_y0, r.sample_size))
}

/// Mackey-Glass config for table row `n` (1-based).
pub fn mackey_glass_row(n: usize) -> Result<MackeyGlassConfig> {
    let r = table_row(n)?;
    Ok(MackeyGlassConfig::new(r.mg_phi0, r.mg_tau, r.sample_size))
}

fn table_row(n: usize) -> Result<SimulationRow> {
    if n == 0 || n > SIMULATION_TABLE.len() {
        return input_err(format!("table rows are numbered 1..=20, got {n}"));
    }
    Ok(SIMULATION_TABLE[n - 1])
}
