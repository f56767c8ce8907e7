//! Helpers shared by the integration tests: independent oracles and small manifests.
#![allow(dead_code)]

use msvr_forecast::harness::{ExperimentManifest, SeriesSource};
use msvr_forecast::tuning::PsoConfig;
use nalgebra::DMatrix;
use rand::Rng;

/// M-SVR objective written from the formula, without the library's kernel or loss code.
pub fn oracle_objective(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    beta: &[f64],
    b: &[f64],
    c: f64,
    eps: f64,
    gamma: f64,
) -> f64 {
    let n = x.nrows();
    let h = y.ncols();
    let k = |i: usize, j: usize| {
        let d2: f64 = (0..x.ncols()).map(|c| (x[(i, c)] - x[(j, c)]).powi(2)).sum();
        (-gamma * d2).exp()
    };
    let bt = |i: usize, j: usize| beta[j * n + i];
    let mut reg = 0.0;
    for j in 0..h {
        for p in 0..n {
            for q in 0..n {
                reg += bt(p, j) * k(p, q) * bt(q, j);
            }
        }
    }
    let mut loss = 0.0;
    for i in 0..n {
        let mut u2 = 0.0;
        for j in 0..h {
            let fit: f64 = (0..n).map(|q| k(i, q) * bt(q, j)).sum::<f64>() + b[j];
            u2 += (y[(i, j)] - fit).powi(2);
        }
        let u = u2.sqrt();
        if u >= eps {
            loss += (u - eps).powi(2);
        }
    }
    0.5 * reg + c * loss
}

/// Plain Nelder-Mead with dimension-adaptive coefficients.
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, max_evals: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evals = n + 1;
    while evals < max_evals {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        if (vals[n] - vals[0]).abs() <= 1e-15 * (1.0 + vals[0].abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|d| simplex[..n].iter().map(|v| v[d]).sum::<f64>() / nf).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|d| centroid[d] + t * (simplex[n][d] - centroid[d])).collect() };
        let xr = along(-alpha);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(-alpha * gamma);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[n] = xe;
                vals[n] = fe;
            } else {
                simplex[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            simplex[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(-alpha * rho);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(rho);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < vals[n].min(fr) {
                simplex[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    for d in 0..n {
                        simplex[i][d] = simplex[0][d] + sigma * (simplex[i][d] - simplex[0][d]);
                    }
                    vals[i] = f(&simplex[i]);
                }
                evals += n;
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (simplex[best].clone(), vals[best])
}

/// Restarted Nelder-Mead on the objective over `(β, b)` starting from zero.
pub fn oracle_minimum(x: &DMatrix<f64>, y: &DMatrix<f64>, c: f64, eps: f64, gamma: f64) -> f64 {
    let n = x.nrows();
    let h = y.ncols();
    let f = |z: &[f64]| oracle_objective(x, y, &z[..n * h], &z[n * h..], c, eps, gamma);
    let mut z = vec![0.0; n * h + h];
    let mut best = f(&z);
    let mut step = 1.0;
    for _ in 0..60 {
        let (z2, f2) = nelder_mead(&f, &z, step, 40_000);
        let gain = best - f2;
        if f2 < best {
            z = z2;
            best = f2;
        }
        if gain <= 1e-13 * (1.0 + best.abs()) {
            step *= 0.3;
            if step < 1e-6 {
                break;
            }
        }
    }
    best
}

pub fn random_matrix(rng: &mut impl Rng, n: usize, d: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.gen_range(lo..hi))
}

/// Forward Euler for Mackey-Glass with a constant history `phi0`; values at multiples of `dt`.
pub fn mackey_glass_euler(phi0: f64, tau: f64, dt: f64, t_end: f64) -> Vec<f64> {
    let lag = (tau / dt).round() as usize;
    let steps = (t_end / dt).round() as usize;
    let mut v = vec![phi0; steps + 1];
    for i in 0..steps {
        let delayed = if i >= lag { v[i - lag] } else { phi0 };
        v[i + 1] = v[i] + dt * (0.2 * delayed / (1.0 + delayed.powi(10)) - 0.1 * v[i]);
    }
    v
}

/// A compact manifest over inline series, cheap enough for tests.
pub fn inline_manifest(series: Vec<(&str, Vec<f64>, Option<usize>)>, holdout: usize) -> ExperimentManifest {
    ExperimentManifest {
        name: "test".into(),
        series: series
            .into_iter()
            .map(|(id, values, period)| SeriesSource::Inline {
                id: id.into(),
                values,
                period,
            })
            .collect(),
        holdout,
        replicates: 2,
        seed: 11,
        max_lag: 6,
        cv_folds: 3,
        pso: PsoConfig {
            swarm_size: 4,
            iterations: 2,
            ..PsoConfig::default()
        },
        ..ExperimentManifest::default()
    }
}

/// Seasonal series with a trend: `(10 + 0.05 t)(1 + 0.3 sin(2πt/p)) + noise`.
pub fn seasonal_series(len: usize, period: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len)
        .map(|t| {
            let tf = t as f64;
            (10.0 + 0.05 * tf) * (1.0 + 0.3 * (2.0 * std::f64::consts::PI * tf / period as f64).sin())
                + rng.gen_range(-0.2..0.2)
        })
        .collect()
}

pub fn workspace_root() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Runs one manifest twice with a perturbed hold-out and checks that nothing
/// but the actuals (and scores) changes.
pub fn leakage_check() -> Result<(), String> {
    use msvr_forecast::harness::run_experiment;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let values = seasonal_series(96, 12, &mut rng);
    let holdout = 6;
    let mut perturbed = values.clone();
    let cut = values.len() - holdout;
    for v in &mut perturbed[cut..] {
        *v = *v * 3.0 + 100.0;
    }
    let a = run_experiment(&inline_manifest(vec![("s", values, Some(12))], holdout)).map_err(|e| e.to_string())?;
    let b = run_experiment(&inline_manifest(vec![("s", perturbed, Some(12))], holdout)).map_err(|e| e.to_string())?;
    let (x, y) = (&a.artifacts[0], &b.artifacts[0]);
    if x.actuals == y.actuals {
        return Err("perturbation did not reach the hold-out".into());
    }
    if x.preprocessing != y.preprocessing {
        return Err("preprocessing depends on the hold-out".into());
    }
    if x.selections != y.selections {
        return Err("input selection depends on the hold-out".into());
    }
    if x.tuning != y.tuning {
        return Err("tuning depends on the hold-out".into());
    }
    if x.forecasts != y.forecasts {
        return Err("forecasts depend on the hold-out".into());
    }
    Ok(())
}

/// Runs the same manifest into two directories and compares every seed-determined file.
pub fn determinism_check() -> Result<(), String> {
    use msvr_forecast::harness::run_experiment;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
    let s1 = seasonal_series(80, 12, &mut rng);
    let s2: Vec<f64> = (0..80).map(|t| 5.0 + (t as f64 * 0.3).sin() + rng.gen_range(-0.1..0.1)).collect();
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    for d in &dirs {
        let mut m = inline_manifest(vec![("a", s1.clone(), Some(12)), ("b", s2.clone(), None)], 6);
        m.output_dir = Some(d.path().to_path_buf());
        run_experiment(&m).map_err(|e| e.to_string())?;
    }
    let mut files = vec![
        "metrics.csv".to_string(),
        "metrics_replicate_1.csv".into(),
        "metrics_replicate_2.csv".into(),
        "tukey.txt".into(),
        "tukey_pairs.csv".into(),
        "reproducibility.json".into(),
    ];
    files.extend(["series/a.json".to_string(), "series/b.json".to_string()]);
    for f in files {
        let x = std::fs::read(dirs[0].path().join(&f)).map_err(|e| format!("{f}: {e}"))?;
        let y = std::fs::read(dirs[1].path().join(&f)).map_err(|e| format!("{f}: {e}"))?;
        if x != y {
            return Err(format!("{f} differs between identical runs"));
        }
    }
    Ok(())
}

/// Largest `|inverse(forward(v)) − v|` over estimation and hold-out values.
pub fn preprocessing_roundtrip_error(seed: u64) -> f64 {
    use msvr_forecast::preprocessing::{PreprocessOptions, PreprocessRecord};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let values = seasonal_series(120, 12, &mut rng);
    let (est, hold) = values.split_at(102);
    let (transformed, rec) = PreprocessRecord::fit(est, Some(12), &PreprocessOptions::default()).unwrap();
    let back = rec.inverse(&transformed, 0);
    let fwd = rec.forward(hold, est.len());
    let back_hold = rec.inverse(&fwd, est.len());
    est.iter()
        .zip(&back)
        .chain(hold.iter().zip(&back_hold))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}
