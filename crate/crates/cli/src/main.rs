use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use msvr_forecast::harness::{
    benchmark_strategies, ingest_csv, prepare_series, run_experiment, EvaluationReport,
    ExperimentManifest,
};
use msvr_forecast::selection::{select_inputs, SearchMethod};
use msvr_forecast::simulators::{
    henon_generate, henon_row, mackey_glass_generate, mackey_glass_row, HenonConfig,
    MackeyGlassConfig,
};
use msvr_forecast::strategies::{embed, Embedding};
use msvr_forecast::tuning::{tune, PsoConfig};
use msvr_forecast::{Strategy, TimeSeries};

#[derive(Parser)]
#[command(name = "msvr", version, about = "M-SVR multi-step-ahead forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    Henon,
    MackeyGlass,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Iterated,
    Direct,
    Mimo,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Iterated => Strategy::Iterated,
            StrategyArg::Direct => Strategy::Direct,
            StrategyArg::Mimo => Strategy::Mimo,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SearchArg {
    Windows,
    Forward,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a benchmark series and write it as a one-column CSV.
    Generate {
        #[arg(value_enum)]
        kind: Generator,
        /// Row of the simulation table (1-20).
        #[arg(long)]
        row: Option<usize>,
        #[arg(long)]
        x0: Option<f64>,
        #[arg(long)]
        y0: Option<f64>,
        #[arg(long)]
        phi0: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Validate a CSV file and list its series.
    Ingest { path: PathBuf },
    /// Delta-test lag selection on the series of a CSV file.
    SelectInputs {
        path: PathBuf,
        #[arg(long, default_value_t = 20)]
        max_lag: usize,
        #[arg(long, default_value_t = 18)]
        horizon: usize,
        #[arg(long, value_enum, default_value = "mimo")]
        strategy: StrategyArg,
        #[arg(long, value_enum, default_value = "windows")]
        search: SearchArg,
    },
    /// PSO tuning of one strategy for every series of a manifest.
    Tune {
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "mimo")]
        strategy: StrategyArg,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a full experiment.
    Run {
        manifest: PathBuf,
        #[arg(long, env = "MSVR_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
        #[arg(long, env = "MSVR_THREADS")]
        threads: Option<usize>,
    },
    /// Time the three strategies under equal tuning budgets.
    Bench {
        manifest: PathBuf,
        #[arg(long, env = "MSVR_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
        #[arg(long, env = "MSVR_THREADS")]
        threads: Option<usize>,
    },
    /// Re-render tables from a run directory's report.json.
    Report {
        dir: PathBuf,
        /// Where to write the tables; defaults to `dir`.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Generate {
            kind,
            row,
            x0,
            y0,
            phi0,
            tau,
            length,
            burn_in,
            output,
        } => {
            let series = match kind {
                Generator::Henon => {
                    let mut cfg = match row {
                        Some(r) => henon_row(r)?,
                        None => HenonConfig::new(x0.unwrap_or(0.1), y0.unwrap_or(0.1), length.unwrap_or(1000)),
                    };
                    if let Some(v) = x0 {
                        cfg.x0 = v;
                    }
                    if let Some(v) = y0 {
                        cfg.y0 = v;
                    }
                    if let Some(v) = length {
                        cfg.length = v;
                    }
                    if let Some(v) = burn_in {
                        cfg.burn_in = v;
                    }
                    henon_generate(&cfg)?
                }
                Generator::MackeyGlass => {
                    let mut cfg = match row {
                        Some(r) => mackey_glass_row(r)?,
                        None => MackeyGlassConfig::new(phi0.unwrap_or(1.2), tau.unwrap_or(17.0), length.unwrap_or(1000)),
                    };
                    if let Some(v) = phi0 {
                        cfg.phi0 = v;
                    }
                    if let Some(v) = tau {
                        cfg.tau = v;
                    }
                    if let Some(v) = length {
                        cfg.length = v;
                    }
                    if let Some(v) = burn_in {
                        cfg.burn_in = v;
                    }
                    mackey_glass_generate(&cfg)?
                }
            };
            write_series(&series, output.as_deref())
        }
        Command::Ingest { path } => {
            let list = ingest_csv(&path)?;
            println!("{} series in {}", list.len(), path.display());
            for s in list {
                println!("{}\t{}", s.id, s.len());
            }
            Ok(())
        }
        Command::SelectInputs {
            path,
            max_lag,
            horizon,
            strategy,
            search,
        } => {
            let search = match search {
                SearchArg::Windows => SearchMethod::ExhaustiveWindows,
                SearchArg::Forward => SearchMethod::Forward,
            };
            for s in ingest_csv(&path)? {
                let r = select_inputs(&s, max_lag, horizon, strategy.into(), search)?;
                println!("{}\tlags {}\tdelta {:.6e}\t({} candidates)", s.id, r.chosen_lags, r.delta_value, r.candidates_evaluated);
            }
            Ok(())
        }
        Command::Tune { manifest, strategy, seed } => {
            let m = load_manifest(&manifest, None, None)?;
            let strategy: Strategy = strategy.into();
            let m = ExperimentManifest {
                strategies: vec![strategy],
                ..m
            };
            for loaded in msvr_forecast::harness::load_series(&m) {
                let series = match loaded {
                    Ok(s) => s,
                    Err(f) => {
                        eprintln!("{}: {}", f.id, f.message);
                        continue;
                    }
                };
                let (est, _) = series.split(m.holdout)?;
                let prep = prepare_series(&est, &m)?;
                let lags = &prep.selections[&strategy].chosen_lags;
                let ds = match embed(&prep.transformed, lags, m.holdout, strategy)? {
                    Embedding::Single(d) => d,
                    Embedding::PerHorizon(mut v) => v.swap_remove(0),
                };
                let pso = PsoConfig {
                    seed: seed.unwrap_or(m.seed),
                    ..m.pso
                };
                let t = tune(&ds, &pso, m.cv_folds, &m.solver)?;
                println!(
                    "{}\tlags {}\tC {:.4e}\teps {:.4e}\tgamma {:.4e}\tcv_mse {:.6e}",
                    series.id, lags, t.hyper.c, t.hyper.epsilon, t.hyper.kernel.gamma, t.best_fitness
                );
            }
            Ok(())
        }
        Command::Run {
            manifest,
            output_dir,
            threads,
        } => {
            let m = load_manifest(&manifest, output_dir, threads)?;
            let run = run_experiment(&m)?;
            print!("{}", run.report.summary_text()?);
            if let Some(dir) = &m.output_dir {
                println!("results written to {}", dir.display());
            }
            Ok(())
        }
        Command::Bench {
            manifest,
            output_dir,
            threads,
        } => {
            let m = load_manifest(&manifest, output_dir, threads)?;
            let summary = benchmark_strategies(&m)?;
            print!("{}", summary.text());
            for f in &summary.failures {
                eprintln!("failed: {} ({}): {}", f.id, f.stage, f.message);
            }
            Ok(())
        }
        Command::Report { dir, output_dir } => {
            let report = EvaluationReport::load(&dir.join("report.json"))
                .with_context(|| format!("reading {}", dir.join("report.json").display()))?;
            report.write_tables(output_dir.as_deref().unwrap_or(&dir))?;
            print!("{}", report.summary_text()?);
            Ok(())
        }
    }
}

fn load_manifest(path: &Path, output_dir: Option<PathBuf>, threads: Option<usize>) -> Result<ExperimentManifest> {
    let mut m = ExperimentManifest::load(path).with_context(|| format!("loading manifest {}", path.display()))?;
    if output_dir.is_some() {
        m.output_dir = output_dir;
    }
    if let Some(t) = threads {
        if t == 0 {
            bail!("threads must be at least 1");
        }
        m.threads = Some(t);
    }
    m.validate()?;
    Ok(m)
}

fn write_series(series: &TimeSeries, output: Option<&Path>) -> Result<()> {
    let mut text = format!("{}\n", series.id);
    for v in series.values() {
        text.push_str(&format!("{v}\n"));
    }
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}
