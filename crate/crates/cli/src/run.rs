//! Experiment orchestration and output writing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wdrc::design::{self, BoundReport, LambdaPoint, PolicyBundle, Provenance};
use wdrc::io::fmt_f64;
use wdrc::model::{CostWeights, DisturbanceModel, LinearSystem, NominalMoments};
use wdrc::sim::{self, CostSummary, OutOfSampleOptions, Scenario, StabilityReport};

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Design,
    Simulate,
    Compare,
    SweepTheta,
    SweepLambda,
    Tune,
}

/// Contents of `solution.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionFile {
    pub provenance: Provenance,
    /// In fixed-lambda mode the bound is reported at `theta = 0`.
    pub bound: BoundReport,
    pub stability: Option<StabilityReport>,
    pub bundle: PolicyBundle,
}

struct Problem {
    sys: LinearSystem,
    weights: CostWeights,
    truth: DisturbanceModel,
    nominal: NominalMoments,
    provenance: Provenance,
    out_dir: PathBuf,
}

fn config_hash(cfg: &ExperimentConfig) -> Result<String, CliError> {
    // hash the effective config (after flag overrides), minus the output path
    let mut canonical = cfg.clone();
    canonical.output_dir = None;
    let text = serde_json::to_string(&canonical).map_err(|e| CliError::Schema(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

fn prepare(cfg: &ExperimentConfig) -> Result<Problem, CliError> {
    let sys = cfg.system.build()?;
    let weights = cfg.weights(&sys)?;
    let truth = cfg.truth.build("truth")?;
    if truth.dim() != sys.n_x() {
        return Err(CliError::schema(
            "truth",
            format!("dimension {} does not match n_x = {}", truth.dim(), sys.n_x()),
        ));
    }
    let nominal = cfg.nominal(&truth)?;
    if nominal.dim() != sys.n_x() {
        return Err(CliError::schema(
            "nominal",
            format!("dimension {} does not match n_x = {}", nominal.dim(), sys.n_x()),
        ));
    }
    let out_dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir).map_err(|source| CliError::Io {
        path: out_dir.clone(),
        source,
    })?;
    Ok(Problem {
        sys,
        weights,
        truth,
        nominal,
        provenance: Provenance {
            config_hash: Some(config_hash(cfg)?),
            seed: Some(cfg.simulation.seed),
        },
        out_dir,
    })
}

fn lambda_grid(cfg: &ExperimentConfig, p: &Problem) -> Result<Vec<f64>, CliError> {
    match &cfg.lambda_grid.values {
        Some(v) => Ok(v.clone()),
        None => Ok(design::default_lambda_grid(
            &p.sys,
            &p.weights,
            cfg.lambda_grid.points,
            cfg.lambda_grid.hi,
            &cfg.design_options(),
        )?),
    }
}

/// WDRC design in either mode, plus the lambda curve when tuning.
fn synthesize(cfg: &ExperimentConfig, p: &Problem) -> Result<(PolicyBundle, BoundReport, Option<Vec<LambdaPoint>>), CliError> {
    let opts = cfg.design_options();
    let (mut bundle, report, curve) = match (cfg.lambda, cfg.theta) {
        (Some(lambda), _) => {
            let b = design::design_wdrc_with(&p.sys, &p.weights, &p.nominal, lambda, &opts)?;
            let rho = b.steady()?.rho;
            (b, design::guaranteed_bound(0.0, lambda, rho)?, None)
        }
        (None, Some(theta)) => {
            let grid = lambda_grid(cfg, p)?;
            let tuned = design::tune_lambda(&p.sys, &p.weights, &p.nominal, theta, &grid, &opts)?;
            log::info!("theta = {theta}: chose lambda = {}", tuned.lambda);
            (tuned.bundle, tuned.report, Some(tuned.curve))
        }
        (None, None) => unreachable!("validated"),
    };
    bundle.provenance = p.provenance.clone();
    Ok((bundle, report, curve))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_solution(p: &Problem, bundle: &PolicyBundle, bound: BoundReport) -> Result<(), CliError> {
    let stability = sim::stability_report(bundle).ok();
    let file = SolutionFile {
        provenance: p.provenance.clone(),
        bound,
        stability,
        bundle: bundle.clone(),
    };
    let path = p.out_dir.join("solution.json");
    let text = wdrc::io::to_json_string(&file).map_err(|e| CliError::Schema(e.to_string()))?;
    std::fs::write(&path, text).map_err(io_err(&path))
}

fn write_summary(p: &Problem, summaries: &[CostSummary]) -> Result<(), CliError> {
    let path = p.out_dir.join("summary.csv");
    let mut out = create(&path)?;
    sim::write_summary_csv(summaries, &mut out).map_err(io_err(&path))?;
    out.flush().map_err(io_err(&path))
}

fn write_lambda_curve(p: &Problem, curve: &[LambdaPoint]) -> Result<(), CliError> {
    let path = p.out_dir.join("lambda_curve.csv");
    let mut out = create(&path)?;
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    let mut body = String::from("lambda,rho,bound,error\n");
    for pt in curve {
        let err = pt.error.as_deref().unwrap_or("").replace(['"', ','], " ");
        body.push_str(&format!("{},{},{},{}\n", fmt_f64(pt.lambda), opt(pt.rho), opt(pt.bound), err));
    }
    out.write_all(body.as_bytes()).map_err(io_err(&path))?;
    out.flush().map_err(io_err(&path))
}

fn scenario(cfg: &ExperimentConfig, p: &Problem) -> Result<Scenario, CliError> {
    let sim_cfg = &cfg.simulation;
    Ok(Scenario {
        disturbance: sim::DisturbanceSource::Truth { model: p.truth.clone() },
        initial_state: sim_cfg.initial_state.as_ref().map(|d| d.build("simulation.initial_state")).transpose()?,
        measurement_noise: sim_cfg
            .measurement_noise
            .as_ref()
            .map(|d| d.build("simulation.measurement_noise"))
            .transpose()?,
    })
}

fn monte_carlo(cfg: &ExperimentConfig, bundle: &PolicyBundle, sc: &Scenario, no_timing: bool) -> Result<CostSummary, CliError> {
    let s = &cfg.simulation;
    let mut summary = sim::monte_carlo_summary(bundle, sc, s.horizon, s.runs, s.seed)?;
    if no_timing {
        summary.wall_time = 0.0;
    }
    Ok(summary)
}

fn write_traces(cfg: &ExperimentConfig, p: &Problem, bundle: &PolicyBundle, sc: &Scenario) -> Result<(), CliError> {
    let s = &cfg.simulation;
    if s.traces == 0 {
        return Ok(());
    }
    let prepared = sim::PreparedScenario::new(bundle, sc)?;
    let label = bundle.method.label().to_lowercase();
    for run in 0..s.traces.min(s.runs) {
        // same substream as run `run` of the Monte Carlo summary
        let trace = sim::simulate(bundle, &prepared, s.horizon, &mut sim::run_rng(s.seed, run as u64))?;
        let path = p.out_dir.join(format!("trace_{label}_{run}.csv"));
        let mut out = create(&path)?;
        trace.write_csv(&mut out).map_err(io_err(&path))?;
        out.flush().map_err(io_err(&path))?;
    }
    Ok(())
}

fn sweep_theta(cfg: &ExperimentConfig, p: &Problem) -> Result<(), CliError> {
    let opts = OutOfSampleOptions {
        datasets: cfg.sweep.datasets,
        runs: cfg.simulation.runs,
        horizon: cfg.simulation.horizon,
        lambda_grid: cfg.lambda_grid.values.clone(),
        jitter: cfg.sweep.jitter,
        design: cfg.design_options(),
    };
    let cells = sim::out_of_sample_curve(
        &p.sys,
        &p.weights,
        &p.truth,
        &cfg.sweep.sample_sizes,
        &cfg.sweep.thetas,
        cfg.simulation.seed,
        &opts,
    )?;
    let path = p.out_dir.join("out_of_sample.csv");
    let mut out = create(&path)?;
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    let mut body = String::from("n_samples,theta,mean_cost,mean_bound,mean_lambda,violation_fraction,successful_datasets\n");
    for c in &cells {
        body.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.n_samples,
            fmt_f64(c.theta),
            opt(c.mean_cost),
            opt(c.mean_bound),
            opt(c.mean_lambda),
            opt(c.violation_fraction),
            c.successful_datasets
        ));
    }
    out.write_all(body.as_bytes()).map_err(io_err(&path))?;
    out.flush().map_err(io_err(&path))
}

fn sweep_lambda(cfg: &ExperimentConfig, p: &Problem) -> Result<(), CliError> {
    let grid = lambda_grid(cfg, p)?;
    let theta = cfg.theta.unwrap_or(0.0);
    let tuned = design::tune_lambda(&p.sys, &p.weights, &p.nominal, theta, &grid, &cfg.design_options());
    let curve = match tuned {
        Ok(t) => t.curve,
        // an all-inadmissible grid is still a valid sweep result
        Err(wdrc::WdrcError::NoAdmissibleLambda { .. }) => grid
            .iter()
            .map(|&lambda| LambdaPoint {
                lambda,
                rho: None,
                bound: None,
                error: Some("inadmissible".into()),
            })
            .collect(),
        Err(e) => return Err(e.into()),
    };
    write_lambda_curve(p, &curve)
}

pub fn run_experiment(cfg: &ExperimentConfig, mode: Mode, no_timing: bool) -> Result<(), CliError> {
    let p = prepare(cfg)?;
    match mode {
        Mode::SweepTheta => return sweep_theta(cfg, &p),
        Mode::SweepLambda => return sweep_lambda(cfg, &p),
        Mode::Tune if cfg.theta.is_none() => {
            return Err(CliError::schema("theta", "tune needs `theta` (or --theta)"));
        }
        _ => {}
    }
    let (bundle, bound, curve) = synthesize(cfg, &p)?;
    write_solution(&p, &bundle, bound)?;
    if let (Mode::Tune, Some(curve)) = (mode, &curve) {
        write_lambda_curve(&p, curve)?;
    }
    match mode {
        Mode::Simulate => {
            let sc = scenario(cfg, &p)?;
            let summary = monte_carlo(cfg, &bundle, &sc, no_timing)?;
            write_summary(&p, &[summary])?;
            write_traces(cfg, &p, &bundle, &sc)?;
        }
        Mode::Compare => {
            let sc = scenario(cfg, &p)?;
            let mut lqg = design::design_lqg(&p.sys, &p.weights, &p.nominal)?;
            lqg.provenance = p.provenance.clone();
            let a = monte_carlo(cfg, &bundle, &sc, no_timing)?;
            let b = monte_carlo(cfg, &lqg, &sc, no_timing)?;
            write_summary(&p, &[a, b])?;
            write_traces(cfg, &p, &bundle, &sc)?;
            write_traces(cfg, &p, &lqg, &sc)?;
        }
        _ => {}
    }
    Ok(())
}
