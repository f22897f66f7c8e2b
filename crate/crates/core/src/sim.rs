//! Closed-loop simulation, Monte Carlo cost estimates, out-of-sample
//! experiments and mean-state stability diagnostics.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::bures_squared;
use crate::design::{self, DesignOptions, Method, PolicyBundle};
use crate::error::{Result, WdrcError};
use crate::estimator::{self, BeliefState};
use crate::io::{self, fmt_f64};
use crate::linalg::{self, Mat, Vector};
use crate::model::{empirical_moments, CostWeights, DisturbanceModel, LinearSystem, PreparedSampler};

/// Where the disturbances come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DisturbanceSource {
    /// I.i.d. draws from a fixed distribution.
    Truth { model: DisturbanceModel },
    /// Gaussian with the adversary's mean `H x̄ + G` and covariance `Σ*`.
    WorstCase,
}

/// Simulation setting. Missing initial-state and noise models default to
/// `N(m0, M0)` and `N(0, M)` from the plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub disturbance: DisturbanceSource,
    pub initial_state: Option<DisturbanceModel>,
    pub measurement_noise: Option<DisturbanceModel>,
}

impl Scenario {
    pub fn truth(model: DisturbanceModel) -> Self {
        Self {
            disturbance: DisturbanceSource::Truth { model },
            initial_state: None,
            measurement_noise: None,
        }
    }

    pub fn worst_case() -> Self {
        Self {
            disturbance: DisturbanceSource::WorstCase,
            initial_state: None,
            measurement_noise: None,
        }
    }

    /// Zero disturbance and noise with the initial state fixed at `m0`.
    pub fn noiseless(sys: &LinearSystem) -> Self {
        Self {
            disturbance: DisturbanceSource::Truth {
                model: DisturbanceModel::zero(sys.n_x()),
            },
            initial_state: Some(DisturbanceModel::Gaussian {
                mean: sys.m0.clone(),
                cov: Mat::zeros(sys.n_x(), sys.n_x()),
            }),
            measurement_noise: Some(DisturbanceModel::zero(sys.n_y())),
        }
    }
}

/// Per-step record of one closed-loop run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub horizon: usize,
    /// `x_0..x_T`.
    #[serde(with = "io::vector_list")]
    pub x: Vec<Vector>,
    /// `x̄_0..x̄_T`.
    #[serde(with = "io::vector_list")]
    pub x_hat: Vec<Vector>,
    /// `u_0..u_{T-1}`.
    #[serde(with = "io::vector_list")]
    pub u: Vec<Vector>,
    /// `y_0..y_T`.
    #[serde(with = "io::vector_list")]
    pub y: Vec<Vector>,
    /// `x_tᵀQx_t + u_tᵀRu_t`.
    pub stage_cost: Vec<f64>,
    /// Stage cost minus `λ G²` of the disturbance law used at that step.
    pub penalized_stage_cost: Vec<f64>,
    /// `x_Tᵀ Q_f x_T`.
    pub terminal_cost: f64,
}

impl SimulationTrace {
    pub fn total_cost(&self) -> f64 {
        self.stage_cost.iter().sum::<f64>() + self.terminal_cost
    }

    pub fn average_cost(&self) -> f64 {
        self.stage_cost.iter().sum::<f64>() / self.horizon as f64
    }

    pub fn average_penalized_cost(&self) -> f64 {
        self.penalized_stage_cost.iter().sum::<f64>() / self.horizon as f64
    }

    /// CSV with header `t,x_*,xhat_*,u_*,y_*,stage_cost`. The last row
    /// (`t = T`) has empty input fields and the terminal cost.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n_x = self.x.first().map_or(0, |v| v.len());
        let n_u = self.u.first().map_or(0, |v| v.len());
        let n_y = self.y.first().map_or(0, |v| v.len());
        let mut header = vec!["t".to_string()];
        header.extend((0..n_x).map(|i| format!("x_{i}")));
        header.extend((0..n_x).map(|i| format!("xhat_{i}")));
        header.extend((0..n_u).map(|i| format!("u_{i}")));
        header.extend((0..n_y).map(|i| format!("y_{i}")));
        header.push("stage_cost".into());
        writeln!(out, "{}", header.join(","))?;
        for t in 0..=self.horizon {
            let mut row = vec![t.to_string()];
            row.extend(self.x[t].iter().map(|&v| fmt_f64(v)));
            row.extend(self.x_hat[t].iter().map(|&v| fmt_f64(v)));
            if t < self.horizon {
                row.extend(self.u[t].iter().map(|&v| fmt_f64(v)));
            } else {
                row.extend(std::iter::repeat_n(String::new(), n_u));
            }
            row.extend(self.y[t].iter().map(|&v| fmt_f64(v)));
            let cost = if t < self.horizon {
                self.stage_cost[t]
            } else {
                self.terminal_cost
            };
            row.push(fmt_f64(cost));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Random stream for run `run` derived from `base_seed`.
pub fn run_rng(base_seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(run);
    rng
}

/// Samplers with cached factors, shared across runs.
pub struct PreparedScenario {
    disturbance: Option<PreparedSampler>,
    worst_case: Option<PreparedSampler>,
    initial: PreparedSampler,
    noise: PreparedSampler,
    /// `λ B²(Σ*, Σ̂)`, the covariance part of the per-stage penalty.
    cov_penalty: f64,
}

impl PreparedScenario {
    pub fn new(bundle: &PolicyBundle, scenario: &Scenario) -> Result<Self> {
        let sys = &bundle.system;
        let initial = scenario
            .initial_state
            .clone()
            .unwrap_or_else(|| DisturbanceModel::Gaussian {
                mean: sys.m0.clone(),
                cov: sys.m0_cov.clone(),
            });
        let noise = scenario
            .measurement_noise
            .clone()
            .unwrap_or_else(|| DisturbanceModel::Gaussian {
                mean: Vector::zeros(sys.n_y()),
                cov: sys.m.clone(),
            });
        check_dim("initial state", initial.dim(), sys.n_x())?;
        check_dim("measurement noise", noise.dim(), sys.n_y())?;
        let (disturbance, worst_case) = match &scenario.disturbance {
            DisturbanceSource::Truth { model } => {
                check_dim("disturbance", model.dim(), sys.n_x())?;
                (Some(model.prepare()?), None)
            }
            DisturbanceSource::WorstCase => {
                let st = bundle.steady()?;
                let model = DisturbanceModel::Gaussian {
                    mean: Vector::zeros(sys.n_x()),
                    cov: st.sigma_star.clone(),
                };
                (None, Some(model.prepare()?))
            }
        };
        let cov_penalty = match (&worst_case, &bundle.steady) {
            (Some(_), Some(st)) => st.lambda * bures_squared(&st.sigma_star, &bundle.nominal.sigma_hat),
            _ => 0.0,
        };
        Ok(Self {
            disturbance,
            worst_case,
            initial: initial.prepare()?,
            noise: noise.prepare()?,
            cov_penalty,
        })
    }
}

fn check_dim(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(WdrcError::Dimension(format!("{name} has dimension {got}, expected {want}")));
    }
    Ok(())
}

pub fn run_closed_loop(bundle: &PolicyBundle, scenario: &Scenario, horizon: usize, seed: u64) -> Result<SimulationTrace> {
    let prepared = PreparedScenario::new(bundle, scenario)?;
    simulate(bundle, &prepared, horizon, &mut run_rng(seed, 0))
}

/// One run with an explicit stream. Draw order: `x_0`, `v_0`, then per step
/// `w_t`, `v_{t+1}`.
pub fn simulate(
    bundle: &PolicyBundle,
    prepared: &PreparedScenario,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SimulationTrace> {
    if horizon == 0 {
        return Err(WdrcError::InvalidInput("horizon must be at least 1".into()));
    }
    let sys = &bundle.system;
    let w = &bundle.weights;
    let mode = bundle.gain_mode();
    let lambda = bundle.steady.as_ref().map(|s| s.lambda);

    let mut x = prepared.initial.sample(rng);
    let y0 = &sys.c * &x + prepared.noise.sample(rng);
    let mut belief = estimator::initial_belief(sys, &y0, &mode)?;

    let mut trace = SimulationTrace {
        horizon,
        x: Vec::with_capacity(horizon + 1),
        x_hat: Vec::with_capacity(horizon + 1),
        u: Vec::with_capacity(horizon),
        y: Vec::with_capacity(horizon + 1),
        stage_cost: Vec::with_capacity(horizon),
        penalized_stage_cost: Vec::with_capacity(horizon),
        terminal_cost: 0.0,
    };
    trace.y.push(y0);
    for _ in 0..horizon {
        let u = bundle.control(&belief.x_bar);
        let w_bar = bundle.disturbance_mean(&belief.x_bar);
        let (dist, penalty) = match (&prepared.disturbance, &prepared.worst_case) {
            (Some(s), _) => (s.sample(rng), 0.0),
            (None, Some(wc)) => {
                let shift = (&w_bar - &bundle.nominal.w_hat).norm_squared();
                let pen = lambda.unwrap_or(0.0) * shift + prepared.cov_penalty;
                (wc.sample_shifted(&w_bar, rng), pen)
            }
            (None, None) => unreachable!("scenario has a disturbance source"),
        };
        let cost = x.dot(&(&w.q * &x)) + u.dot(&(&w.r * &u));
        let next = &sys.a * &x + &sys.b * &u + dist;
        let y = &sys.c * &next + prepared.noise.sample(rng);
        let next_belief = estimator::filter_step(&belief, &u, &w_bar, &y, sys, &mode)?;

        trace.x.push(std::mem::replace(&mut x, next));
        trace.x_hat.push(std::mem::replace(&mut belief, next_belief).x_bar);
        trace.u.push(u);
        trace.y.push(y);
        trace.stage_cost.push(cost);
        trace.penalized_stage_cost.push(cost - penalty);
    }
    trace.terminal_cost = x.dot(&(&w.qf * &x));
    trace.x.push(x);
    trace.x_hat.push(belief.x_bar);
    if !trace.total_cost().is_finite() {
        return Err(WdrcError::InvalidInput("simulation produced a non-finite cost".into()));
    }
    Ok(trace)
}

/// Monte Carlo summary of total and average costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub method: String,
    pub runs: usize,
    pub mean_total_cost: f64,
    pub std_total_cost: f64,
    pub mean_avg_cost: f64,
    /// Standard error of `mean_avg_cost`.
    pub se_avg_cost: f64,
    pub wall_time: f64,
}

struct RunStats {
    total: f64,
    average: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    // shifted by the first value so identical runs give exactly zero spread
    let n = values.len() as f64;
    let shift = values[0];
    let dev: Vec<f64> = values.iter().map(|v| v - shift).collect();
    let mean_dev = dev.iter().sum::<f64>() / n;
    let mean = shift + mean_dev;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = dev.iter().map(|d| (d - mean_dev).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs are simulated in parallel on independent substreams and reduced in
/// run order, so results do not depend on scheduling.
pub fn monte_carlo_summary(
    bundle: &PolicyBundle,
    scenario: &Scenario,
    horizon: usize,
    runs: usize,
    base_seed: u64,
) -> Result<CostSummary> {
    if runs == 0 {
        return Err(WdrcError::InvalidInput("runs must be at least 1".into()));
    }
    let start = Instant::now();
    let prepared = PreparedScenario::new(bundle, scenario)?;
    let stats: Vec<RunStats> = (0..runs as u64)
        .into_par_iter()
        .map(|run| {
            let trace = simulate(bundle, &prepared, horizon, &mut run_rng(base_seed, run))?;
            Ok(RunStats {
                total: trace.total_cost(),
                average: trace.average_cost(),
            })
        })
        .collect::<Result<_>>()?;
    let totals: Vec<f64> = stats.iter().map(|s| s.total).collect();
    let avgs: Vec<f64> = stats.iter().map(|s| s.average).collect();
    let (mean_total_cost, std_total_cost) = mean_std(&totals);
    let (mean_avg_cost, std_avg) = mean_std(&avgs);
    Ok(CostSummary {
        method: bundle.method.label().to_string(),
        runs,
        mean_total_cost,
        std_total_cost,
        mean_avg_cost,
        se_avg_cost: std_avg / (runs as f64).sqrt(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Summary CSV with the fixed header `method,runs,mean_cost,std_cost,wall_time_s`.
pub fn write_summary_csv<W: Write>(summaries: &[CostSummary], mut out: W) -> std::io::Result<()> {
    writeln!(out, "method,runs,mean_cost,std_cost,wall_time_s")?;
    for s in summaries {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.method,
            s.runs,
            fmt_f64(s.mean_total_cost),
            fmt_f64(s.std_total_cost),
            fmt_f64(s.wall_time)
        )?;
    }
    Ok(())
}

/// Time-averaged penalized cost under the worst-case policy pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenalizedEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub runs: usize,
    pub horizon: usize,
}

pub fn penalized_average_cost(bundle: &PolicyBundle, horizon: usize, runs: usize, base_seed: u64) -> Result<PenalizedEstimate> {
    if runs == 0 {
        return Err(WdrcError::InvalidInput("runs must be at least 1".into()));
    }
    bundle.steady()?;
    let prepared = PreparedScenario::new(bundle, &Scenario::worst_case())?;
    let avgs: Vec<f64> = (0..runs as u64)
        .into_par_iter()
        .map(|run| Ok(simulate(bundle, &prepared, horizon, &mut run_rng(base_seed, run))?.average_penalized_cost()))
        .collect::<Result<_>>()?;
    let (mean, std) = mean_std(&avgs);
    Ok(PenalizedEstimate {
        mean,
        std_error: std / (runs as f64).sqrt(),
        runs,
        horizon,
    })
}

/// Settings for [`out_of_sample_curve`].
#[derive(Debug, Clone)]
pub struct OutOfSampleOptions {
    /// Training datasets drawn per cell.
    pub datasets: usize,
    /// Monte Carlo runs per evaluation.
    pub runs: usize,
    pub horizon: usize,
    /// λ grid; `None` uses the default 40-point grid per dataset.
    pub lambda_grid: Option<Vec<f64>>,
    /// Diagonal jitter added to the empirical covariance.
    pub jitter: f64,
    pub design: DesignOptions,
}

impl Default for OutOfSampleOptions {
    fn default() -> Self {
        Self {
            datasets: 20,
            runs: 20,
            horizon: 200,
            lambda_grid: None,
            jitter: 1e-8,
            design: DesignOptions::default(),
        }
    }
}

/// One `(N, θ)` cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutOfSampleCell {
    pub n_samples: usize,
    pub theta: f64,
    /// Mean over datasets of the realized average cost under the truth.
    pub mean_cost: Option<f64>,
    /// Mean over datasets of `θ²λ + ρ`.
    pub mean_bound: Option<f64>,
    pub mean_lambda: Option<f64>,
    /// Fraction of datasets whose realized cost exceeded its bound.
    pub violation_fraction: Option<f64>,
    pub successful_datasets: usize,
    pub failures: Vec<String>,
}

struct DatasetOutcome {
    cost: f64,
    bound: f64,
    lambda: f64,
}

#[allow(clippy::too_many_arguments)]
fn evaluate_dataset(
    sys: &LinearSystem,
    weights: &CostWeights,
    truth: &DisturbanceModel,
    truth_sampler: &PreparedSampler,
    n_samples: usize,
    theta: f64,
    opts: &OutOfSampleOptions,
    seed: u64,
) -> Result<DatasetOutcome> {
    let mut rng = run_rng(seed, 0);
    let samples: Vec<Vector> = (0..n_samples).map(|_| truth_sampler.sample(&mut rng)).collect();
    let nominal = empirical_moments(&samples)?.with_jitter(opts.jitter);
    let grid = match &opts.lambda_grid {
        Some(g) => g.clone(),
        None => design::default_lambda_grid(sys, weights, 40, 1e6, &opts.design)?,
    };
    let tuned = design::tune_lambda(sys, weights, &nominal, theta, &grid, &opts.design)?;
    let summary = monte_carlo_summary(
        &tuned.bundle,
        &Scenario::truth(truth.clone()),
        opts.horizon,
        opts.runs,
        seed ^ 0x9e37_79b9_7f4a_7c15,
    )?;
    Ok(DatasetOutcome {
        cost: summary.mean_avg_cost,
        bound: tuned.report.bound,
        lambda: tuned.lambda,
    })
}

/// Data-driven design evaluated out of sample over a grid of sample sizes
/// and radii. Design failures are recorded per cell.
pub fn out_of_sample_curve(
    sys: &LinearSystem,
    weights: &CostWeights,
    truth: &DisturbanceModel,
    sample_sizes: &[usize],
    thetas: &[f64],
    base_seed: u64,
    opts: &OutOfSampleOptions,
) -> Result<Vec<OutOfSampleCell>> {
    if sample_sizes.is_empty() || thetas.is_empty() {
        return Err(WdrcError::InvalidInput("sample sizes and radii must be nonempty".into()));
    }
    if opts.datasets == 0 {
        return Err(WdrcError::InvalidInput("datasets must be at least 1".into()));
    }
    let sampler = truth.prepare()?;
    let mut cells = Vec::new();
    for (i, &n) in sample_sizes.iter().enumerate() {
        for &theta in thetas {
            let outcomes: Vec<Result<DatasetOutcome>> = (0..opts.datasets as u64)
                .into_par_iter()
                .map(|d| {
                    // same training data for every radius at a given N
                    let seed = base_seed.wrapping_add((i as u64) << 32).wrapping_add(d);
                    evaluate_dataset(sys, weights, truth, &sampler, n, theta, opts, seed)
                })
                .collect();
            let mut ok = Vec::new();
            let mut failures = Vec::new();
            for o in outcomes {
                match o {
                    Ok(v) => ok.push(v),
                    Err(e) => failures.push(e.to_string()),
                }
            }
            let count = ok.len();
            let avg = |f: &dyn Fn(&DatasetOutcome) -> f64| {
                (count > 0).then(|| ok.iter().map(f).sum::<f64>() / count as f64)
            };
            cells.push(OutOfSampleCell {
                n_samples: n,
                theta,
                mean_cost: avg(&|o| o.cost),
                mean_bound: avg(&|o| o.bound),
                mean_lambda: avg(&|o| o.lambda),
                violation_fraction: avg(&|o| if o.cost > o.bound { 1.0 } else { 0.0 }),
                successful_datasets: count,
                failures,
            });
        }
    }
    Ok(cells)
}

/// Spectral diagnostics of a WDRC design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Spectral radius of `A + B K`.
    pub closed_loop_radius: f64,
    /// Spectral radius of `(I + Φ P)⁻¹ A`.
    pub resolvent_radius: f64,
    /// Spectral radius of `A - X̄⁻Cᵀ(CX̄⁻Cᵀ + M)⁻¹CA`.
    pub filter_loop_radius: f64,
    /// Limit of the mean state under the optimal policy pair.
    #[serde(with = "io::vector")]
    pub mean_state_limit: Vector,
}

pub fn stability_report(bundle: &PolicyBundle) -> Result<StabilityReport> {
    let st = bundle.steady()?;
    let sys = &bundle.system;
    let n = sys.n_x();
    let eye = Mat::identity(n, n);
    let (a, p, phi) = (&sys.a, &st.p, &st.phi);
    let res_a = linalg::solve(&(&eye + phi * p), a)?;
    let (_, kf) = estimator::posterior(&st.x_bar_prior, sys)?;
    let filter_loop = a - &kf * &sys.c * a;
    // [I - (I+ΦP)⁻¹A]⁻¹ (I - Φ(I + PΦ - Aᵀ)⁻¹P) ŵ
    let inner = linalg::solve(&(&eye + p * phi - a.transpose()), p)?;
    let rhs = (&eye - phi * inner) * &bundle.nominal.w_hat;
    let limit = linalg::solve_vec(&(&eye - &res_a), &rhs)?;
    Ok(StabilityReport {
        closed_loop_radius: linalg::spectral_radius(&(a + &sys.b * &bundle.k)),
        resolvent_radius: linalg::spectral_radius(&res_a),
        filter_loop_radius: linalg::spectral_radius(&filter_loop),
        mean_state_limit: limit,
    })
}

/// Mean-state trajectory `(x̃_t, x̄̄_t)`.
#[derive(Debug, Clone)]
pub struct MeanStateTrajectory {
    pub x_tilde: Vec<Vector>,
    pub x_bar: Vec<Vector>,
    pub limit: Vector,
    /// `‖x̃_T - limit‖`.
    pub limit_error: f64,
    /// `‖x̃_T - x̄̄_T‖`.
    pub estimation_error: f64,
}

/// Which disturbance mean the estimator predicts with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    /// `H x̄ + G`, as the deployed controller does.
    WorstCase,
    /// The actual disturbance mean (estimator matched to the adversary).
    Matched,
}

/// Deterministic mean-state recursion with disturbance mean
/// `disturbance_mean(t, x̄̄_t)`.
pub fn mean_state_trajectory_with(
    bundle: &PolicyBundle,
    x0_mean: &Vector,
    x_bar0_mean: &Vector,
    horizon: usize,
    prediction: Prediction,
    mut disturbance_mean: impl FnMut(usize, &Vector) -> Vector,
) -> Result<(Vec<Vector>, Vec<Vector>)> {
    let sys = &bundle.system;
    linalg::check_len("x0 mean", x0_mean, sys.n_x())?;
    linalg::check_len("estimate mean", x_bar0_mean, sys.n_x())?;
    let mode = bundle.gain_mode();
    let mut x = x0_mean.clone();
    let mut belief = BeliefState {
        x_bar: x_bar0_mean.clone(),
        x_cov: bundle.x_bar.clone(),
    };
    let mut xs = vec![x.clone()];
    let mut bars = vec![belief.x_bar.clone()];
    for t in 0..horizon {
        let u = bundle.control(&belief.x_bar);
        let d = disturbance_mean(t, &belief.x_bar);
        let w_bar = match prediction {
            Prediction::WorstCase => bundle.disturbance_mean(&belief.x_bar),
            Prediction::Matched => d.clone(),
        };
        x = &sys.a * &x + &sys.b * &u + d;
        let y = &sys.c * &x;
        belief = estimator::filter_step(&belief, &u, &w_bar, &y, sys, &mode)?;
        xs.push(x.clone());
        bars.push(belief.x_bar.clone());
    }
    Ok((xs, bars))
}

/// Mean-state recursion under the optimal policy pair.
pub fn mean_state_trajectory(bundle: &PolicyBundle, x0_mean: &Vector, x_bar0_mean: &Vector, horizon: usize) -> Result<MeanStateTrajectory> {
    let limit = stability_report(bundle)?.mean_state_limit;
    let (xs, bars) = mean_state_trajectory_with(bundle, x0_mean, x_bar0_mean, horizon, Prediction::WorstCase, |_, xb| {
        bundle.disturbance_mean(xb)
    })?;
    let last = xs.last().expect("nonempty");
    let last_bar = bars.last().expect("nonempty");
    Ok(MeanStateTrajectory {
        limit_error: (last - &limit).norm(),
        estimation_error: (last - last_bar).norm(),
        x_tilde: xs,
        x_bar: bars,
        limit,
    })
}

/// State-space form of the mean-state system with an exogenous disturbance
/// mean `d`: `z' = F z + E d + c` with `z = [x̃; x̄̄]`.
pub fn mean_state_matrices(bundle: &PolicyBundle) -> (Mat, Mat, Vector) {
    let sys = &bundle.system;
    let n = sys.n_x();
    let (a, b) = (&sys.a, &sys.b);
    let kfc = &bundle.filter_gain * &sys.c;
    let eye = Mat::identity(n, n);
    let bk = b * &bundle.k;
    let bl = b * &bundle.l;
    let pred = a + &bk + &bundle.h;
    let mut f = Mat::zeros(2 * n, 2 * n);
    f.view_mut((0, 0), (n, n)).copy_from(a);
    f.view_mut((0, n), (n, n)).copy_from(&bk);
    f.view_mut((n, 0), (n, n)).copy_from(&(&kfc * a));
    f.view_mut((n, n), (n, n)).copy_from(&((&eye - &kfc) * &pred + &kfc * &bk));
    let mut e = Mat::zeros(2 * n, n);
    e.view_mut((0, 0), (n, n)).copy_from(&eye);
    e.view_mut((n, 0), (n, n)).copy_from(&kfc);
    let mut c = Vector::zeros(2 * n);
    c.rows_mut(0, n).copy_from(&bl);
    c.rows_mut(n, n).copy_from(&((&eye - &kfc) * (&bl + &bundle.g) + &kfc * &bl));
    (f, e, c)
}

/// Bound on `sup_t ‖x̃_t‖` for the matched mean-state system started at
/// `x̃_0 = x̄̄_0` with disturbance means bounded by `d_max`:
/// `sup_k ‖Ãᵏ‖ ‖x̃_0‖ + Σ_k ‖Ãᵏ‖ (‖B L‖ + d_max)` with `Ã = A + B K`.
pub fn bibo_bound(bundle: &PolicyBundle, x0_norm: f64, d_max: f64) -> Result<f64> {
    let sys = &bundle.system;
    let closed = &sys.a + &sys.b * &bundle.k;
    let radius = linalg::spectral_radius(&closed);
    if !(radius < 1.0) {
        return Err(WdrcError::InvalidInput(format!(
            "closed loop is not stable (spectral radius {radius})"
        )));
    }
    let input = (&sys.b * &bundle.l).norm() + d_max;
    let n = sys.n_x();
    let mut power = Mat::identity(n, n);
    let (mut sup, mut sum) = (0.0f64, 0.0f64);
    for _ in 0..1_000_000 {
        let norm = power.clone().singular_values().max();
        sup = sup.max(norm);
        sum += norm;
        if norm <= 1e-17 * sum {
            return Ok(sup * x0_norm + sum * input);
        }
        power = &closed * power;
    }
    Err(WdrcError::NoConvergence {
        solver: "bibo_bound",
        iterations: 1_000_000,
        residual: radius,
    })
}

impl CostSummary {
    pub fn is_method(&self, m: Method) -> bool {
        self.method == m.label()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostWeights, NominalMoments};

    fn s(x: f64) -> Mat {
        Mat::from_element(1, 1, x)
    }

    fn scalar_bundle(a: f64, w_hat: f64, qf: f64) -> PolicyBundle {
        let sys = LinearSystem::new(s(a), s(1.0), s(1.0), s(1.0), Vector::from_element(1, 1.0), s(0.0)).unwrap();
        let w = CostWeights::new(s(1.0), s(qf), s(1.0)).unwrap();
        let nom = NominalMoments::new(Vector::from_element(1, w_hat), s(1.0)).unwrap();
        design::design_wdrc(&sys, &w, &nom, 10.0).unwrap()
    }

    #[test]
    fn zero_weights_zero_cost() {
        let mut b = scalar_bundle(1.0, 0.0, 1.0);
        b.weights = CostWeights {
            q: s(0.0),
            qf: s(0.0),
            r: s(0.0),
        };
        let tr = run_closed_loop(&b, &Scenario::truth(DisturbanceModel::gaussian(Vector::zeros(1), s(1.0)).unwrap()), 20, 1).unwrap();
        assert_eq!(tr.total_cost(), 0.0);
    }

    #[test]
    fn noiseless_trace_matches_mean_state() {
        let b = scalar_bundle(1.0, 0.0, 1.0);
        let sys = &b.system;
        let tr = run_closed_loop(&b, &Scenario::noiseless(sys), 30, 0).unwrap();
        let (xs, _) = mean_state_trajectory_with(&b, &sys.m0, &sys.m0, 30, Prediction::WorstCase, |_, _| Vector::zeros(1)).unwrap();
        for (a, m) in tr.x.iter().zip(xs.iter()) {
            assert_eq!(a, m);
        }
    }

    #[test]
    fn one_step_cost_by_hand() {
        let b = scalar_bundle(1.0, 0.0, 2.0);
        let tr = run_closed_loop(&b, &Scenario::noiseless(&b.system), 1, 0).unwrap();
        let x0 = 1.0;
        let u0 = b.k[(0, 0)] * x0;
        let x1 = x0 + u0;
        let expected = x0 * x0 + u0 * u0 + 2.0 * x1 * x1;
        assert!((tr.total_cost() - expected).abs() < 1e-14);
    }

    #[test]
    fn deterministic_summary() {
        let b = scalar_bundle(1.0, 0.0, 1.0);
        let sc = Scenario::truth(DisturbanceModel::gaussian(Vector::zeros(1), s(0.5)).unwrap());
        let a = monte_carlo_summary(&b, &sc, 50, 16, 7).unwrap();
        let c = monte_carlo_summary(&b, &sc, 50, 16, 7).unwrap();
        assert_eq!(a.mean_total_cost.to_bits(), c.mean_total_cost.to_bits());
        assert_eq!(a.std_total_cost.to_bits(), c.std_total_cost.to_bits());
        let z = monte_carlo_summary(&b, &Scenario::noiseless(&b.system), 50, 8, 7).unwrap();
        assert_eq!(z.std_total_cost, 0.0);
    }

    #[test]
    fn summary_csv_header_only_when_empty() {
        let mut buf = Vec::new();
        write_summary_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "method,runs,mean_cost,std_cost,wall_time_s\n");
    }

    #[test]
    fn scalar_spectral_radii() {
        let b = scalar_bundle(1.0, 0.0, 1.0);
        let r = stability_report(&b).unwrap();
        assert!((r.closed_loop_radius - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.resolvent_radius - 0.4).abs() < 1e-12);
        assert_eq!(r.mean_state_limit[0], 0.0);
    }

    #[test]
    fn mean_state_decays_without_nominal_mean() {
        let b = scalar_bundle(1.0, 0.0, 1.0);
        let one = Vector::from_element(1, 1.0);
        let tr = mean_state_trajectory(&b, &one, &one, 500).unwrap();
        assert!(tr.x_tilde[500].norm() < 1e-8);
    }
}
