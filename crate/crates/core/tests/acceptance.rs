//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use wdrc::ambiguity::gelbrich_distance;
use wdrc::design::{self, DesignOptions, PolicyBundle, RadiusConstants};
use wdrc::model::{self, CostWeights, DisturbanceModel, LinearSystem, NominalMoments};
use wdrc::riccati::{self, AreOptions};
use wdrc::sim::{self, OutOfSampleOptions, Scenario};
use wdrc::{linalg, Mat, Vector};

// Tolerances and limits, fixed here.
const C1_TOL: f64 = 1e-9;
const C1_LIMIT: Duration = Duration::from_secs(1);
const C2_SYSTEMS: usize = 20;
const C2_HORIZON: usize = 1000;
const C2_TOL: f64 = 1e-6;
const C2_LIMIT: Duration = Duration::from_secs(30);
const C3_SIGMA_TOL: f64 = 1e-4;
const C3_GRID_STEP: f64 = 1e-4;
const C3_FILTER_TOL: f64 = 1e-8;
const C3_LIMIT: Duration = Duration::from_secs(5);
const C4_PAIRS: usize = 100;
const C4_TOL: f64 = 1e-8;
const C5_SYSTEMS: usize = 10;
const C5_POINTS: usize = 100;
const C5_TOL: f64 = 1e-6;
const C6_RUNS: usize = 200;
const C6_HORIZON: usize = 2000;
const C6_REL_TOL: f64 = 0.05;
const C6_LIMIT: Duration = Duration::from_secs(60);
const C7_ADVERSARIES: usize = 50;
const C7_THETA: f64 = 0.1;
const C7_RUNS: usize = 20;
const C7_HORIZON: usize = 2000;
const C7_LIMIT: Duration = Duration::from_secs(120);
const C8_SYSTEMS: usize = 100;
const C8_LIMIT_TOL: f64 = 1e-6;
const C9_RUNS: usize = 100;
const C9_HORIZON: usize = 100;
const C9_LIMIT: Duration = Duration::from_secs(300);
const C10_SYSTEMS: usize = 20;
const C10_LAMBDA: f64 = 1e9;
const C10_TOL: f64 = 1e-6;
const C11_DATASETS: usize = 200;
const C11_SAMPLES: usize = 10;
const C11_BETA: f64 = 0.05;
const C11_LIMIT: Duration = Duration::from_secs(300);

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, format!("runtime {:.2} s exceeds {:.0} s", elapsed.as_secs_f64(), limit.as_secs_f64()))
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn scalar_are_certificate() -> Check {
    let start = Instant::now();
    let sys = scalar_system(1.0, 1.0, 1.0, 1.0);
    let w = unit_weights();
    let nom = NominalMoments::zero_mean(s(1.0)).map_err(err)?;
    let are = riccati::solve_are(&sys, &w, 10.0, &AreOptions::default()).map_err(err)?;
    let params = riccati::steady_state_policy_params(&sys, &w, &nom, 10.0, &are.p).map_err(err)?;
    let elapsed = start.elapsed();
    let (p, k, s_ss) = (are.p[(0, 0)], params.k[(0, 0)], params.s[(0, 0)]);
    ensure((p - 5.0 / 3.0).abs() <= C1_TOL, format!("P_ss = {p}"))?;
    ensure((k + 2.0 / 3.0).abs() <= C1_TOL, format!("K_ss = {k}"))?;
    ensure((s_ss - 1.0).abs() <= C1_TOL, format!("S_ss = {s_ss}"))?;
    within(elapsed, C1_LIMIT)?;
    Ok(format!("P_ss = {p:.12}, K_ss = {k:.12}, S_ss = {s_ss:.12}, {:.3} s", elapsed.as_secs_f64()))
}

fn finite_to_steady() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (inst, bundle) in admissible_instances(C2_SYSTEMS, 4, false, 2024) {
        ensure(linalg::is_stabilizable(&inst.sys.a, &inst.sys.b), "drew a non-stabilizable system")?;
        ensure(linalg::is_observable(&inst.sys.a, &linalg::sqrtm_psd(&inst.weights.q)), "drew a non-observable system")?;
        let st = bundle.steady().map_err(err)?;
        let pass = riccati::backward_pass(&inst.sys, &inst.weights, &inst.nominal, st.lambda, C2_HORIZON).map_err(err)?;
        worst = worst.max((&pass.p[0] - &st.p).norm());
    }
    let elapsed = start.elapsed();
    ensure(worst < C2_TOL, format!("max |P_0 - P_ss|_F = {worst:e}"))?;
    within(elapsed, C2_LIMIT)?;
    Ok(format!("max |P_0(T={C2_HORIZON}) - P_ss|_F = {worst:.2e} over {C2_SYSTEMS} systems, {:.2} s", elapsed.as_secs_f64()))
}

fn worst_case_covariance_oracle() -> Check {
    let start = Instant::now();
    let sys = scalar_system(0.0, 1.0, 1.0, 1.0);
    let nom = NominalMoments::zero_mean(s(1.0)).map_err(err)?;
    let bundle = design::design_wdrc(&sys, &unit_weights(), &nom, 2.0).map_err(err)?;
    let st = bundle.steady().map_err(err)?;
    // grid search of Tr[S X] + (P - λ)σ + 2λ√(σ̂σ) with S = 0, P = 1, λ = 2
    let f = |x: f64| (1.0 - 2.0) * x + 2.0 * 2.0 * x.sqrt();
    let steps = (20.0 / C3_GRID_STEP).round() as usize;
    let (grid_best, _) = (0..=steps)
        .map(|i| i as f64 * C3_GRID_STEP)
        .fold((0.0, f64::NEG_INFINITY), |acc, x| if f(x) > acc.1 { (x, f(x)) } else { acc });
    let elapsed = start.elapsed();
    let sigma = st.sigma_star[(0, 0)];
    ensure((sigma - grid_best).abs() <= C3_SIGMA_TOL, format!("Σ* = {sigma}, grid {grid_best}"))?;
    ensure((sigma - 4.0).abs() <= C3_SIGMA_TOL, format!("Σ* = {sigma}"))?;
    let (xp, x) = (st.x_bar_prior[(0, 0)], st.x_bar[(0, 0)]);
    ensure((xp - 4.0).abs() <= C3_FILTER_TOL, format!("X⁻ = {xp}"))?;
    ensure((x - 0.8).abs() <= C3_FILTER_TOL, format!("X = {x}"))?;
    within(elapsed, C3_LIMIT)?;
    Ok(format!("Σ* = {sigma:.10} (grid {grid_best:.4}), X⁻ = {xp:.10}, X = {x:.10}, {:.2} s", elapsed.as_secs_f64()))
}

fn gelbrich_two_paths() -> Check {
    let mut r = rng(404);
    let mut worst = 0.0f64;
    for _ in 0..C4_PAIRS {
        let n = r.random_range(1..=5);
        let (ma, mb) = (gaussian_vec(n, 1.0, &mut r), gaussian_vec(n, 1.0, &mut r));
        let (sa, sb) = (random_spd(n, 0.6, 0.05, &mut r), random_spd(n, 0.6, 0.05, &mut r));
        let eig_path = gelbrich_distance((&ma, &sa), (&mb, &sb)).map_err(err)?;
        // W₂² = |Δm|² + Tr[Σa + Σb - 2 (Σa^{1/2} Σb Σa^{1/2})^{1/2}] via Denman–Beavers
        let ra = sqrtm_denman_beavers(&sa);
        let cross = sqrtm_denman_beavers(&(&ra * &sb * &ra));
        let w2 = ((&ma - &mb).norm_squared() + sa.trace() + sb.trace() - 2.0 * cross.trace()).max(0.0).sqrt();
        worst = worst.max((eig_path - w2).abs());
    }
    ensure(worst < C4_TOL, format!("max discrepancy {worst:e}"))?;
    Ok(format!("max |G_eig - W2_newton| = {worst:.2e} over {C4_PAIRS} pairs"))
}

fn bellman_certificate() -> Check {
    let mut r = rng(505);
    let (mut worst, mut min_gap) = (0.0f64, f64::INFINITY);
    for (inst, bundle) in admissible_instances(C5_SYSTEMS, 3, true, 505) {
        let n = inst.sys.n_x();
        for _ in 0..C5_POINTS {
            let x = gaussian_vec(n, 1.0, &mut r);
            worst = worst.max(design::bellman_residual(&bundle, &inst.nominal, &x).map_err(err)?);
        }
        let x = gaussian_vec(n, 1.0, &mut r);
        let delta = Mat::from_element(inst.sys.n_u(), n, 0.1);
        min_gap = min_gap.min(design::suboptimality_gap(&bundle, &x, &delta).map_err(err)?);
    }
    ensure(worst < C5_TOL, format!("max residual {worst:e}"))?;
    ensure(min_gap > 0.0, format!("perturbed gain gap {min_gap:e} not positive"))?;
    Ok(format!("max |LHS - RHS| = {worst:.2e}, min perturbed-gain gap = {min_gap:.3e}"))
}

fn rho_consistency() -> Check {
    let start = Instant::now();
    let sys = scalar_system(0.0, 1.0, 1.0, 1.0);
    let nom = NominalMoments::zero_mean(s(1.0)).map_err(err)?;
    let bundle = design::design_wdrc(&sys, &unit_weights(), &nom, 2.0).map_err(err)?;
    let rho = bundle.steady().map_err(err)?.rho;
    let est = sim::penalized_average_cost(&bundle, C6_HORIZON, C6_RUNS, 606).map_err(err)?;
    let elapsed = start.elapsed();
    let rel = (est.mean - rho).abs() / rho.abs();
    ensure((rho - 2.0).abs() < 1e-8, format!("analytic ρ = {rho}"))?;
    ensure(rel <= C6_REL_TOL, format!("Monte Carlo {} vs ρ = {rho} (rel {rel:.3})", est.mean))?;
    within(elapsed, C6_LIMIT)?;
    Ok(format!(
        "Monte Carlo {:.4} ± {:.4} vs ρ = {rho:.6} (rel {rel:.4}), {:.2} s",
        est.mean,
        est.std_error,
        elapsed.as_secs_f64()
    ))
}

fn certify_bound(bundle: &PolicyBundle, bound: f64, seed: u64) -> Result<(usize, f64), String> {
    let mut r = rng(seed);
    let mut worst_margin = f64::INFINITY;
    let mut violations = 0;
    for k in 0..C7_ADVERSARIES {
        let adversary = model::perturb_within_gelbrich_ball(&bundle.nominal, C7_THETA, &mut r).map_err(err)?;
        let summary = sim::monte_carlo_summary(bundle, &Scenario::truth(adversary), C7_HORIZON, C7_RUNS, seed + k as u64).map_err(err)?;
        let margin = bound + 3.0 * summary.se_avg_cost - summary.mean_avg_cost;
        worst_margin = worst_margin.min(margin);
        if margin < 0.0 {
            violations += 1;
        }
    }
    Ok((violations, worst_margin))
}

fn guaranteed_cost() -> Check {
    let start = Instant::now();
    let grid = design::log_space(1.05, 1e4, 40);
    // scalar instance
    let sys = scalar_system(1.0, 1.0, 1.0, 1.0);
    let nom = NominalMoments::zero_mean(s(1.0)).map_err(err)?;
    let grid_scalar = design::default_lambda_grid(&sys, &unit_weights(), 40, 1e4, &DesignOptions::default()).map_err(err)?;
    let tuned = design::tune_lambda(&sys, &unit_weights(), &nom, C7_THETA, &grid_scalar, &DesignOptions::default()).map_err(err)?;
    let (v1_count, m1) = certify_bound(&tuned.bundle, tuned.report.bound, 707)?;
    // 4-state random instance
    let mut r = rng(708);
    let (tuned4, _) = loop {
        let inst = random_instance(4, true, &mut r);
        let Ok(lqg) = design::design_lqg(&inst.sys, &inst.weights, &inst.nominal) else {
            continue;
        };
        let lo = 1.05 * linalg::max_eigenvalue(&lqg.p);
        let g: Vec<f64> = grid.iter().map(|x| x * lo).collect();
        if let Ok(t) = design::tune_lambda(&inst.sys, &inst.weights, &inst.nominal, C7_THETA, &g, &DesignOptions::default()) {
            break (t, inst);
        }
    };
    let (v4_count, m4) = certify_bound(&tuned4.bundle, tuned4.report.bound, 709)?;
    let elapsed = start.elapsed();
    ensure(v1_count == 0, format!("scalar: {v1_count} adversaries exceed the bound (worst margin {m1:e})"))?;
    ensure(v4_count == 0, format!("4-state: {v4_count} adversaries exceed the bound (worst margin {m4:e})"))?;
    within(elapsed, C7_LIMIT)?;
    Ok(format!(
        "scalar bound {:.4} (λ = {:.3}) min margin {m1:.4}; 4-state bound {:.4} (λ = {:.3}) min margin {m4:.4}; {:.1} s",
        tuned.report.bound,
        tuned.lambda,
        tuned4.report.bound,
        tuned4.lambda,
        elapsed.as_secs_f64()
    ))
}

fn stability() -> Check {
    let mut worst_closed = 0.0f64;
    let mut worst_resolvent = 0.0f64;
    let mut worst_limit = 0.0f64;
    let mut worst_zero = 0.0f64;
    for (i, (inst, bundle)) in admissible_instances(C8_SYSTEMS, 4, true, 808).into_iter().enumerate() {
        let rep = sim::stability_report(&bundle).map_err(err)?;
        worst_closed = worst_closed.max(rep.closed_loop_radius);
        worst_resolvent = worst_resolvent.max(rep.resolvent_radius);
        let n = inst.sys.n_x();
        if i < 20 {
            let traj = sim::mean_state_trajectory(&bundle, &Vector::from_element(n, 1.0), &Vector::zeros(n), 5000).map_err(err)?;
            worst_limit = worst_limit.max(traj.limit_error);
            // same plant with a zero-mean nominal
            let zero_nom = NominalMoments::zero_mean(inst.nominal.sigma_hat.clone()).map_err(err)?;
            let lambda = bundle.steady().map_err(err)?.lambda;
            let b0 = design::design_wdrc(&inst.sys, &inst.weights, &zero_nom, lambda).map_err(err)?;
            let rep0 = sim::stability_report(&b0).map_err(err)?;
            let traj0 = sim::mean_state_trajectory(&b0, &Vector::from_element(n, 1.0), &Vector::zeros(n), 5000).map_err(err)?;
            worst_zero = worst_zero.max(rep0.mean_state_limit.amax()).max(traj0.x_tilde.last().unwrap().amax());
        }
    }
    // scalar hand value: A = 0.5, λ = 10, ŵ = 0.1
    let (a, phi, w) = (0.5, 0.9, 0.1);
    let p = (0.15 + (0.15f64 * 0.15 + 3.6).sqrt()) / 1.8;
    let hand = (1.0 - phi * p / (1.0 + p * phi - a)) * w / (1.0 - a / (1.0 + phi * p));
    let b = design::design_wdrc(&scalar_system(a, 1.0, 1.0, 1.0), &unit_weights(), &NominalMoments::new(v1(w), s(1.0)).map_err(err)?, 10.0)
        .map_err(err)?;
    let traj = sim::mean_state_trajectory(&b, &v1(2.0), &v1(0.0), 1000).map_err(err)?;
    let scalar_err = (traj.x_tilde[1000][0] - hand).abs();

    ensure(worst_closed < 1.0, format!("ρ(A+BK) = {worst_closed}"))?;
    ensure(worst_resolvent < 1.0, format!("ρ((I+ΦP)⁻¹A) = {worst_resolvent}"))?;
    ensure(worst_limit < C8_LIMIT_TOL, format!("mean-state limit error {worst_limit:e}"))?;
    ensure(scalar_err < C8_LIMIT_TOL, format!("scalar limit error {scalar_err:e}"))?;
    ensure(worst_zero < C8_LIMIT_TOL, format!("zero-mean limit {worst_zero:e}"))?;
    Ok(format!(
        "max ρ(A+BK) = {worst_closed:.4}, max ρ((I+ΦP)⁻¹A) = {worst_resolvent:.4} over {C8_SYSTEMS}; limit error {worst_limit:.1e} (scalar {scalar_err:.1e}); zero-mean limit {worst_zero:.1e}"
    ))
}

/// The synthetic 10-generator grid with the case-study settings.
fn grid_plant(noise_cov: Mat) -> Result<LinearSystem, String> {
    let ps = model::synthetic_grid(6).map_err(err)?;
    let mut m0 = Vector::zeros(20);
    m0[19] = 1.0;
    ps.discretize(0.1, noise_cov, m0, Mat::identity(20, 20) * 0.01).map_err(err)
}

fn compare_on_grid(
    sys: &LinearSystem,
    nominal: NominalMoments,
    theta: f64,
    scenario: &Scenario,
    seed: u64,
) -> Result<(f64, f64, f64), String> {
    let w = CostWeights::identity(20, 10);
    let opts = DesignOptions { require_phi_psd: false };
    let grid = design::default_lambda_grid(sys, &w, 40, 1e6, &opts).map_err(err)?;
    let tuned = design::tune_lambda(sys, &w, &nominal, theta, &grid, &opts).map_err(err)?;
    let lqg = design::design_lqg(sys, &w, &nominal).map_err(err)?;
    let a = sim::monte_carlo_summary(&tuned.bundle, scenario, C9_HORIZON, C9_RUNS, seed).map_err(err)?;
    let b = sim::monte_carlo_summary(&lqg, scenario, C9_HORIZON, C9_RUNS, seed).map_err(err)?;
    Ok((a.mean_total_cost, b.mean_total_cost, tuned.lambda))
}

fn case_study() -> Check {
    let start = Instant::now();
    // Gaussian case: Σ = 0.01 I, nominal ŵ = 0 with Σ̂ from 5 samples
    let mut r = rng(909);
    let truth = DisturbanceModel::gaussian(Vector::zeros(20), Mat::identity(20, 20) * 0.01).map_err(err)?;
    let sampler = truth.prepare().map_err(err)?;
    let samples: Vec<Vector> = (0..5).map(|_| sampler.sample(&mut r)).collect();
    let emp = model::empirical_moments(&samples).map_err(err)?.with_jitter(1e-8);
    let nominal = NominalMoments::zero_mean(emp.sigma_hat).map_err(err)?;
    let sys = grid_plant(Mat::identity(12, 12) * 0.01)?;
    let (wg, lg, lam_g) = compare_on_grid(&sys, nominal, 1e-3, &Scenario::truth(truth), 910)?;

    // uniform case: U(±0.15) disturbances, U(±0.4) noise with M from 40 samples
    let mut r = rng(911);
    let truth = DisturbanceModel::UniformBox {
        lo: Vector::from_element(20, -0.15),
        hi: Vector::from_element(20, 0.15),
    };
    let sampler = truth.prepare().map_err(err)?;
    let samples: Vec<Vector> = (0..5).map(|_| sampler.sample(&mut r)).collect();
    let nominal = model::empirical_moments(&samples).map_err(err)?.with_jitter(1e-8);
    let noise = DisturbanceModel::UniformBox {
        lo: Vector::from_element(12, -0.4),
        hi: Vector::from_element(12, 0.4),
    };
    let noise_sampler = noise.prepare().map_err(err)?;
    let noise_samples: Vec<Vector> = (0..40).map(|_| noise_sampler.sample(&mut r)).collect();
    let m_hat = model::empirical_moments(&noise_samples).map_err(err)?.sigma_hat;
    let sys_u = grid_plant(m_hat)?;
    let mut lo0 = Vector::from_element(20, -0.05);
    let mut hi0 = Vector::from_element(20, 0.05);
    lo0[19] = 0.95;
    hi0[19] = 1.05;
    let scenario = Scenario {
        disturbance: sim::DisturbanceSource::Truth { model: truth },
        initial_state: Some(DisturbanceModel::UniformBox { lo: lo0, hi: hi0 }),
        measurement_noise: Some(noise),
    };
    let (wu, lu, lam_u) = compare_on_grid(&sys_u, nominal, 1e-2, &scenario, 912)?;
    let elapsed = start.elapsed();
    let detail = format!(
        "Gaussian WDRC {wg:.3} vs LQG {lg:.3} (λ = {lam_g:.3}); uniform WDRC {wu:.3} vs LQG {lu:.3} (λ = {lam_u:.3}); {:.1} s",
        elapsed.as_secs_f64()
    );
    ensure(wg < lg && wu < lu, format!("WDRC not below LQG: {detail}"))?;
    within(elapsed, C9_LIMIT)?;
    Ok(detail)
}

fn lqg_limit() -> Check {
    let mut worst = 0.0f64;
    for (inst, _) in admissible_instances(C10_SYSTEMS, 4, true, 1010) {
        let lqg = design::design_lqg(&inst.sys, &inst.weights, &inst.nominal).map_err(err)?;
        let wdrc = design::design_wdrc(&inst.sys, &inst.weights, &inst.nominal, C10_LAMBDA).map_err(err)?;
        worst = worst.max((&wdrc.k - &lqg.k).amax());
    }
    ensure(worst < C10_TOL, format!("max |K_wdrc - K_lqg| = {worst:e}"))?;
    Ok(format!("max elementwise |K(λ=1e9) - K_lqg| = {worst:.2e} over {C10_SYSTEMS} systems"))
}

fn out_of_sample_guarantee() -> Check {
    let start = Instant::now();
    let sys = LinearSystem::new(
        Mat::from_row_slice(2, 2, &[0.95, 0.2, 0.0, 0.85]),
        Mat::identity(2, 2),
        Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        s(0.05),
        Vector::zeros(2),
        Mat::identity(2, 2) * 0.01,
    )
    .map_err(err)?;
    let w = CostWeights::identity(2, 2);
    let truth = DisturbanceModel::gaussian(Vector::from_vec(vec![0.05, -0.02]), Mat::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.02])).map_err(err)?;
    let theta = design::radius_from_samples(C11_SAMPLES, 2, C11_BETA, RadiusConstants::default(), None).map_err(err)?;
    let opts = OutOfSampleOptions {
        datasets: C11_DATASETS,
        runs: 20,
        horizon: 500,
        lambda_grid: None,
        jitter: 1e-8,
        design: DesignOptions::default(),
    };
    let cells = sim::out_of_sample_curve(&sys, &w, &truth, &[C11_SAMPLES], &[theta], 1111, &opts).map_err(err)?;
    let cell = &cells[0];
    let elapsed = start.elapsed();
    ensure(cell.successful_datasets == C11_DATASETS, format!("{} designs failed: {:?}", cell.failures.len(), cell.failures.first()))?;
    let frac = cell.violation_fraction.unwrap_or(1.0);
    let limit = C11_BETA + 3.0 * (C11_BETA * (1.0 - C11_BETA) / C11_DATASETS as f64).sqrt();
    ensure(frac <= limit, format!("violation fraction {frac} > {limit:.4}"))?;
    within(elapsed, C11_LIMIT)?;
    Ok(format!(
        "θ = {theta:.4}, violation fraction {frac:.3} ≤ {limit:.4}; mean cost {:.4}, mean bound {:.4}; {:.1} s",
        cell.mean_cost.unwrap_or(f64::NAN),
        cell.mean_bound.unwrap_or(f64::NAN),
        elapsed.as_secs_f64()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("scalar ARE certificate", scalar_are_certificate),
        ("finite-horizon to steady-state convergence", finite_to_steady),
        ("worst-case covariance oracle", worst_case_covariance_oracle),
        ("Gelbrich distance, two square-root paths", gelbrich_two_paths),
        ("Bellman residual certificate", bellman_certificate),
        ("penalized average cost vs rho", rho_consistency),
        ("guaranteed cost bound", guaranteed_cost),
        ("closed-loop and mean-state stability", stability),
        ("case study: WDRC below LQG", case_study),
        ("LQG limit of the gain", lqg_limit),
        ("out-of-sample guarantee", out_of_sample_guarantee),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
