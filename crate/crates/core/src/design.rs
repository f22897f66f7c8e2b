//! Controller synthesis: the WDRC design, the LQG baseline, the stationary
//! cost ρ, the guaranteed-cost bound, penalty tuning, radius selection and
//! the average-cost optimality certificate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::{self, bures_squared};
use crate::error::{Assumption, Result, WdrcError};
use crate::estimator;
use crate::io;
use crate::linalg::{self, Mat, Vector};
use crate::model::{CostWeights, LinearSystem, NominalMoments};
use crate::riccati::{self, AreOptions, SteadyStateSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Wdrc,
    Lqg,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Wdrc => "WDRC",
            Method::Lqg => "LQG",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
}

/// Everything needed to run a stationary controller online.
///
/// The control law is `u = K x̄ + L`. The estimator predicts with the mean
/// `H x̄ + G` (the worst-case mean for WDRC, `ŵ` for LQG) and corrects with
/// the constant gain `X̄ Cᵀ M⁻¹`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBundle {
    pub method: Method,
    pub system: LinearSystem,
    pub weights: CostWeights,
    pub nominal: NominalMoments,
    #[serde(with = "io::mat")]
    pub k: Mat,
    #[serde(with = "io::vector")]
    pub l: Vector,
    #[serde(with = "io::mat")]
    pub h: Mat,
    #[serde(with = "io::vector")]
    pub g: Vector,
    /// Disturbance covariance the filter is designed for.
    #[serde(with = "io::mat")]
    pub filter_sigma: Mat,
    #[serde(with = "io::mat")]
    pub x_bar_prior: Mat,
    #[serde(with = "io::mat")]
    pub x_bar: Mat,
    #[serde(with = "io::mat")]
    pub filter_gain: Mat,
    /// Control Riccati solution (`P_ss` for WDRC, the DARE solution for LQG).
    #[serde(with = "io::mat")]
    pub p: Mat,
    pub steady: Option<SteadyStateSolution>,
    pub provenance: Provenance,
}

impl PolicyBundle {
    pub fn control(&self, x_bar: &Vector) -> Vector {
        &self.k * x_bar + &self.l
    }

    /// Mean the estimator assumes for the next disturbance.
    pub fn disturbance_mean(&self, x_bar: &Vector) -> Vector {
        &self.h * x_bar + &self.g
    }

    pub fn gain_mode(&self) -> estimator::GainMode {
        estimator::GainMode::Steady {
            x_post: self.x_bar.clone(),
            gain: self.filter_gain.clone(),
        }
    }

    pub fn steady(&self) -> Result<&SteadyStateSolution> {
        self.steady
            .as_ref()
            .ok_or_else(|| WdrcError::InvalidInput("bundle has no WDRC steady-state solution".into()))
    }
}

/// Options shared by the WDRC design entry points.
#[derive(Debug, Clone)]
pub struct DesignOptions {
    /// Require `Φ ⪰ 0`. Systems with fewer inputs than states never satisfy
    /// it, so the grid benchmark turns this off.
    pub require_phi_psd: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self { require_phi_psd: true }
    }
}

pub fn design_wdrc(
    sys: &LinearSystem,
    weights: &CostWeights,
    nominal: &NominalMoments,
    lambda: f64,
) -> Result<PolicyBundle> {
    design_wdrc_with(sys, weights, nominal, lambda, &DesignOptions::default())
}

pub fn design_wdrc_with(
    sys: &LinearSystem,
    weights: &CostWeights,
    nominal: &NominalMoments,
    lambda: f64,
    opts: &DesignOptions,
) -> Result<PolicyBundle> {
    sys.validate()?;
    weights.validate()?;
    linalg::check_len("w_hat", &nominal.w_hat, sys.n_x())?;
    let are = riccati::solve_are(
        sys,
        weights,
        lambda,
        &AreOptions {
            require_phi_psd: opts.require_phi_psd,
            seed: None,
        },
    )?;
    let p = are.p;
    let params = riccati::steady_state_policy_params(sys, weights, nominal, lambda, &p)?;
    let wc = ambiguity::worst_case_cov_steady(sys, &params.s, &p, &nominal.sigma_hat, lambda)?;
    let filter = ambiguity::solve_filter_are(sys, &wc.sigma_star)?;
    let filter_gain = estimator::steady_gain(&filter.x_post, sys)?;
    let mut steady = SteadyStateSolution {
        p: p.clone(),
        s: params.s,
        phi: params.phi,
        r: params.r,
        k: params.k.clone(),
        l: params.l.clone(),
        h: params.h.clone(),
        g: params.g.clone(),
        sigma_star: wc.sigma_star.clone(),
        x_bar_prior: filter.x_prior.clone(),
        x_bar: filter.x_post.clone(),
        z: wc.objective,
        rho: 0.0,
        lambda,
        theta: None,
    };
    steady.rho = evaluate_rho(&steady, nominal)?;
    Ok(PolicyBundle {
        method: Method::Wdrc,
        system: sys.clone(),
        weights: weights.clone(),
        nominal: nominal.clone(),
        k: params.k,
        l: params.l,
        h: params.h,
        g: params.g,
        filter_sigma: wc.sigma_star,
        x_bar_prior: filter.x_prior,
        x_bar: filter.x_post,
        filter_gain,
        p,
        steady: Some(steady),
        provenance: Provenance::default(),
    })
}

/// Standard LQG controller using the nominal moments in both the controller
/// and the estimator.
pub fn design_lqg(sys: &LinearSystem, weights: &CostWeights, nominal: &NominalMoments) -> Result<PolicyBundle> {
    sys.validate()?;
    weights.validate()?;
    weights.check_against(sys)?;
    linalg::check_len("w_hat", &nominal.w_hat, sys.n_x())?;
    let n = sys.n_x();
    let (a, b) = (&sys.a, &sys.b);
    let r_inv = linalg::spd_inverse(&weights.r)?;
    let bb = b * &r_inv * b.transpose();
    let p = match linalg::sda(a, &bb, &weights.q, 1e-14, 64) {
        Ok(o) => o.x,
        Err(WdrcError::NoConvergence { iterations, residual, .. }) => {
            return Err(WdrcError::NoConvergence {
                solver: "LQG Riccati",
                iterations,
                residual,
            })
        }
        Err(e) => return Err(e),
    };
    let btp = b.transpose() * &p;
    let k = -linalg::solve(&(&weights.r + &btp * b), &(&btp * a))?;

    // Affine terms from the nominal mean.
    let eye = Mat::identity(n, n);
    let resolvent = &eye + &p * &bb;
    let res_inv = linalg::inverse(&resolvent)?;
    let a_res = a.transpose() * &res_inv;
    let pw = &p * &nominal.w_hat;
    let r = linalg::solve_vec(&(&eye - &a_res), &(&a_res * &pw)).map_err(|_| {
        WdrcError::violated(Assumption::ResolventInvertible, "I - A^T (I + P B R^-1 B^T)^-1 is singular")
    })?;
    let l = -(&r_inv * b.transpose() * &res_inv * (&pw + &r));

    let filter = ambiguity::solve_filter_are(sys, &nominal.sigma_hat)?;
    let filter_gain = estimator::steady_gain(&filter.x_post, sys)?;
    Ok(PolicyBundle {
        method: Method::Lqg,
        system: sys.clone(),
        weights: weights.clone(),
        nominal: nominal.clone(),
        k,
        l,
        h: Mat::zeros(n, n),
        g: nominal.w_hat.clone(),
        filter_sigma: nominal.sigma_hat.clone(),
        x_bar_prior: filter.x_prior,
        x_bar: filter.x_post,
        filter_gain,
        p,
        steady: None,
        provenance: Provenance::default(),
    })
}

/// Stationary penalized average cost ρ.
pub fn evaluate_rho(steady: &SteadyStateSolution, nominal: &NominalMoments) -> Result<f64> {
    let n = steady.p.nrows();
    let resolvent = Mat::identity(n, n) + &steady.p * &steady.phi;
    let w = &nominal.w_hat;
    let z_r = linalg::solve_vec(&resolvent, &steady.r)?;
    let z_pw = linalg::solve_vec(&resolvent, &(&steady.p * w))?;
    Ok((w * 2.0 - &steady.phi * &steady.r).dot(&z_r) - steady.lambda * nominal.sigma_hat.trace()
        + w.dot(&z_pw)
        + steady.z)
}

/// Guaranteed-cost bound `θ²λ + ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lambda: f64,
    pub theta: f64,
    pub rho: f64,
    pub bound: f64,
}

pub fn guaranteed_bound(theta: f64, lambda: f64, rho: f64) -> Result<BoundReport> {
    if !(theta >= 0.0) {
        return Err(WdrcError::InvalidInput(format!("theta must be nonnegative, got {theta}")));
    }
    Ok(BoundReport {
        lambda,
        theta,
        rho,
        bound: theta * theta * lambda + rho,
    })
}

/// One evaluated grid point of [`tune_lambda`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaPoint {
    pub lambda: f64,
    pub rho: Option<f64>,
    pub bound: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub lambda: f64,
    pub report: BoundReport,
    pub bundle: PolicyBundle,
    pub curve: Vec<LambdaPoint>,
}

/// Minimize `θ²λ + ρ(λ)` over the admissible points of `grid`. Ties go to the
/// smaller λ.
pub fn tune_lambda(
    sys: &LinearSystem,
    weights: &CostWeights,
    nominal: &NominalMoments,
    theta: f64,
    grid: &[f64],
    opts: &DesignOptions,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(WdrcError::InvalidInput("lambda grid is empty".into()));
    }
    guaranteed_bound(theta, 1.0, 0.0)?;
    let designs: Vec<(f64, Result<PolicyBundle>)> = grid
        .par_iter()
        .map(|&lambda| (lambda, design_wdrc_with(sys, weights, nominal, lambda, opts)))
        .collect();

    let mut best: Option<(BoundReport, PolicyBundle)> = None;
    let mut curve = Vec::with_capacity(designs.len());
    for (lambda, outcome) in designs {
        match outcome {
            Ok(bundle) => {
                let rho = bundle.steady()?.rho;
                let report = guaranteed_bound(theta, lambda, rho)?;
                curve.push(LambdaPoint {
                    lambda,
                    rho: Some(rho),
                    bound: Some(report.bound),
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some((b, _)) => report.bound < b.bound || (report.bound == b.bound && lambda < b.lambda),
                };
                if better {
                    best = Some((report, bundle));
                }
            }
            Err(e) => {
                log::debug!("lambda = {lambda} skipped: {e}");
                curve.push(LambdaPoint {
                    lambda,
                    rho: None,
                    bound: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (report, mut bundle) = best.ok_or(WdrcError::NoAdmissibleLambda { tried: grid.len() })?;
    if let Some(st) = bundle.steady.as_mut() {
        st.theta = Some(theta);
    }
    Ok(TuneResult {
        lambda: report.lambda,
        report,
        bundle,
        curve,
    })
}

/// `points` log-spaced values over `[1.05 λ_max(P_ss(hi)), hi]`.
pub fn default_lambda_grid(
    sys: &LinearSystem,
    weights: &CostWeights,
    points: usize,
    hi: f64,
    opts: &DesignOptions,
) -> Result<Vec<f64>> {
    if points == 0 {
        return Err(WdrcError::InvalidInput("grid needs at least one point".into()));
    }
    let are = riccati::solve_are(
        sys,
        weights,
        hi,
        &AreOptions {
            require_phi_psd: opts.require_phi_psd,
            seed: None,
        },
    )?;
    let lo = 1.05 * linalg::max_eigenvalue(&are.p);
    if !(lo < hi) {
        return Err(WdrcError::InvalidInput(format!(
            "lambda grid is empty: lower end {lo} is not below {hi}"
        )));
    }
    Ok(log_space(lo, hi, points))
}

pub fn log_space(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| {
            if i + 1 == points {
                hi
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

/// Constants of the measure-concentration inequality behind the radius
/// formula. `c1` and `c2` are not known in closed form; `c` is the light-tail
/// exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusConstants {
    pub c1: f64,
    pub c2: f64,
    pub c: f64,
}

impl Default for RadiusConstants {
    fn default() -> Self {
        Self { c1: 1.0, c2: 1.0, c: 3.0 }
    }
}

/// Ambiguity radius guaranteeing out-of-sample performance with confidence
/// `1 - beta` from `n_samples` samples. With `compact_support_half_diameter`
/// the compact-support variant is used.
pub fn radius_from_samples(
    n_samples: usize,
    n_x: usize,
    beta: f64,
    constants: RadiusConstants,
    compact_support_half_diameter: Option<f64>,
) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(WdrcError::InvalidInput(format!("beta must lie in (0, 1), got {beta}")));
    }
    let RadiusConstants { c1, c2, c } = constants;
    if !(c > 2.0) {
        return Err(WdrcError::InvalidInput(format!("tail exponent c must exceed 2, got {c}")));
    }
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(WdrcError::InvalidInput("c1 and c2 must be positive".into()));
    }
    if n_samples == 0 || n_x == 0 {
        return Err(WdrcError::InvalidInput("n_samples and n_x must be positive".into()));
    }
    let log_term = (c1 / beta).ln();
    if !(log_term > 0.0) {
        return Err(WdrcError::InvalidInput(format!(
            "log(c1 / beta) must be positive, got {log_term}"
        )));
    }
    let kappa = log_term / (c2 * n_samples as f64);

    if let Some(xi) = compact_support_half_diameter {
        if !(xi > 0.0) {
            return Err(WdrcError::InvalidInput("support half-diameter must be positive".into()));
        }
        return Ok(match n_x {
            n if n < 4 => xi * kappa.powf(0.25),
            n if n > 4 => xi * kappa.powf(1.0 / n as f64),
            _ => xi * solve_log_ratio(kappa.sqrt()).sqrt(),
        });
    }

    if kappa > 1.0 {
        return Ok(kappa.powf(2.0 / c));
    }
    Ok(match n_x {
        n if n < 4 => kappa.sqrt(),
        n if n > 4 => kappa.powf(2.0 / n as f64),
        _ => {
            let bar = solve_log_ratio(kappa.sqrt());
            let ln3 = 3f64.ln();
            if kappa <= 1.0 / (ln3 * ln3) {
                bar
            } else {
                // Between the two sample-size thresholds neither branch is
                // defined; take the larger (more conservative) radius.
                bar.max(kappa.powf(2.0 / c))
            }
        }
    })
}

/// Solve `θ / log(2 + 1/θ) = y` for `θ > 0` by bisection (the left side is
/// increasing in θ).
pub fn solve_log_ratio(y: f64) -> f64 {
    let f = |t: f64| t / (2.0 + 1.0 / t).ln() - y;
    let (mut lo, mut hi) = (1e-300_f64, 1.0_f64);
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    while hi - lo > 1e-12 * hi {
        // geometric midpoint while the bracket spans orders of magnitude
        let mid = if hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Right side of the average-cost optimality equation for a given input,
/// adversary mean and covariance, at belief mean `x_bar`.
pub fn bellman_rhs(bundle: &PolicyBundle, x_bar: &Vector, u: &Vector, w_bar: &Vector, sigma: &Mat) -> Result<f64> {
    let st = bundle.steady()?;
    let sys = &bundle.system;
    let wts = &bundle.weights;
    let nom = &bundle.nominal;
    let lambda = st.lambda;
    let m = &sys.a * x_bar + &sys.b * u + w_bar;
    let x_prior = estimator::prior_cov(&st.x_bar, sigma, sys);
    let (x_next, _) = estimator::posterior(&x_prior, sys)?;
    let stage = x_bar.dot(&(&wts.q * x_bar)) + linalg::trace_product(&wts.q, &st.x_bar) + u.dot(&(&wts.r * u));
    let penalty = lambda * (w_bar - &nom.w_hat).norm_squared() + lambda * bures_squared(sigma, &nom.sigma_hat);
    let next_value = m.dot(&(&st.p * &m))
        + 2.0 * st.r.dot(&m)
        + linalg::trace_product(&st.p, &(&x_prior - &x_next))
        + linalg::trace_product(&(&st.s + &st.p), &st.x_bar);
    Ok(stage - penalty + next_value)
}

/// `ρ + h(x̄)` with `h(x̄) = x̄ᵀPx̄ + 2rᵀx̄ + Tr[(S + P) X̄]`.
pub fn bellman_lhs(bundle: &PolicyBundle, x_bar: &Vector) -> Result<f64> {
    let st = bundle.steady()?;
    Ok(st.rho
        + x_bar.dot(&(&st.p * x_bar))
        + 2.0 * st.r.dot(x_bar)
        + linalg::trace_product(&(&st.s + &st.p), &st.x_bar))
}

/// `|LHS - RHS|` of the optimality equation at the optimal policy pair.
pub fn bellman_residual(bundle: &PolicyBundle, nominal: &NominalMoments, x_bar: &Vector) -> Result<f64> {
    if bundle.nominal != *nominal {
        return Err(WdrcError::InvalidInput("nominal moments differ from the bundle's".into()));
    }
    let st = bundle.steady()?;
    linalg::check_len("belief mean", x_bar, bundle.system.n_x())?;
    let u = bundle.control(x_bar);
    let w = bundle.disturbance_mean(x_bar);
    Ok((bellman_lhs(bundle, x_bar)? - bellman_rhs(bundle, x_bar, &u, &w, &st.sigma_star)?).abs())
}

/// `RHS - LHS` when the gain is replaced by `K + delta_k` and the adversary
/// best-responds with `w̄ = (λI - P)⁻¹(P(Ax̄ + Bu) + r + λŵ)` and `Σ*`.
/// Positive values measure the suboptimality of the perturbed gain.
pub fn suboptimality_gap(bundle: &PolicyBundle, x_bar: &Vector, delta_k: &Mat) -> Result<f64> {
    let st = bundle.steady()?;
    let sys = &bundle.system;
    let n = sys.n_x();
    let u = (&bundle.k + delta_k) * x_bar + &bundle.l;
    let pen = Mat::identity(n, n) * st.lambda - &st.p;
    let rhs = &st.p * (&sys.a * x_bar + &sys.b * &u) + &st.r + &bundle.nominal.w_hat * st.lambda;
    let w = linalg::solve_vec(&pen, &rhs)?;
    Ok(bellman_rhs(bundle, x_bar, &u, &w, &st.sigma_star)? - bellman_lhs(bundle, x_bar)?)
}
