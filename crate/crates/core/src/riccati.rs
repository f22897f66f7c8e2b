//! Finite-horizon Riccati recursion, the steady-state ARE and the closed-form
//! policy and adversary parameters.

use serde::{Deserialize, Serialize};

use crate::ambiguity::{self, WorstCaseCovResult};
use crate::error::{Assumption, Result, WdrcError};
use crate::estimator;
use crate::io;
use crate::linalg::{self, Mat, Vector};
use crate::model::{CostWeights, LinearSystem, NominalMoments};

pub const ARE_TOL: f64 = 1e-12;
pub const ARE_MAX_ITERATIONS: usize = 100_000;
pub const ARE_RESIDUAL_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-12;

/// `Φ = B R⁻¹ Bᵀ - I/λ` and whether it is positive semidefinite.
#[derive(Debug, Clone)]
pub struct Phi {
    pub matrix: Mat,
    pub is_psd: bool,
}

pub fn compute_phi(sys: &LinearSystem, weights: &CostWeights, lambda: f64) -> Result<Phi> {
    if !(lambda > 0.0) {
        return Err(WdrcError::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    weights.check_against(sys)?;
    let r_inv = linalg::spd_inverse(&weights.r).map_err(|_| WdrcError::Singular("R is singular".into()))?;
    let n = sys.n_x();
    let mut phi = &sys.b * r_inv * sys.b.transpose() - Mat::identity(n, n) / lambda;
    linalg::symmetrize_in_place(&mut phi);
    let scale = phi.amax().max(1.0 / lambda);
    let is_psd = linalg::is_psd(&phi, PSD_TOL * scale);
    Ok(Phi { matrix: phi, is_psd })
}

/// Outcome of an admissibility check `λ ≥ (1 + margin) λ_max(P)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaCheck {
    pub pass: bool,
    /// `λ - λ_max(P)`.
    pub gap: f64,
}

pub fn check_lambda(lambda: f64, p: &Mat, margin: f64) -> LambdaCheck {
    let top = linalg::max_eigenvalue(p);
    let strict = lambda > top;
    LambdaCheck {
        pass: strict && lambda >= (1.0 + margin) * top,
        gap: lambda - top,
    }
}

fn require_dominance(lambda: f64, p: &Mat, at: &str) -> Result<()> {
    let check = check_lambda(lambda, p, 0.0);
    if !check.pass || !linalg::is_positive_definite(&(Mat::identity(p.nrows(), p.nrows()) * lambda - p)) {
        return Err(WdrcError::violated(
            Assumption::PenaltyDominance,
            format!(
                "lambda = {lambda} does not exceed lambda_max(P) = {} at {at}",
                lambda - check.gap
            ),
        ));
    }
    Ok(())
}

/// Quantities obtained from one backward step given `P_{t+1}` and `r_{t+1}`.
#[derive(Debug, Clone)]
pub struct StepParams {
    pub p: Mat,
    pub s: Mat,
    pub r: Vector,
    /// Increment `q_t - q_{t+1}`.
    pub dq: f64,
    pub k: Mat,
    pub l: Vector,
    pub h: Mat,
    pub g: Vector,
}

struct Step<'a> {
    sys: &'a LinearSystem,
    weights: &'a CostWeights,
    nominal: &'a NominalMoments,
    lambda: f64,
    phi: Mat,
    r_inv_bt: Mat,
}

impl<'a> Step<'a> {
    fn new(sys: &'a LinearSystem, weights: &'a CostWeights, nominal: &'a NominalMoments, lambda: f64) -> Result<Self> {
        let phi = compute_phi(sys, weights, lambda)?.matrix;
        let r_inv_bt = linalg::solve(&weights.r, &sys.b.transpose())?;
        Ok(Self {
            sys,
            weights,
            nominal,
            lambda,
            phi,
            r_inv_bt,
        })
    }

    fn apply(&self, p_next: &Mat, r_next: &Vector) -> Result<StepParams> {
        let sys = self.sys;
        let n = sys.n_x();
        let a = &sys.a;
        let w_hat = &self.nominal.w_hat;
        let eye = Mat::identity(n, n);
        let resolvent = &eye + p_next * &self.phi;

        let pa = p_next * a;
        let pw = p_next * w_hat;
        let pw_r = &pw + r_next;
        let mut rhs = Mat::zeros(n, n + 3);
        rhs.columns_mut(0, n).copy_from(&pa);
        rhs.set_column(n, &pw_r);
        rhs.set_column(n + 1, r_next);
        rhs.set_column(n + 2, &pw);
        let sol = linalg::solve(&resolvent, &rhs)?;
        let z_pa = sol.columns(0, n).into_owned();
        let z_pw_r = sol.column(n).into_owned();
        let z_r = sol.column(n + 1).into_owned();
        let z_pw = sol.column(n + 2).into_owned();

        let mut p = &self.weights.q + a.transpose() * &z_pa;
        linalg::symmetrize_in_place(&mut p);
        let mut s = &self.weights.q + a.transpose() * p_next * a - &p;
        linalg::symmetrize_in_place(&mut s);
        let r = a.transpose() * &z_pw_r;
        let dq = (w_hat * 2.0 - &self.phi * r_next).dot(&z_r) + w_hat.dot(&z_pw)
            - self.lambda * self.nominal.sigma_hat.trace();

        let k = -&self.r_inv_bt * &z_pa;
        let l = -&self.r_inv_bt * &z_pw_r;
        let pen = &eye * self.lambda - p_next;
        let closed = a + &sys.b * &k;
        let h = linalg::solve(&pen, &(p_next * closed))?;
        let g_rhs = p_next * &sys.b * &l + r_next + w_hat * self.lambda;
        let g = linalg::solve_vec(&pen, &g_rhs)?;
        Ok(StepParams { p, s, r, dq, k, l, h, g })
    }
}

/// Stage data handed to the worst-case covariance callback.
pub struct StageProblem<'a> {
    pub t: usize,
    pub s_next: &'a Mat,
    pub p_next: &'a Mat,
    /// Posterior covariance `X̄_t`.
    pub x_bar_t: &'a Mat,
    pub sigma_hat: &'a Mat,
    pub lambda: f64,
    pub system: &'a LinearSystem,
}

/// Backward-pass quantities only (no worst-case covariances).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackwardPass {
    pub horizon: usize,
    pub lambda: f64,
    /// `P_0..P_T`.
    #[serde(with = "io::mat_list")]
    pub p: Vec<Mat>,
    #[serde(with = "io::mat_list")]
    pub s: Vec<Mat>,
    #[serde(with = "io::vector_list")]
    pub r: Vec<Vector>,
    pub q: Vec<f64>,
    /// Gains for stages `0..T-1`.
    #[serde(with = "io::mat_list")]
    pub k: Vec<Mat>,
    #[serde(with = "io::vector_list")]
    pub l: Vec<Vector>,
    #[serde(with = "io::mat_list")]
    pub h: Vec<Mat>,
    #[serde(with = "io::vector_list")]
    pub g: Vec<Vector>,
}

/// Complete finite-horizon solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteHorizonSolution {
    #[serde(flatten)]
    pub backward: BackwardPass,
    /// `Σ*_0..Σ*_{T-1}`.
    #[serde(with = "io::mat_list")]
    pub sigma_star: Vec<Mat>,
    /// Posterior covariances `X̄_0..X̄_T`.
    #[serde(with = "io::mat_list")]
    pub x_bar: Vec<Mat>,
    pub z: Vec<f64>,
}

pub fn backward_pass(
    sys: &LinearSystem,
    weights: &CostWeights,
    nominal: &NominalMoments,
    lambda: f64,
    horizon: usize,
) -> Result<BackwardPass> {
    check_inputs(sys, weights, nominal)?;
    if horizon == 0 {
        return Err(WdrcError::InvalidInput("horizon must be at least 1".into()));
    }
    let step = Step::new(sys, weights, nominal, lambda)?;
    let n = sys.n_x();
    let mut p = vec![Mat::zeros(n, n); horizon + 1];
    let mut s = vec![Mat::zeros(n, n); horizon + 1];
    let mut r = vec![Vector::zeros(n); horizon + 1];
    let mut q = vec![0.0; horizon + 1];
    let mut k = vec![Mat::zeros(sys.n_u(), n); horizon];
    let mut l = vec![Vector::zeros(sys.n_u()); horizon];
    let mut h = vec![Mat::zeros(n, n); horizon];
    let mut g = vec![Vector::zeros(n); horizon];
    p[horizon] = linalg::symmetrize(&weights.qf);
    for t in (0..horizon).rev() {
        require_dominance(lambda, &p[t + 1], &format!("stage {}", t + 1))?;
        let out = step.apply(&p[t + 1], &r[t + 1])?;
        q[t] = q[t + 1] + out.dq;
        p[t] = out.p;
        s[t] = out.s;
        r[t] = out.r;
        k[t] = out.k;
        l[t] = out.l;
        h[t] = out.h;
        g[t] = out.g;
    }
    Ok(BackwardPass {
        horizon,
        lambda,
        p,
        s,
        r,
        q,
        k,
        l,
        h,
        g,
    })
}

/// Backward Riccati pass followed by the forward worst-case covariance and
/// filter covariance recursion, starting from `X̄_0 = g(M0)`.
pub fn finite_horizon_recursion<F>(
    sys: &LinearSystem,
    weights: &CostWeights,
    nominal: &NominalMoments,
    lambda: f64,
    horizon: usize,
    mut wc_cov_solver: F,
) -> Result<FiniteHorizonSolution>
where
    F: FnMut(&StageProblem) -> Result<WorstCaseCovResult>,
{
    let backward = backward_pass(sys, weights, nominal, lambda, horizon)?;
    let (x0, _) = estimator::posterior(&sys.m0_cov, sys)?;
    let mut x_bar = vec![x0];
    let mut sigma_star = Vec::with_capacity(horizon);
    let mut z = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let res = wc_cov_solver(&StageProblem {
            t,
            s_next: &backward.s[t + 1],
            p_next: &backward.p[t + 1],
            x_bar_t: &x_bar[t],
            sigma_hat: &nominal.sigma_hat,
            lambda,
            system: sys,
        })?;
        sigma_star.push(res.sigma_star);
        x_bar.push(res.x_bar_next);
        z.push(res.objective);
    }
    Ok(FiniteHorizonSolution {
        backward,
        sigma_star,
        x_bar,
        z,
    })
}

/// [`finite_horizon_recursion`] with the built-in worst-case covariance solver.
pub fn finite_horizon_solution(
    sys: &LinearSystem,
    weights: &CostWeights,
    nominal: &NominalMoments,
    lambda: f64,
    horizon: usize,
) -> Result<FiniteHorizonSolution> {
    finite_horizon_recursion(sys, weights, nominal, lambda, horizon, |sp| {
        ambiguity::worst_case_cov_finite(sp.system, sp.s_next, sp.p_next, sp.sigma_hat, sp.lambda, sp.x_bar_t)
    })
}

/// Options for [`solve_are`].
#[derive(Debug, Clone)]
pub struct AreOptions {
    /// Reject designs where `Φ` is not positive semidefinite.
    pub require_phi_psd: bool,
    /// Starting point; defaults to `Q`.
    pub seed: Option<Mat>,
}

impl Default for AreOptions {
    fn default() -> Self {
        Self {
            require_phi_psd: true,
            seed: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AreSolution {
    pub p: Mat,
    pub phi: Phi,
    pub iterations: usize,
    pub residual: f64,
}

/// Value iteration `P ← Q + Aᵀ(I + PΦ)⁻¹PA` until the relative Frobenius
/// change drops below [`ARE_TOL`].
pub fn solve_are(sys: &LinearSystem, weights: &CostWeights, lambda: f64, opts: &AreOptions) -> Result<AreSolution> {
    weights.check_against(sys)?;
    let phi = compute_phi(sys, weights, lambda)?;
    let q_top = linalg::max_eigenvalue(&weights.q);
    if !(lambda > q_top) {
        return Err(WdrcError::violated(
            Assumption::PenaltyDominance,
            format!("lambda = {lambda} does not exceed lambda_max(Q) = {q_top} <= lambda_max(P)"),
        ));
    }
    if !phi.is_psd {
        if opts.require_phi_psd {
            return Err(WdrcError::violated(
                Assumption::PhiPositiveSemidefinite,
                format!("min eigenvalue of Phi is {:e}", linalg::min_eigenvalue(&phi.matrix)),
            ));
        }
        if !linalg::is_stabilizable(&sys.a, &sys.b) {
            return Err(WdrcError::violated(
                Assumption::ControlStabilizability,
                "(A, B) is not stabilizable",
            ));
        }
    } else if !linalg::is_stabilizable(&sys.a, &linalg::sqrtm_psd(&phi.matrix)) {
        return Err(WdrcError::violated(
            Assumption::ControlStabilizability,
            "(A, Phi^1/2) is not stabilizable",
        ));
    }
    if !linalg::is_observable(&sys.a, &linalg::sqrtm_psd(&weights.q)) {
        return Err(WdrcError::violated(
            Assumption::ControlStabilizability,
            "(A, Q^1/2) is not observable",
        ));
    }

    let n = sys.n_x();
    let eye = Mat::identity(n, n);
    let a = &sys.a;
    let mut p = linalg::symmetrize(opts.seed.as_ref().unwrap_or(&weights.q));
    let mut change = f64::INFINITY;
    for it in 1..=ARE_MAX_ITERATIONS {
        let resolvent = &eye + &p * &phi.matrix;
        let mut next = &weights.q + a.transpose() * linalg::solve(&resolvent, &(&p * a))?;
        linalg::symmetrize_in_place(&mut next);
        if !next.iter().all(|x| x.is_finite()) {
            break;
        }
        let top = linalg::max_eigenvalue(&next);
        if top >= lambda {
            return Err(WdrcError::violated(
                Assumption::PenaltyDominance,
                format!("lambda = {lambda} does not exceed lambda_max(P) = {top} (iteration {it})"),
            ));
        }
        change = (&next - &p).norm();
        p = next;
        if change < ARE_TOL * p.norm().max(1.0) {
            let residual = are_residual(sys, weights, &phi.matrix, &p)?;
            if residual >= ARE_RESIDUAL_TOL * p.norm().max(1.0) {
                return Err(WdrcError::NoConvergence {
                    solver: "control ARE",
                    iterations: it,
                    residual,
                });
            }
            require_dominance(lambda, &p, "steady state")?;
            return Ok(AreSolution {
                p,
                phi,
                iterations: it,
                residual,
            });
        }
    }
    Err(WdrcError::NoConvergence {
        solver: "control ARE",
        iterations: ARE_MAX_ITERATIONS,
        residual: change,
    })
}

/// `‖P - Q - Aᵀ(I + PΦ)⁻¹PA‖_F`.
pub fn are_residual(sys: &LinearSystem, weights: &CostWeights, phi: &Mat, p: &Mat) -> Result<f64> {
    let n = sys.n_x();
    let resolvent = Mat::identity(n, n) + p * phi;
    let rhs = &weights.q + sys.a.transpose() * linalg::solve(&resolvent, &(p * &sys.a))?;
    Ok((p - rhs).norm())
}

/// Stationary policy and adversary parameters.
#[derive(Debug, Clone)]
pub struct SteadyParams {
    pub phi: Mat,
    pub s: Mat,
    pub r: Vector,
    pub k: Mat,
    pub l: Vector,
    pub h: Mat,
    pub g: Vector,
}

pub fn steady_state_policy_params(
    sys: &LinearSystem,
    weights: &CostWeights,
    nominal: &NominalMoments,
    lambda: f64,
    p_ss: &Mat,
) -> Result<SteadyParams> {
    check_inputs(sys, weights, nominal)?;
    require_dominance(lambda, p_ss, "steady state")?;
    let step = Step::new(sys, weights, nominal, lambda)?;
    let n = sys.n_x();
    let eye = Mat::identity(n, n);
    // r_ss = [I - Aᵀ(I+PΦ)⁻¹]⁻¹ Aᵀ(I+PΦ)⁻¹ P ŵ
    let resolvent = &eye + p_ss * &step.phi;
    let a_res = sys.a.transpose() * linalg::inverse(&resolvent)?;
    let lhs = &eye - &a_res;
    let rhs = &a_res * (p_ss * &nominal.w_hat);
    let r = linalg::solve_vec(&lhs, &rhs).map_err(|_| {
        WdrcError::violated(
            Assumption::ResolventInvertible,
            "I - A^T (I + P Phi)^-1 is singular",
        )
    })?;
    let out = step.apply(p_ss, &r)?;
    let mut s = &weights.q + sys.a.transpose() * p_ss * &sys.a - p_ss;
    linalg::symmetrize_in_place(&mut s);
    Ok(SteadyParams {
        phi: step.phi,
        s,
        r,
        k: out.k,
        l: out.l,
        h: out.h,
        g: out.g,
    })
}

/// Everything the stationary controller and estimator need, plus the
/// stationary value data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateSolution {
    #[serde(with = "io::mat")]
    pub p: Mat,
    #[serde(with = "io::mat")]
    pub s: Mat,
    #[serde(with = "io::mat")]
    pub phi: Mat,
    #[serde(with = "io::vector")]
    pub r: Vector,
    #[serde(with = "io::mat")]
    pub k: Mat,
    #[serde(with = "io::vector")]
    pub l: Vector,
    #[serde(with = "io::mat")]
    pub h: Mat,
    #[serde(with = "io::vector")]
    pub g: Vector,
    #[serde(with = "io::mat")]
    pub sigma_star: Mat,
    #[serde(with = "io::mat")]
    pub x_bar_prior: Mat,
    #[serde(with = "io::mat")]
    pub x_bar: Mat,
    pub z: f64,
    pub rho: f64,
    pub lambda: f64,
    pub theta: Option<f64>,
}

fn check_inputs(sys: &LinearSystem, weights: &CostWeights, nominal: &NominalMoments) -> Result<()> {
    weights.check_against(sys)?;
    linalg::check_square("Qf", &weights.qf, sys.n_x())?;
    linalg::check_len("w_hat", &nominal.w_hat, sys.n_x())
}
