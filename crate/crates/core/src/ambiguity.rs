//! Gelbrich distance, worst-case covariance maximization and the filter ARE.
//!
//! The worst-case covariance programs maximize
//!
//! ```text
//! f(Σ) = Tr[S X(Σ)] + Tr[(P - λI) Σ] + 2λ Tr[(Σ̂^{1/2} Σ Σ̂^{1/2})^{1/2}]
//! ```
//!
//! where `X(Σ)` is the posterior covariance produced by the Kalman filter
//! (one step in the finite-horizon case, the filter ARE in the steady case).
//! The filter constraints are eliminated by evaluating `X(Σ)` directly, so `Σ`
//! is the only decision variable.
//!
//! Each iteration linearizes `Tr[S X(Σ)]` as `Tr[W Σ]`. With
//! `D = λI - P - W ≻ 0` the linearized problem has the closed-form maximizer
//! `λ² D⁻¹ Σ̂ D⁻¹`, which gives an ascent direction; a backtracking search on
//! the exact objective keeps the iterates monotone. If `D` is not positive
//! definite a projected gradient step with eigenvalue clamping is used
//! instead.

use serde::{Deserialize, Serialize};

use crate::error::{Assumption, Result, WdrcError};
use crate::estimator;
use crate::io;
use crate::linalg::{self, check_len, check_square, Mat, Vector};
use crate::model::LinearSystem;

pub const STATIONARITY_TOL: f64 = 1e-7;
pub const MAX_ITERATIONS: usize = 10_000;
/// Looser stationarity accepted once the objective has stopped improving.
pub const STALLED_STATIONARITY_TOL: f64 = 1e-5;
/// Iterations without a relative gain of [`STALL_GAIN`] that count as a stall.
const STALL_ITERATIONS: usize = 20;
const STALL_GAIN: f64 = 1e-12;
const PSD_INPUT_TOL: f64 = 1e-10;
const FILTER_ARE_TOL: f64 = 1e-8;

/// Output of a worst-case covariance solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorstCaseCovResult {
    #[serde(with = "io::mat")]
    pub sigma_star: Mat,
    /// Prior covariance `X⁻` at the optimum.
    #[serde(with = "io::mat")]
    pub x_prior: Mat,
    /// Posterior covariance `X` at the optimum.
    #[serde(with = "io::mat")]
    pub x_bar_next: Mat,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Objective value after each accepted iterate (first entry is the start).
    #[serde(skip)]
    pub objective_history: Vec<f64>,
}

/// `B²(Σ_a, Σ_b) = Tr[Σ_a + Σ_b - 2 (Σ_b^{1/2} Σ_a Σ_b^{1/2})^{1/2}]`, clamped at 0.
pub fn bures_squared(sigma_a: &Mat, sigma_b: &Mat) -> f64 {
    let root_b = linalg::sqrtm_psd(sigma_b);
    let inner = &root_b * sigma_a * &root_b;
    (sigma_a.trace() + sigma_b.trace() - 2.0 * linalg::trace_sqrt_psd(&inner)).max(0.0)
}

/// Gelbrich distance between two sets of first and second moments.
pub fn gelbrich_distance(a: (&Vector, &Mat), b: (&Vector, &Mat)) -> Result<f64> {
    let (ma, sa) = a;
    let (mb, sb) = b;
    check_len("mean b", mb, ma.len())?;
    check_square("cov a", sa, ma.len())?;
    check_square("cov b", sb, ma.len())?;
    for (name, s) in [("cov a", sa), ("cov b", sb)] {
        let lo = linalg::min_eigenvalue(s);
        if lo < -PSD_INPUT_TOL {
            return Err(WdrcError::InvalidInput(format!(
                "{name} is not positive semidefinite (min eigenvalue {lo:e})"
            )));
        }
    }
    Ok(((ma - mb).norm_squared() + bures_squared(sa, sb)).sqrt())
}

/// Steady-state filter covariances.
#[derive(Debug, Clone)]
pub struct FilterAre {
    pub x_prior: Mat,
    pub x_post: Mat,
    pub residual: f64,
}

/// Solve `X⁻ = A g(X⁻) A^T + Σ`, `g` the measurement update, by doubling
/// from `X⁻ = 0`, after checking detectability of `(A, C)` and
/// stabilizability of `(A, Σ^{1/2})`.
pub fn solve_filter_are(sys: &LinearSystem, sigma: &Mat) -> Result<FilterAre> {
    check_square("sigma", sigma, sys.n_x())?;
    if !linalg::is_detectable(&sys.a, &sys.c) {
        return Err(WdrcError::violated(
            Assumption::FilterDetectability,
            "(A, C) is not detectable",
        ));
    }
    if !linalg::is_stabilizable(&sys.a, &linalg::sqrtm_psd(sigma)) {
        return Err(WdrcError::violated(
            Assumption::FilterDetectability,
            "(A, Sigma^1/2) is not stabilizable",
        ));
    }
    filter_are_unchecked(sys, sigma)
}

pub(crate) fn filter_are_unchecked(sys: &LinearSystem, sigma: &Mat) -> Result<FilterAre> {
    let g = if sys.n_y() == 0 {
        Mat::zeros(sys.n_x(), sys.n_x())
    } else {
        let m_inv = linalg::spd_inverse(&sys.m)?;
        sys.c.transpose() * m_inv * &sys.c
    };
    let out = linalg::sda(&sys.a.transpose(), &g, sigma, 1e-13, 64);
    let x_prior = match out {
        Ok(o) => o.x,
        Err(WdrcError::NoConvergence { iterations, residual, .. }) => {
            return Err(WdrcError::NoConvergence {
                solver: "filter ARE",
                iterations,
                residual,
            })
        }
        Err(e) => return Err(e),
    };
    let (x_post, _) = estimator::posterior(&x_prior, sys)?;
    let recon = estimator::prior_cov(&x_post, sigma, sys);
    let residual = (&recon - &x_prior).norm();
    if residual > FILTER_ARE_TOL * x_prior.norm().max(1.0) {
        return Err(WdrcError::NoConvergence {
            solver: "filter ARE",
            iterations: 64,
            residual,
        });
    }
    Ok(FilterAre {
        x_prior,
        x_post,
        residual,
    })
}


enum Stage<'a> {
    /// One filter step from the current posterior covariance.
    Finite { x_bar: &'a Mat },
    /// Stationary filter (filter ARE).
    Steady,
}

struct Program<'a> {
    sys: &'a LinearSystem,
    s: &'a Mat,
    p: &'a Mat,
    sigma_hat: &'a Mat,
    root_hat: Mat,
    lambda: f64,
    stage: Stage<'a>,
}

struct Point {
    sigma: Mat,
    objective: f64,
    x_prior: Mat,
    x_post: Mat,
    gain: Mat,
}

impl Program<'_> {
    fn point(&self, sigma: Mat) -> Result<Point> {
        let (x_prior, x_post) = match self.stage {
            Stage::Finite { x_bar } => {
                let prior = estimator::prior_cov(x_bar, &sigma, self.sys);
                let (post, _) = estimator::posterior(&prior, self.sys)?;
                (prior, post)
            }
            Stage::Steady => {
                let are = filter_are_unchecked(self.sys, &sigma)?;
                (are.x_prior, are.x_post)
            }
        };
        let (_, gain) = estimator::posterior(&x_prior, self.sys)?;
        let n = sigma.nrows();
        let pen = self.p - Mat::identity(n, n) * self.lambda;
        let inner = &self.root_hat * &sigma * &self.root_hat;
        let objective = linalg::trace_product(self.s, &x_post)
            + linalg::trace_product(&pen, &sigma)
            + 2.0 * self.lambda * linalg::trace_sqrt_psd(&inner);
        Ok(Point {
            sigma,
            objective,
            x_prior,
            x_post,
            gain,
        })
    }

    /// Gradient of `Tr[S X(Σ)]`.
    fn filter_gradient(&self, pt: &Point) -> Result<Mat> {
        let n = self.sys.n_x();
        if self.s.amax() == 0.0 {
            return Ok(Mat::zeros(n, n));
        }
        let i_kc = Mat::identity(n, n) - &pt.gain * &self.sys.c;
        let v = i_kc.transpose() * self.s * &i_kc;
        let mut w = match self.stage {
            Stage::Finite { .. } => v,
            Stage::Steady => linalg::dlyap_doubling(&(&self.sys.a * &i_kc), &v)?,
        };
        linalg::symmetrize_in_place(&mut w);
        Ok(w)
    }

    /// Gradient of the full objective, with a pseudo-inverse root for the
    /// transport term.
    fn full_gradient(&self, pt: &Point, w: &Mat) -> Mat {
        let n = self.sys.n_x();
        let inner = &self.root_hat * &pt.sigma * &self.root_hat;
        let transport = &self.root_hat * linalg::pinv_sqrtm_psd(&inner, 1e-12) * &self.root_hat;
        let mut g = w + self.p - Mat::identity(n, n) * self.lambda + transport * self.lambda;
        linalg::symmetrize_in_place(&mut g);
        g
    }

    fn accept(&self, current: f64, candidate: f64) -> bool {
        candidate >= current - 1e-13 * current.abs().max(1.0)
    }

    fn solve(&self) -> Result<WorstCaseCovResult> {
        let n = self.sys.n_x();
        let pen = Mat::identity(n, n) * self.lambda - self.p;
        if self.sigma_hat.amax() == 0.0 {
            let pt = self.point(Mat::zeros(n, n))?;
            return Ok(finish(pt, 0.0, 0, vec![]));
        }
        let blowup = 1e8 * self.sigma_hat.norm().max(1.0);
        let mut pt = self.point(self.sigma_hat.clone())?;
        let mut history = vec![pt.objective];
        let mut residual = f64::INFINITY;
        let (mut best, mut best_at) = (pt.objective, 0);
        for iteration in 1..=MAX_ITERATIONS {
            if iteration - 1 - best_at >= STALL_ITERATIONS {
                if residual <= STALLED_STATIONARITY_TOL {
                    log::debug!("worst-case ascent stalled at residual {residual:e}");
                    return Ok(finish(pt, residual, iteration - 1, history));
                }
                return Err(WdrcError::NoConvergence {
                    solver: "worst-case covariance ascent",
                    iterations: iteration - 1,
                    residual,
                });
            }
            let w = self.filter_gradient(&pt)?;
            let d = &pen - &w;
            let fixed_point = if linalg::is_positive_definite(&d) {
                linalg::spd_inverse(&d).ok()
            } else {
                None
            };
            let accepted = if let Some(d_inv) = fixed_point {
                let mut target = &d_inv * self.sigma_hat * &d_inv * (self.lambda * self.lambda);
                linalg::symmetrize_in_place(&mut target);
                let dir = &target - &pt.sigma;
                residual = dir.norm() / pt.sigma.norm().max(target.norm()).max(f64::MIN_POSITIVE);
                if residual <= STATIONARITY_TOL {
                    return Ok(finish(pt, residual, iteration - 1, history));
                }
                self.line_search(&pt, |alpha| {
                    let mut c = &pt.sigma + &dir * alpha;
                    linalg::symmetrize_in_place(&mut c);
                    c
                })?
            } else {
                let grad = self.full_gradient(&pt, &w);
                let step = pt.sigma.norm().max(1e-12) / grad.norm().max(f64::MIN_POSITIVE);
                let projected = linalg::project_psd(&(&pt.sigma + &grad * step));
                residual = (&projected - &pt.sigma).norm() / pt.sigma.norm().max(f64::MIN_POSITIVE);
                if residual <= STATIONARITY_TOL {
                    return Ok(finish(pt, residual, iteration - 1, history));
                }
                self.line_search(&pt, |alpha| linalg::project_psd(&(&pt.sigma + &grad * (step * alpha))))?
            };
            match accepted {
                Some(next) => {
                    if next.objective > best + STALL_GAIN * best.abs().max(1.0) {
                        (best, best_at) = (next.objective, iteration);
                    }
                    history.push(next.objective);
                    pt = next;
                }
                None if residual <= STALLED_STATIONARITY_TOL => {
                    log::debug!("worst-case ascent found no improving step at residual {residual:e}");
                    return Ok(finish(pt, residual, iteration - 1, history));
                }
                None => {
                    return Err(WdrcError::NoConvergence {
                        solver: "worst-case covariance ascent",
                        iterations: iteration,
                        residual,
                    })
                }
            }
            if !pt.objective.is_finite() || pt.sigma.norm() > blowup {
                return Err(WdrcError::violated(
                    Assumption::PenaltyDominance,
                    "worst-case covariance objective is unbounded",
                ));
            }
        }
        Err(WdrcError::NoConvergence {
            solver: "worst-case covariance ascent",
            iterations: MAX_ITERATIONS,
            residual,
        })
    }

    fn line_search(&self, pt: &Point, candidate: impl Fn(f64) -> Mat) -> Result<Option<Point>> {
        let mut alpha = 1.0;
        for _ in 0..40 {
            match self.point(candidate(alpha)) {
                Ok(next) if self.accept(pt.objective, next.objective) => return Ok(Some(next)),
                Ok(_) => {}
                Err(e) if e.is_non_convergence() => {}
                Err(e) => return Err(e),
            }
            alpha *= 0.5;
        }
        Ok(None)
    }
}

fn finish(pt: Point, residual: f64, iterations: usize, mut history: Vec<f64>) -> WorstCaseCovResult {
    if history.is_empty() {
        history.push(pt.objective);
    }
    WorstCaseCovResult {
        sigma_star: pt.sigma,
        x_prior: pt.x_prior,
        x_bar_next: pt.x_post,
        objective: pt.objective,
        kkt_residual: residual,
        iterations,
        objective_history: history,
    }
}

fn check_program_inputs(sys: &LinearSystem, s: &Mat, p: &Mat, sigma_hat: &Mat, lambda: f64) -> Result<()> {
    let n = sys.n_x();
    check_square("S", s, n)?;
    check_square("P", p, n)?;
    check_square("sigma_hat", sigma_hat, n)?;
    if !(lambda > 0.0) {
        return Err(WdrcError::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    let top = linalg::max_eigenvalue(p);
    if !(lambda > top) {
        return Err(WdrcError::violated(
            Assumption::PenaltyDominance,
            format!("lambda = {lambda} does not exceed lambda_max(P) = {top}"),
        ));
    }
    let lo = linalg::min_eigenvalue(sigma_hat);
    if lo < -PSD_INPUT_TOL * sigma_hat.amax().max(1.0) {
        return Err(WdrcError::InvalidInput(format!(
            "sigma_hat is not positive semidefinite (min eigenvalue {lo:e})"
        )));
    }
    Ok(())
}

fn program<'a>(
    sys: &'a LinearSystem,
    s: &'a Mat,
    p: &'a Mat,
    sigma_hat: &'a Mat,
    lambda: f64,
    stage: Stage<'a>,
) -> Program<'a> {
    Program {
        sys,
        s,
        p,
        sigma_hat,
        root_hat: linalg::sqrtm_psd(sigma_hat),
        lambda,
        stage,
    }
}

/// Worst-case covariance of the stationary problem, coupled to the filter ARE.
pub fn worst_case_cov_steady(
    sys: &LinearSystem,
    s_ss: &Mat,
    p_ss: &Mat,
    sigma_hat: &Mat,
    lambda: f64,
) -> Result<WorstCaseCovResult> {
    check_program_inputs(sys, s_ss, p_ss, sigma_hat, lambda)?;
    program(sys, s_ss, p_ss, sigma_hat, lambda, Stage::Steady).solve()
}

/// Worst-case covariance for one stage given the current posterior
/// covariance `x_bar_t`; the returned `x_bar_next` is the next posterior.
pub fn worst_case_cov_finite(
    sys: &LinearSystem,
    s_next: &Mat,
    p_next: &Mat,
    sigma_hat: &Mat,
    lambda: f64,
    x_bar_t: &Mat,
) -> Result<WorstCaseCovResult> {
    check_program_inputs(sys, s_next, p_next, sigma_hat, lambda)?;
    check_square("x_bar_t", x_bar_t, sys.n_x())?;
    program(sys, s_next, p_next, sigma_hat, lambda, Stage::Finite { x_bar: x_bar_t }).solve()
}
