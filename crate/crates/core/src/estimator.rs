//! Kalman filtering under the worst-case disturbance moments.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WdrcError};
use crate::io;
use crate::linalg::{self, Mat, Vector};
use crate::model::LinearSystem;

/// Conditional mean and covariance of the state given the information vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    #[serde(with = "io::vector")]
    pub x_bar: Vector,
    #[serde(with = "io::mat")]
    pub x_cov: Mat,
}

/// How the correction gain is formed.
#[derive(Debug, Clone)]
pub enum GainMode {
    /// Propagate the covariance with the given disturbance covariance.
    TimeVarying { sigma: Mat },
    /// Fixed gain `X̄_ss C^T M^-1`; the covariance stays at `x_post`.
    Steady { x_post: Mat, gain: Mat },
}

impl GainMode {
    pub fn steady(x_post: Mat, sys: &LinearSystem) -> Result<Self> {
        let gain = steady_gain(&x_post, sys)?;
        Ok(GainMode::Steady { x_post, gain })
    }
}

/// Measurement update of a prior covariance. Returns `(X̄⁺, gain)` where the
/// gain is `X⁻ C^T (C X⁻ C^T + M)^-1`. Joseph form keeps the result PSD.
pub fn posterior(x_prior: &Mat, sys: &LinearSystem) -> Result<(Mat, Mat)> {
    let n = sys.n_x();
    let c = &sys.c;
    if sys.n_y() == 0 {
        return Ok((linalg::symmetrize(x_prior), Mat::zeros(n, 0)));
    }
    let innov = c * x_prior * c.transpose() + &sys.m;
    let innov_inv = linalg::spd_inverse(&innov).map_err(|_| {
        WdrcError::Singular("innovation covariance C X⁻ C^T + M is not positive definite".into())
    })?;
    let gain = x_prior * c.transpose() * innov_inv;
    let i_kc = Mat::identity(n, n) - &gain * c;
    let mut post = &i_kc * x_prior * i_kc.transpose() + &gain * &sys.m * gain.transpose();
    linalg::symmetrize_in_place(&mut post);
    Ok((post, gain))
}

/// One step of the covariance recursion: prior `A X̄ A^T + Σ`, then update.
pub fn covariance_recursion(x_cov: &Mat, sigma: &Mat, sys: &LinearSystem) -> Result<Mat> {
    let prior = prior_cov(x_cov, sigma, sys);
    Ok(posterior(&prior, sys)?.0)
}

pub fn prior_cov(x_cov: &Mat, sigma: &Mat, sys: &LinearSystem) -> Mat {
    let mut p = &sys.a * x_cov * sys.a.transpose() + sigma;
    linalg::symmetrize_in_place(&mut p);
    p
}

/// `X̄_ss C^T M^-1`.
pub fn steady_gain(x_post: &Mat, sys: &LinearSystem) -> Result<Mat> {
    if sys.n_y() == 0 {
        return Ok(Mat::zeros(sys.n_x(), 0));
    }
    let m_inv = linalg::spd_inverse(&sys.m)?;
    Ok(x_post * sys.c.transpose() * m_inv)
}

/// Predict with `A x̄ + B u + w̄`, then correct with the innovation.
pub fn filter_step(
    belief: &BeliefState,
    u: &Vector,
    w_bar: &Vector,
    y_next: &Vector,
    sys: &LinearSystem,
    mode: &GainMode,
) -> Result<BeliefState> {
    linalg::check_len("u", u, sys.n_u())?;
    linalg::check_len("w_bar", w_bar, sys.n_x())?;
    linalg::check_len("y", y_next, sys.n_y())?;
    let pred = &sys.a * &belief.x_bar + &sys.b * u + w_bar;
    let (x_cov, gain) = match mode {
        GainMode::TimeVarying { sigma } => {
            let (post, gain) = posterior(&prior_cov(&belief.x_cov, sigma, sys), sys)?;
            (post, gain)
        }
        GainMode::Steady { x_post, gain } => (x_post.clone(), gain.clone()),
    };
    let innovation = y_next - &sys.c * &pred;
    Ok(BeliefState {
        x_bar: pred + gain * innovation,
        x_cov,
    })
}

/// Estimate from the first measurement, starting at the prior `(m0, M0)`.
pub fn initial_belief(sys: &LinearSystem, y0: &Vector, mode: &GainMode) -> Result<BeliefState> {
    linalg::check_len("y0", y0, sys.n_y())?;
    let (x_cov, gain) = match mode {
        GainMode::TimeVarying { .. } => posterior(&sys.m0_cov, sys)?,
        GainMode::Steady { x_post, gain } => (x_post.clone(), gain.clone()),
    };
    let innovation = y0 - &sys.c * &sys.m0;
    Ok(BeliefState {
        x_bar: &sys.m0 + gain * innovation,
        x_cov,
    })
}
