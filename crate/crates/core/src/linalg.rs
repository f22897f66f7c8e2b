//! Dense matrix helpers shared by the solver modules.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`. Symmetric matrices are
//! handled through the symmetric eigendecomposition with eigenvalues clamped
//! at zero, which keeps square roots well defined on semidefinite inputs.

use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, WdrcError};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Condition number above which a solve logs a warning.
pub const CONDITION_WARN: f64 = 1e12;

static COND_WARNED: AtomicBool = AtomicBool::new(false);

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize_in_place(m: &mut Mat) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn asymmetry(m: &Mat) -> f64 {
    (m - m.transpose()).amax()
}

pub fn sym_eig(m: &Mat) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(m))
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym_eig(m).eigenvalues.min()
}

pub fn max_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym_eig(m).eigenvalues.max()
}

/// `true` when the smallest eigenvalue is at least `-tol`.
pub fn is_psd(m: &Mat, tol: f64) -> bool {
    min_eigenvalue(m) >= -tol
}

/// Rebuild `V f(D) V^T` from a symmetric eigendecomposition.
pub fn eig_map(eig: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> Mat {
    let v = &eig.eigenvectors;
    let d = eig.eigenvalues.map(f);
    let mut out = v * Mat::from_diagonal(&d) * v.transpose();
    symmetrize_in_place(&mut out);
    out
}

/// Principal square root of a symmetric PSD matrix (negative eigenvalues clamped).
pub fn sqrtm_psd(m: &Mat) -> Mat {
    eig_map(&sym_eig(m), |x| x.max(0.0).sqrt())
}

/// Trace of the principal square root of a symmetric PSD matrix.
pub fn trace_sqrt_psd(m: &Mat) -> f64 {
    sym_eig(m).eigenvalues.iter().map(|x| x.max(0.0).sqrt()).sum()
}

/// Pseudo-inverse square root; eigenvalues below `rel_cut * max` are treated as zero.
pub fn pinv_sqrtm_psd(m: &Mat, rel_cut: f64) -> Mat {
    let eig = sym_eig(m);
    let top = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cut = rel_cut * top;
    eig_map(&eig, |x| if x > cut && x > 0.0 { 1.0 / x.sqrt() } else { 0.0 })
}

/// Projection onto the PSD cone in the Frobenius norm.
pub fn project_psd(m: &Mat) -> Mat {
    eig_map(&sym_eig(m), |x| x.max(0.0))
}

/// Solve `a x = b` with partial-pivot LU.
pub fn solve(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(WdrcError::Dimension(format!(
            "solve: lhs {}x{}, rhs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Ok(b.clone());
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let diag = u.diagonal().map(f64::abs);
    let (lo, hi) = (diag.min(), diag.max());
    if lo == 0.0 || !lo.is_finite() {
        return Err(WdrcError::Singular("LU pivot is zero".into()));
    }
    if hi / lo > CONDITION_WARN && !COND_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("ill-conditioned solve (pivot ratio {:.3e})", hi / lo);
    }
    lu.solve(b)
        .ok_or_else(|| WdrcError::Singular("LU solve failed".into()))
}

pub fn solve_vec(a: &Mat, b: &Vector) -> Result<Vector> {
    let m = Mat::from_column_slice(b.len(), 1, b.as_slice());
    let x = solve(a, &m)?;
    Ok(Vector::from_column_slice(x.as_slice()))
}

pub fn inverse(a: &Mat) -> Result<Mat> {
    solve(a, &Mat::identity(a.nrows(), a.nrows()))
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(a: &Mat) -> Result<Mat> {
    let chol = nalgebra::Cholesky::new(symmetrize(a))
        .ok_or_else(|| WdrcError::Singular("matrix is not positive definite".into()))?;
    let l = chol.l();
    let d = l.diagonal().map(f64::abs);
    let ratio = (d.max() / d.min()).powi(2);
    if ratio > CONDITION_WARN && !COND_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("ill-conditioned SPD inverse (estimate {ratio:.3e})");
    }
    let mut inv = chol.inverse();
    symmetrize_in_place(&mut inv);
    Ok(inv)
}

pub fn is_positive_definite(a: &Mat) -> bool {
    a.nrows() == 0 || nalgebra::Cholesky::new(symmetrize(a)).is_some()
}

pub fn eigenvalues(a: &Mat) -> Vec<Complex<f64>> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.complex_eigenvalues().iter().cloned().collect()
}

pub fn spectral_radius(a: &Mat) -> f64 {
    eigenvalues(a).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn trace_product(a: &Mat, b: &Mat) -> f64 {
    a.component_mul(&b.transpose()).sum()
}

/// Matrix exponential by scaling and squaring with a Taylor kernel.
pub fn expm(a: &Mat) -> Mat {
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm1 > 0.5 {
        (norm1 / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings);
    let mut sum = Mat::identity(n, n);
    let mut term = Mat::identity(n, n);
    for k in 1..=40 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.amax() <= 1e-18 * sum.amax() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Solve `W = F^T W F + Q` by the doubling recursion. Needs `rho(F) < 1`.
pub fn dlyap_doubling(f: &Mat, q: &Mat) -> Result<Mat> {
    let mut w = symmetrize(q);
    let mut fk = f.clone();
    for _ in 0..64 {
        let inc = fk.transpose() * &w * &fk;
        w += &inc;
        fk = &fk * &fk;
        if !w.iter().all(|x| x.is_finite()) {
            break;
        }
        if fk.amax() < 1e-18 || inc.amax() <= 1e-17 * w.amax().max(f64::MIN_POSITIVE) {
            symmetrize_in_place(&mut w);
            return Ok(w);
        }
    }
    Err(WdrcError::NoConvergence {
        solver: "Lyapunov doubling",
        iterations: 64,
        residual: fk.amax(),
    })
}

/// Outcome of the structure-preserving doubling iteration.
pub struct DoublingOutcome {
    pub x: Mat,
    pub doublings: usize,
}

/// Structure-preserving doubling for `X = H + a^T X (I + G X)^-1 a`, started
/// from `X = 0`. After `k` doublings the iterate equals the plain fixed-point
/// sequence after `2^k` steps.
pub fn sda(a: &Mat, g: &Mat, h: &Mat, rel_tol: f64, max_doublings: usize) -> Result<DoublingOutcome> {
    let n = a.nrows();
    let eye = Mat::identity(n, n);
    let mut ak = a.clone();
    let mut gk = symmetrize(g);
    let mut hk = symmetrize(h);
    for k in 0..max_doublings {
        let w = &eye + &gk * &hk;
        // (I + G H)^-1 applied to [A, G]
        let mut rhs = Mat::zeros(n, 2 * n);
        rhs.columns_mut(0, n).copy_from(&ak);
        rhs.columns_mut(n, n).copy_from(&gk);
        let sol = solve(&w, &rhs)?;
        let w_inv_a = sol.columns(0, n).into_owned();
        let w_inv_g = sol.columns(n, n).into_owned();
        let a_next = &ak * &w_inv_a;
        let mut g_next = &gk + &ak * &w_inv_g * ak.transpose();
        let mut h_next = &hk + ak.transpose() * &hk * &w_inv_a;
        symmetrize_in_place(&mut g_next);
        symmetrize_in_place(&mut h_next);
        let change = (&h_next - &hk).norm();
        let scale = h_next.norm().max(1.0);
        if !h_next.iter().all(|x| x.is_finite()) {
            return Err(WdrcError::NoConvergence {
                solver: "doubling Riccati",
                iterations: k + 1,
                residual: f64::INFINITY,
            });
        }
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if change <= rel_tol * scale {
            return Ok(DoublingOutcome {
                x: hk,
                doublings: k + 1,
            });
        }
    }
    Err(WdrcError::NoConvergence {
        solver: "doubling Riccati",
        iterations: max_doublings,
        residual: ak.amax(),
    })
}

const PBH_REL_TOL: f64 = 1e-9;
const UNIT_CIRCLE_MARGIN: f64 = 1e-9;

/// PBH test: every eigenvalue of `a` with modulus at least one must be
/// controllable through `b`.
pub fn is_stabilizable(a: &Mat, b: &Mat) -> bool {
    pbh(a, b, |z| z.norm() >= 1.0 - UNIT_CIRCLE_MARGIN)
}

pub fn is_detectable(a: &Mat, c: &Mat) -> bool {
    is_stabilizable(&a.transpose(), &c.transpose())
}

/// PBH observability test over every eigenvalue.
pub fn is_observable(a: &Mat, c: &Mat) -> bool {
    pbh(&a.transpose(), &c.transpose(), |_| true)
}

fn pbh(a: &Mat, b: &Mat, select: impl Fn(&Complex<f64>) -> bool) -> bool {
    let n = a.nrows();
    if n == 0 {
        return true;
    }
    let m = b.ncols();
    let scale = a.norm().max(b.norm()).max(1.0);
    for mu in eigenvalues(a).iter().filter(|z| select(z)) {
        let mut blk = DMatrix::<Complex<f64>>::zeros(n, n + m);
        for i in 0..n {
            for j in 0..n {
                blk[(i, j)] = Complex::new(a[(i, j)], 0.0);
            }
            blk[(i, i)] -= mu;
            for j in 0..m {
                blk[(i, n + j)] = Complex::new(b[(i, j)], 0.0);
            }
        }
        let sv = blk.singular_values();
        if sv.len() < n || sv.min() <= PBH_REL_TOL * scale {
            return false;
        }
    }
    true
}

pub(crate) fn check_square(name: &str, m: &Mat, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(WdrcError::Dimension(format!(
            "{name} must be {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn check_shape(name: &str, m: &Mat, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(WdrcError::Dimension(format!(
            "{name} must be {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn check_len(name: &str, v: &Vector, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(WdrcError::Dimension(format!(
            "{name} must have length {n}, got {}",
            v.len()
        )));
    }
    Ok(())
}
