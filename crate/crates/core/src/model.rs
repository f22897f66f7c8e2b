//! Plants, cost weights, disturbance models and their builders.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ambiguity::gelbrich_distance;
use crate::error::{Result, WdrcError};
use crate::io;
use crate::linalg::{self, check_len, check_shape, check_square, Mat, Vector};

const SYM_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-10;

/// Discrete-time plant `x' = A x + B u + w`, `y = C x + v` with `v ~ (0, M)`
/// and `x_0 ~ (m0, M0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    #[serde(with = "io::mat")]
    pub a: Mat,
    #[serde(with = "io::mat")]
    pub b: Mat,
    #[serde(with = "io::mat")]
    pub c: Mat,
    #[serde(with = "io::mat")]
    pub m: Mat,
    #[serde(with = "io::vector")]
    pub m0: Vector,
    #[serde(with = "io::mat")]
    pub m0_cov: Mat,
}

impl LinearSystem {
    pub fn new(a: Mat, b: Mat, c: Mat, m: Mat, m0: Vector, m0_cov: Mat) -> Result<Self> {
        let sys = Self {
            a,
            b,
            c,
            m,
            m0,
            m0_cov,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        check_square("A", &self.a, n)?;
        check_shape("B", &self.b, n, self.b.ncols())?;
        check_shape("C", &self.c, self.c.nrows(), n)?;
        check_square("M", &self.m, self.c.nrows())?;
        check_len("m0", &self.m0, n)?;
        check_square("M0", &self.m0_cov, n)?;
        require_symmetric("M", &self.m)?;
        if !linalg::is_positive_definite(&self.m) {
            return Err(WdrcError::InvalidInput(
                "measurement-noise covariance M must be positive definite".into(),
            ));
        }
        require_psd("M0", &self.m0_cov)?;
        Ok(())
    }
}

/// Quadratic cost weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    #[serde(with = "io::mat")]
    pub q: Mat,
    #[serde(with = "io::mat")]
    pub qf: Mat,
    #[serde(with = "io::mat")]
    pub r: Mat,
}

impl CostWeights {
    pub fn new(q: Mat, qf: Mat, r: Mat) -> Result<Self> {
        let w = Self { q, qf, r };
        w.validate()?;
        Ok(w)
    }

    /// `Q = Qf = I`, `R = I`.
    pub fn identity(n_x: usize, n_u: usize) -> Self {
        Self {
            q: Mat::identity(n_x, n_x),
            qf: Mat::identity(n_x, n_x),
            r: Mat::identity(n_u, n_u),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.q.nrows();
        check_square("Q", &self.q, n)?;
        check_square("Qf", &self.qf, n)?;
        check_square("R", &self.r, self.r.nrows())?;
        require_psd("Q", &self.q)?;
        require_psd("Qf", &self.qf)?;
        require_symmetric("R", &self.r)?;
        if !linalg::is_positive_definite(&self.r) {
            return Err(WdrcError::InvalidInput("R must be positive definite".into()));
        }
        Ok(())
    }

    pub fn check_against(&self, sys: &LinearSystem) -> Result<()> {
        check_square("Q", &self.q, sys.n_x())?;
        check_square("R", &self.r, sys.n_u())
    }
}

/// Nominal disturbance mean and covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NominalMoments {
    #[serde(with = "io::vector")]
    pub w_hat: Vector,
    #[serde(with = "io::mat")]
    pub sigma_hat: Mat,
}

impl NominalMoments {
    pub fn new(w_hat: Vector, sigma_hat: Mat) -> Result<Self> {
        check_square("sigma_hat", &sigma_hat, w_hat.len())?;
        require_psd("sigma_hat", &sigma_hat)?;
        Ok(Self {
            w_hat,
            sigma_hat: linalg::symmetrize(&sigma_hat),
        })
    }

    pub fn zero_mean(sigma_hat: Mat) -> Result<Self> {
        Self::new(Vector::zeros(sigma_hat.nrows()), sigma_hat)
    }

    pub fn dim(&self) -> usize {
        self.w_hat.len()
    }

    /// Adds `eps * I` to the covariance.
    pub fn with_jitter(mut self, eps: f64) -> Self {
        let n = self.dim();
        self.sigma_hat += Mat::identity(n, n) * eps;
        self
    }
}

/// Distribution of a random vector used for disturbances, initial states and
/// measurement noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DisturbanceModel {
    Gaussian {
        #[serde(with = "io::vector")]
        mean: Vector,
        #[serde(with = "io::mat")]
        cov: Mat,
    },
    UniformBox {
        #[serde(with = "io::vector")]
        lo: Vector,
        #[serde(with = "io::vector")]
        hi: Vector,
    },
    Empirical {
        #[serde(with = "io::vector_list")]
        samples: Vec<Vector>,
    },
}

impl DisturbanceModel {
    pub fn gaussian(mean: Vector, cov: Mat) -> Result<Self> {
        let m = DisturbanceModel::Gaussian { mean, cov };
        m.validate()?;
        Ok(m)
    }

    pub fn zero(n: usize) -> Self {
        DisturbanceModel::Gaussian {
            mean: Vector::zeros(n),
            cov: Mat::zeros(n, n),
        }
    }

    pub fn from_moments(m: &NominalMoments) -> Self {
        DisturbanceModel::Gaussian {
            mean: m.w_hat.clone(),
            cov: m.sigma_hat.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DisturbanceModel::Gaussian { mean, .. } => mean.len(),
            DisturbanceModel::UniformBox { lo, .. } => lo.len(),
            DisturbanceModel::Empirical { samples } => samples.first().map_or(0, |s| s.len()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DisturbanceModel::Gaussian { mean, cov } => {
                check_square("gaussian cov", cov, mean.len())?;
                require_psd("gaussian cov", cov)
            }
            DisturbanceModel::UniformBox { lo, hi } => {
                check_len("uniform hi", hi, lo.len())?;
                if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
                    return Err(WdrcError::InvalidInput(
                        "uniform box needs lo <= hi componentwise".into(),
                    ));
                }
                Ok(())
            }
            DisturbanceModel::Empirical { samples } => {
                if samples.is_empty() {
                    return Err(WdrcError::InvalidInput("empirical model has no samples".into()));
                }
                let n = samples[0].len();
                for s in samples {
                    check_len("empirical sample", s, n)?;
                }
                Ok(())
            }
        }
    }

    /// Exact first and second moments of the distribution.
    pub fn moments(&self) -> Result<NominalMoments> {
        match self {
            DisturbanceModel::Gaussian { mean, cov } => NominalMoments::new(mean.clone(), cov.clone()),
            DisturbanceModel::UniformBox { lo, hi } => {
                let mean = (lo + hi) * 0.5;
                let var = (hi - lo).map(|d| d * d / 12.0);
                NominalMoments::new(mean, Mat::from_diagonal(&var))
            }
            DisturbanceModel::Empirical { samples } => empirical_moments(samples),
        }
    }

    /// Precompute the sampling factor once for repeated draws.
    pub fn prepare(&self) -> Result<PreparedSampler> {
        self.validate()?;
        Ok(match self {
            DisturbanceModel::Gaussian { mean, cov } => PreparedSampler::Gaussian {
                mean: mean.clone(),
                factor: linalg::sqrtm_psd(cov),
            },
            DisturbanceModel::UniformBox { lo, hi } => PreparedSampler::Uniform {
                lo: lo.clone(),
                hi: hi.clone(),
            },
            DisturbanceModel::Empirical { samples } => PreparedSampler::Empirical {
                samples: samples.clone(),
            },
        })
    }
}

/// A [`DisturbanceModel`] with its square-root factor cached.
#[derive(Debug, Clone)]
pub enum PreparedSampler {
    Gaussian { mean: Vector, factor: Mat },
    Uniform { lo: Vector, hi: Vector },
    Empirical { samples: Vec<Vector> },
}

impl PreparedSampler {
    pub fn dim(&self) -> usize {
        match self {
            PreparedSampler::Gaussian { mean, .. } => mean.len(),
            PreparedSampler::Uniform { lo, .. } => lo.len(),
            PreparedSampler::Empirical { samples } => samples[0].len(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        match self {
            PreparedSampler::Gaussian { mean, factor } => {
                let z = Vector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                mean + factor * z
            }
            PreparedSampler::Uniform { lo, hi } => Vector::from_fn(lo.len(), |i, _| {
                let u: f64 = rng.random();
                lo[i] + (hi[i] - lo[i]) * u
            }),
            PreparedSampler::Empirical { samples } => {
                samples[rng.random_range(0..samples.len())].clone()
            }
        }
    }

    /// Gaussian draw with an explicit mean (used for the worst-case adversary,
    /// whose mean changes every step while the covariance factor is fixed).
    pub fn sample_shifted<R: Rng + ?Sized>(&self, mean: &Vector, rng: &mut R) -> Vector {
        match self {
            PreparedSampler::Gaussian { factor, .. } => {
                let z = Vector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                mean + factor * z
            }
            _ => mean + self.sample(rng),
        }
    }
}

/// One draw from `model` using the given stream.
pub fn sample_disturbance<R: Rng + ?Sized>(model: &DisturbanceModel, rng: &mut R) -> Result<Vector> {
    Ok(model.prepare()?.sample(rng))
}

/// Moments of the empirical (uniform Dirac mixture) measure, dividing by `N`.
pub fn empirical_moments(samples: &[Vector]) -> Result<NominalMoments> {
    let first = samples
        .first()
        .ok_or_else(|| WdrcError::InvalidInput("empirical_moments needs at least one sample".into()))?;
    let n = first.len();
    let count = samples.len() as f64;
    let mut mean = Vector::zeros(n);
    for s in samples {
        check_len("sample", s, n)?;
        mean += s;
    }
    mean /= count;
    let mut cov = Mat::zeros(n, n);
    for s in samples {
        let d = s - &mean;
        cov += &d * d.transpose();
    }
    cov /= count;
    linalg::symmetrize_in_place(&mut cov);
    Ok(NominalMoments {
        w_hat: mean,
        sigma_hat: cov,
    })
}

/// Continuous-time linearized swing-equation model of a generator network.
#[derive(Debug, Clone)]
pub struct PowerSystem {
    pub a_c: Mat,
    pub b_c: Mat,
    pub c: Mat,
    /// Placeholder weights (`Q = Qf = I`, `R = I`).
    pub weights: CostWeights,
}

impl PowerSystem {
    /// Zero-order-hold discretization plus noise and initial-state data.
    pub fn discretize(&self, dt: f64, m: Mat, m0: Vector, m0_cov: Mat) -> Result<LinearSystem> {
        let (a, b) = zoh_discretize(&self.a_c, &self.b_c, dt)?;
        LinearSystem::new(a, b, self.c.clone(), m, m0, m0_cov)
    }
}

/// State ordering is `[angles; frequencies]`; inputs act on the frequency rows.
pub fn build_power_system(
    inertia: &[f64],
    damping: &[f64],
    laplacian: &Mat,
    observed_gens: usize,
) -> Result<PowerSystem> {
    let n = inertia.len();
    if n == 0 {
        return Err(WdrcError::InvalidInput("at least one generator is required".into()));
    }
    if damping.len() != n {
        return Err(WdrcError::Dimension(format!(
            "damping has length {}, expected {n}",
            damping.len()
        )));
    }
    check_square("laplacian", laplacian, n)?;
    if inertia.iter().any(|&x| !(x > 0.0)) {
        return Err(WdrcError::InvalidInput("inertia must be strictly positive".into()));
    }
    if damping.iter().any(|&x| !(x > 0.0)) {
        return Err(WdrcError::InvalidInput("damping must be strictly positive".into()));
    }
    if linalg::asymmetry(laplacian) > 0.0 {
        return Err(WdrcError::InvalidInput("laplacian must be symmetric".into()));
    }
    for i in 0..n {
        let s: f64 = laplacian.row(i).sum();
        if s.abs() > 1e-10 {
            return Err(WdrcError::InvalidInput(format!(
                "laplacian row {i} sums to {s:e}, expected 0"
            )));
        }
    }
    if observed_gens > n {
        return Err(WdrcError::InvalidInput(format!(
            "observed_gens = {observed_gens} exceeds n_gen = {n}"
        )));
    }

    let mut a_c = Mat::zeros(2 * n, 2 * n);
    let mut b_c = Mat::zeros(2 * n, n);
    for i in 0..n {
        a_c[(i, n + i)] = 1.0;
        for j in 0..n {
            a_c[(n + i, j)] = -laplacian[(i, j)] / inertia[i];
        }
        a_c[(n + i, n + i)] = -damping[i] / inertia[i];
        b_c[(n + i, i)] = 1.0 / inertia[i];
    }
    let mut c = Mat::zeros(2 * observed_gens, 2 * n);
    for k in 0..observed_gens {
        c[(k, k)] = 1.0;
        c[(observed_gens + k, n + k)] = 1.0;
    }
    Ok(PowerSystem {
        a_c,
        b_c,
        c,
        weights: CostWeights::identity(2 * n, n),
    })
}

/// Unit-weight Laplacian of a ring over `n` nodes plus extra `chords`.
pub fn ring_laplacian(n: usize, chords: &[(usize, usize)]) -> Result<Mat> {
    let mut l = Mat::zeros(n, n);
    let mut add = |i: usize, j: usize| {
        if i != j && l[(i, j)] == 0.0 {
            l[(i, j)] = -1.0;
            l[(j, i)] = -1.0;
            l[(i, i)] += 1.0;
            l[(j, j)] += 1.0;
        }
    };
    if n >= 2 {
        for i in 0..n {
            add(i, (i + 1) % n);
        }
    }
    for &(i, j) in chords {
        if i >= n || j >= n {
            return Err(WdrcError::InvalidInput(format!("chord ({i}, {j}) out of range")));
        }
        add(i, j);
    }
    Ok(l)
}

/// The synthetic 10-generator benchmark grid: unit inertia and damping, ring
/// plus chords (0,5), (2,7), (4,9).
pub fn synthetic_grid(observed_gens: usize) -> Result<PowerSystem> {
    let n = 10;
    let lap = ring_laplacian(n, &[(0, 5), (2, 7), (4, 9)])?;
    build_power_system(&vec![1.0; n], &vec![1.0; n], &lap, observed_gens)
}

/// Zero-order-hold discretization via the exponential of `[[A, B], [0, 0]] dt`.
pub fn zoh_discretize(a_c: &Mat, b_c: &Mat, dt: f64) -> Result<(Mat, Mat)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(WdrcError::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let n = a_c.nrows();
    check_square("A_c", a_c, n)?;
    check_shape("B_c", b_c, n, b_c.ncols())?;
    let m = b_c.ncols();
    let mut aug = Mat::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a_c * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(b_c * dt));
    let e = linalg::expm(&aug);
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    ))
}

/// Random Gaussian whose moments lie within Gelbrich distance `theta` of
/// `nominal`.
///
/// The total radius `theta * U` is split between a mean shift of norm `m`
/// and a covariance move `T Σ̂ T` with `T = I + E` symmetric PSD, whose Bures
/// distance to `Σ̂` is `‖E Σ̂^{1/2}‖_F = b`, so that `m² + b² ≤ θ²`.
pub fn perturb_within_gelbrich_ball<R: Rng + ?Sized>(
    nominal: &NominalMoments,
    theta: f64,
    rng: &mut R,
) -> Result<DisturbanceModel> {
    if !(theta >= 0.0) {
        return Err(WdrcError::InvalidInput(format!("theta must be nonnegative, got {theta}")));
    }
    let n = nominal.dim();
    if theta == 0.0 || n == 0 {
        return Ok(DisturbanceModel::from_moments(nominal));
    }
    let radius = theta * rng.random::<f64>();
    let angle = std::f64::consts::FRAC_PI_2 * rng.random::<f64>();
    let mean_norm = radius * angle.cos();
    let bures = radius * angle.sin();

    let mut dir = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let dn = dir.norm();
    if dn > 0.0 {
        dir /= dn;
    }
    let shift = dir * mean_norm;

    let sigma_hat = &nominal.sigma_hat;
    let root = linalg::sqrtm_psd(sigma_hat);
    let mut e0 = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    e0 = linalg::symmetrize(&e0);
    let spread = (&e0 * &root).norm();

    let degenerate = sigma_hat.trace() <= 1e-14 || spread <= 1e-12 * root.norm();
    let cov_at = |scale: f64| -> Mat {
        if !degenerate {
            let t = Mat::identity(n, n) + &e0 * scale;
            linalg::symmetrize(&(&t * sigma_hat * &t))
        } else {
            // Degenerate nominal: a random PSD matrix with trace b^2 sits at
            // Bures distance b from zero.
            let g = &e0 * e0.transpose();
            let tr = g.trace();
            if tr > 0.0 {
                sigma_hat + g * (scale / tr)
            } else {
                sigma_hat.clone()
            }
        }
    };

    let mut scale = if !degenerate {
        let mut s = bures / spread;
        // keep I + sE positive semidefinite
        let lo = linalg::min_eigenvalue(&e0);
        if lo * s < -0.9 {
            s = 0.9 / (-lo);
        }
        s
    } else {
        bures * bures
    };
    let mut shift = shift;
    let target = (&nominal.w_hat, sigma_hat);
    for _ in 0..400 {
        let mean = &nominal.w_hat + &shift;
        let cov = cov_at(scale);
        let d = gelbrich_distance((&mean, &cov), (target.0, target.1))?;
        if d <= theta {
            return DisturbanceModel::gaussian(mean, cov);
        }
        shift *= 0.9;
        scale *= 0.9;
    }
    Ok(DisturbanceModel::from_moments(nominal))
}

fn require_symmetric(name: &str, m: &Mat) -> Result<()> {
    let tol = SYM_TOL * m.amax().max(1.0);
    if linalg::asymmetry(m) > tol {
        return Err(WdrcError::InvalidInput(format!("{name} must be symmetric")));
    }
    Ok(())
}

fn require_psd(name: &str, m: &Mat) -> Result<()> {
    require_symmetric(name, m)?;
    let tol = PSD_TOL * m.amax().max(1.0);
    if !linalg::is_psd(m, tol) {
        return Err(WdrcError::InvalidInput(format!(
            "{name} must be positive semidefinite (min eigenvalue {:e})",
            linalg::min_eigenvalue(m)
        )));
    }
    Ok(())
}
