#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wdrc::design::{self, PolicyBundle};
use wdrc::model::{CostWeights, LinearSystem, NominalMoments};
use wdrc::{Mat, Vector};

pub fn s(x: f64) -> Mat {
    Mat::from_element(1, 1, x)
}

pub fn v1(x: f64) -> Vector {
    Vector::from_element(1, x)
}

pub fn scalar_system(a: f64, b: f64, c: f64, m: f64) -> LinearSystem {
    LinearSystem::new(s(a), s(b), s(c), s(m), Vector::zeros(1), s(0.0)).unwrap()
}

pub fn unit_weights() -> CostWeights {
    CostWeights::new(s(1.0), s(1.0), s(1.0)).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_mat(r: usize, c: usize, scale: f64, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(r, c, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_vec(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// `G Gᵀ + floor·I`.
pub fn random_spd(n: usize, scale: f64, floor: f64, rng: &mut ChaCha8Rng) -> Mat {
    let g = gaussian_mat(n, n, scale, rng);
    &g * g.transpose() + Mat::identity(n, n) * floor
}

/// A random plant, weights and nominal moments with the requested state
/// dimension. `n_u = n_x` so that `Φ ⪰ 0` is reachable.
pub struct RandomInstance {
    pub sys: LinearSystem,
    pub weights: CostWeights,
    pub nominal: NominalMoments,
}

pub fn random_instance(n: usize, with_mean: bool, rng: &mut ChaCha8Rng) -> RandomInstance {
    let n_y = rng.random_range(1..=n);
    let a = gaussian_mat(n, n, 0.6 / (n as f64).sqrt(), rng);
    let b = gaussian_mat(n, n, 0.5, rng) + Mat::identity(n, n);
    let c = gaussian_mat(n_y, n, 1.0, rng);
    let m = random_spd(n_y, 0.3, 0.2, rng);
    let sys = LinearSystem::new(a, b, c, m, gaussian_vec(n, 1.0, rng), random_spd(n, 0.3, 0.05, rng)).unwrap();
    let q = random_spd(n, 0.5, 0.2, rng);
    let weights = CostWeights::new(q.clone(), q, random_spd(n, 0.3, 0.5, rng)).unwrap();
    let w_hat = if with_mean {
        gaussian_vec(n, 0.2, rng)
    } else {
        Vector::zeros(n)
    };
    let nominal = NominalMoments::new(w_hat, random_spd(n, 0.3, 0.05, rng)).unwrap();
    RandomInstance { sys, weights, nominal }
}

/// Design at the first admissible λ in `start, 2·start, 4·start, …`.
pub fn design_admissible(inst: &RandomInstance, start: f64) -> (f64, PolicyBundle) {
    let mut lambda = start;
    for _ in 0..30 {
        if let Ok(b) = design::design_wdrc(&inst.sys, &inst.weights, &inst.nominal, lambda) {
            return (lambda, b);
        }
        lambda *= 2.0;
    }
    panic!("no admissible lambda found");
}

/// Random admissible instances with their WDRC bundles. Instances whose
/// design fails at every tried λ are redrawn.
pub fn admissible_instances(count: usize, max_n: usize, with_mean: bool, seed: u64) -> Vec<(RandomInstance, PolicyBundle)> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let n = r.random_range(1..=max_n);
        let inst = random_instance(n, with_mean, &mut r);
        let lqg = match design::design_lqg(&inst.sys, &inst.weights, &inst.nominal) {
            Ok(b) => b,
            Err(_) => continue,
        };
        let start = 2.0 * wdrc::linalg::max_eigenvalue(&lqg.p).max(1.0);
        let (_, bundle) = design_admissible(&inst, start);
        out.push((inst, bundle));
    }
    out
}

/// Denman–Beavers square root of a symmetric positive definite matrix.
pub fn sqrtm_denman_beavers(a: &Mat) -> Mat {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = Mat::identity(n, n);
    for _ in 0..100 {
        let y_inv = y.clone().try_inverse().expect("invertible iterate");
        let z_inv = z.clone().try_inverse().expect("invertible iterate");
        let y_next = (&y + z_inv) * 0.5;
        let z_next = (&z + y_inv) * 0.5;
        let change = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if change < 1e-15 * y.norm() {
            break;
        }
    }
    (&y + y.transpose()) * 0.5
}

pub fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
    assert!((got - want).abs() <= tol, "{what}: got {got}, want {want} (tol {tol})");
}
