mod common;

use common::*;
use rand::Rng;
use rand_distr::StandardNormal;
use wdrc::ambiguity;
use wdrc::estimator::{self, BeliefState, GainMode};
use wdrc::{linalg, Mat, Vector};

#[test]
fn update_is_contractive() {
    let mut r = rng(4);
    for _ in 0..200 {
        let inst = random_instance(r.random_range(1..=4), false, &mut r);
        let n = inst.sys.n_x();
        let prior = random_spd(n, 1.0, 0.0, &mut r);
        let (post, _) = estimator::posterior(&prior, &inst.sys).unwrap();
        assert!(linalg::min_eigenvalue(&(&prior - &post)) >= -1e-10);
        assert!(linalg::min_eigenvalue(&post) >= -1e-10);
    }
}

#[test]
fn steady_gain_identity() {
    for (inst, bundle) in admissible_instances(10, 4, false, 8) {
        let st = bundle.steady().unwrap();
        let direct = estimator::steady_gain(&st.x_bar, &inst.sys).unwrap();
        let (_, prior_form) = estimator::posterior(&st.x_bar_prior, &inst.sys).unwrap();
        assert!((direct - prior_form).amax() < 1e-9);
    }
}

#[test]
fn time_varying_recursion_reaches_filter_are() {
    let mut r = rng(12);
    let mut checked = 0;
    while checked < 10 {
        let inst = random_instance(r.random_range(1..=4), false, &mut r);
        let sigma = inst.nominal.sigma_hat.clone();
        let Ok(are) = ambiguity::solve_filter_are(&inst.sys, &sigma) else {
            continue;
        };
        let mut x = inst.sys.m0_cov.clone();
        for _ in 0..2000 {
            x = estimator::covariance_recursion(&x, &sigma, &inst.sys).unwrap();
        }
        assert!((&x - &are.x_post).amax() < 1e-8 * are.x_post.amax().max(1.0));
        checked += 1;
    }
}

#[test]
fn innovations_are_white_with_predicted_covariance() {
    // 2-state plant with Gaussian disturbances matching the filter model.
    let mut r = rng(99);
    let a = Mat::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.7]);
    let c = Mat::from_row_slice(1, 2, &[1.0, 0.5]);
    let m = s(0.4);
    let sys = wdrc::model::LinearSystem::new(a, Mat::zeros(2, 1), c, m, Vector::zeros(2), Mat::identity(2, 2)).unwrap();
    let sigma = Mat::from_row_slice(2, 2, &[0.3, 0.05, 0.05, 0.2]);
    let are = ambiguity::solve_filter_are(&sys, &sigma).unwrap();
    let predicted = (&sys.c * &are.x_prior * sys.c.transpose() + &sys.m)[(0, 0)];
    let mode = GainMode::steady(are.x_post.clone(), &sys).unwrap();
    let w_factor = linalg::sqrtm_psd(&sigma);
    let noise_sd = sys.m[(0, 0)].sqrt();
    let normal2 = |r: &mut rand_chacha::ChaCha8Rng| Vector::from_fn(2, |_, _| r.sample::<f64, _>(StandardNormal));

    // start from the stationary error covariance
    let mut x = linalg::sqrtm_psd(&are.x_post) * normal2(&mut r);
    let mut belief = BeliefState {
        x_bar: Vector::zeros(2),
        x_cov: are.x_post.clone(),
    };
    let u = Vector::zeros(1);
    let w_bar = Vector::zeros(2);
    let steps = 100_000;
    let (mut sum, mut sum_sq, mut lag) = (0.0, 0.0, 0.0);
    let mut prev = 0.0;
    for _ in 0..steps {
        x = &sys.a * &x + &w_factor * normal2(&mut r);
        let y = &sys.c * &x + Vector::from_element(1, noise_sd * r.sample::<f64, _>(StandardNormal));
        let innovation = (&y - &sys.c * (&sys.a * &belief.x_bar))[0];
        belief = estimator::filter_step(&belief, &u, &w_bar, &y, &sys, &mode).unwrap();
        sum += innovation;
        sum_sq += innovation * innovation;
        lag += innovation * prev;
        prev = innovation;
    }
    let n = steps as f64;
    let mean = sum / n;
    let var = sum_sq / n - mean * mean;
    let se_mean = (predicted / n).sqrt();
    // variance of a sample variance of Gaussians is 2σ⁴/n
    let se_var = (2.0 * predicted * predicted / n).sqrt();
    assert!(mean.abs() < 3.0 * se_mean, "mean {mean}, se {se_mean}");
    assert!((var - predicted).abs() < 3.0 * se_var, "var {var}, predicted {predicted}");
    assert!((lag / n).abs() < 3.0 * predicted / n.sqrt(), "lag-1 autocovariance {}", lag / n);
}
