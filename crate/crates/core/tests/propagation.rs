//! Propagation of mean and covariance against integration and sampling
//! oracles.

mod common;

use common::*;
use msceqf::filter::{
    clone_state, input_matrix_b, propagate, propagate_mean, process_noise_q, state_matrix_a,
    state_transition_phi, NoiseSpec,
};
use msceqf::symmetry::{phi, GravitySpec, Matrix25, Vector25};
use nalgebra::{DMatrix, SMatrix};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn mean_step_matches_rk4() {
    let grav = GravitySpec::default();
    let mut r = rng(10);
    for _ in 0..50 {
        let st = filter_state(&mut r);
        let u = input(&mut r, false);
        let dt = 5e-3;
        let x = propagate_mean(&st.xhat, &st.origin, &u, dt, &grav);
        let oracle = rk4(&MatState::from_state(&phi(&st.xhat, &st.origin)), |_| u, 0.0, dt, 50, &grav).to_state();
        let gap = state_gap(&phi(&x, &st.origin), &oracle);
        assert!(gap < 1e-7, "gap {gap:e}");
    }
}

#[test]
fn transition_semigroup_and_squaring_oracle() {
    let grav = GravitySpec::default();
    let mut r = rng(11);
    for _ in 0..20 {
        let st = filter_state(&mut r);
        let a = state_matrix_a(&st, &input(&mut r, false), &grav);
        let (d1, d2) = (0.004, 0.007);
        let p1 = state_transition_phi(&a, d1, 0);
        let p2 = state_transition_phi(&a, d2, 0);
        let p12 = state_transition_phi(&a, d1 + d2, 0);
        assert!((&p1 * &p2 - &p12).amax() < 1e-9);

        // (I + A dt / 2ⁿ)^(2ⁿ) by repeated squaring, second order corrected
        // by Richardson extrapolation between n and n + 1.
        let dt = 0.01;
        let square = |n: u32| {
            let mut m = Matrix25::identity() + a * (dt / 2f64.powi(n as i32));
            for _ in 0..n {
                m = m * m;
            }
            m
        };
        let oracle = square(25) * 2.0 - square(24);
        let phi_dense = state_transition_phi(&a, dt, 0);
        let got = Matrix25::from_iterator(phi_dense.iter().copied());
        assert!((got - oracle).amax() < 1e-8, "{:e}", (got - oracle).amax());
    }
}

#[test]
fn zero_noise_propagates_covariance_by_phi_only() {
    let grav = GravitySpec::default();
    let mut r = rng(12);
    let mut st = filter_state(&mut r);
    st.cov = spd(&mut r, 25, 1e-4, 1e-2);
    let st = clone_state(&st, 0.0).unwrap();
    let u = input(&mut r, false);
    let dt = 5e-3;
    let a = state_matrix_a(&st, &u, &grav);
    let next = propagate(&st, &u, dt, &NoiseSpec::zero(), &grav).unwrap();
    let phi = state_transition_phi(&a, dt, 1);
    let expect = &phi * &st.cov * phi.transpose();
    assert!((&next.cov - &expect).amax() < 1e-14 * expect.amax());
    // The clone does not move.
    assert_eq!(next.clones, st.clones);
}

#[test]
fn process_noise_matches_monte_carlo() {
    let grav = GravitySpec::default();
    let mut r = rng(13);
    let st = filter_state(&mut r);
    let u = input(&mut r, false);
    let noise = NoiseSpec::isotropic(0.05, 0.2, 0.01, 0.05, 1.0).unwrap();
    let dt = 5e-3;
    let a = state_matrix_a(&st, &u, &grav);
    let b = input_matrix_b(&st, &u);
    let q = process_noise_q(&msceqf::filter::expm(&(a * dt)), &b, &noise, dt);

    let sd = noise.qc().diagonal().map(|v| (v / dt).sqrt());
    let n = 10_000;
    let mut acc = SMatrix::<f64, 25, 25>::zeros();
    for _ in 0..n {
        let mut ut = u;
        let z: SMatrix<f64, 12, 1> = SMatrix::from_fn(|_, _| StandardNormal.sample(&mut r));
        let w = z.component_mul(&sd);
        for i in 0..6 {
            ut.w[i] -= w[i];
            ut.tau[i] = w[6 + i];
        }
        let e = error_flow(&st, &Vector25::zeros(), &ut, &u, dt);
        acc += e * e.transpose();
    }
    let sample = acc / n as f64;
    let rel = (sample - q).norm() / q.norm();
    assert!(rel < 0.1, "relative Frobenius gap {rel}");
}

#[test]
fn covariance_stays_psd_through_propagation() {
    let grav = GravitySpec::default();
    let mut r = rng(14);
    let mut st = filter_state(&mut r);
    st.cov = DMatrix::from_iterator(25, 25, msceqf::filter::initial_covariance(&st.origin, &Default::default()).iter().copied());
    for k in 0..200 {
        if k % 20 == 0 && st.clones.len() < 5 {
            st = clone_state(&st, k as f64).unwrap();
        }
        st = propagate(&st, &input(&mut r, false), r.random_range(1e-3..5e-3), &NoiseSpec::euroc(), &grav).unwrap();
        assert!(st.min_eigenvalue() >= -1e-10 * st.cov.amax());
        assert_eq!(st.cov, st.cov.transpose());
    }
}
