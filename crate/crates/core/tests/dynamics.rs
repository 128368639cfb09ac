//! The navigation system, its lift and its measurement model against
//! independent matrix-form oracles.

mod common;

use common::*;
use msceqf::lie::{Intrinsics, LieGroup, Se23, Se3, So3, Vector6};
use msceqf::symmetry::{lifted_dynamics, measurement_h, phi, system_dynamics, GravitySpec, Input, SymElement, SystemState};
use nalgebra::Vector3;

#[test]
fn system_dynamics_matches_matrix_product() {
    let grav = GravitySpec::default();
    let mut r = rng(1);
    for _ in 0..100 {
        let xi = state(&mut r);
        let u = input(&mut r, true);
        let x = MatState::from_state(&xi);
        let oracle = trivialized(&x, &eq1_rhs(&x, &u, &grav));
        let got = system_dynamics(&xi, &u, &grav);
        assert!((got - oracle).norm() < 1e-12 * oracle.norm().max(1.0), "{:e}", (got - oracle).norm());
    }
}

/// Smooth time-varying input for the co-integration check.
fn wavy_input(u0: Input, t: f64) -> Input {
    let mut u = u0;
    for i in 0..6 {
        u.w[i] += 0.3 * (1.7 * t + i as f64).sin();
        u.tau[i] += 0.01 * (0.9 * t + i as f64).cos();
        u.mu[i] += 0.05 * (1.3 * t - i as f64).sin();
    }
    for i in 0..4 {
        u.zeta[i] += 0.02 * (0.5 * t + i as f64).cos();
    }
    u
}

/// Commutator-free fourth order Lie group integrator for `X⁻¹Ẋ = F(t, X)`.
fn cf4(x0: &SymElement, f: impl Fn(f64, &SymElement) -> msceqf::symmetry::Vector25, t_end: f64, steps: usize) -> SymElement {
    let h = t_end / steps as f64;
    let e = |v: msceqf::symmetry::Vector25| SymElement::exp(&(v * h));
    let mut x = *x0;
    for k in 0..steps {
        let t = k as f64 * h;
        let f1 = f(t, &x);
        let x2 = x.compose(&e(f1 * 0.5));
        let f2 = f(t + h / 2.0, &x2);
        let x3 = x.compose(&e(f2 * 0.5));
        let f3 = f(t + h / 2.0, &x3);
        let x4 = x2.compose(&e(f3 - f1 * 0.5));
        let f4 = f(t + h, &x4);
        let first = f1 * (-1.0 / 12.0) + f2 / 6.0 + f3 / 6.0 + f4 * 0.25;
        let second = f1 * 0.25 + f2 / 6.0 + f3 / 6.0 + f4 * (-1.0 / 12.0);
        x = x.compose(&e(first)).compose(&e(second));
    }
    x
}

#[test]
fn lifted_flow_projects_onto_the_system() {
    let grav = GravitySpec::default();
    let mut r = rng(2);
    for _ in 0..5 {
        let origin = state(&mut r);
        let u0 = input(&mut r, true);
        let x = cf4(&SymElement::identity(), |t, x| lifted_dynamics(x, &wavy_input(u0, t), &origin, &grav), 1.0, 1000);
        let direct = rk4(&MatState::from_state(&origin), |t| wavy_input(u0, t), 0.0, 1.0, 1000, &grav).to_state();
        let gap = state_gap(&phi(&x, &origin), &direct);
        assert!(gap < 1e-5, "mismatch {gap:e}");
    }
}

#[test]
fn lift_at_identity_is_initial_velocity() {
    let grav = GravitySpec::default();
    let mut r = rng(3);
    let origin = state(&mut r);
    let u = input(&mut r, true);
    assert_eq!(lifted_dynamics(&SymElement::identity(), &u, &origin, &grav), msceqf::symmetry::lift(&origin, &u, &grav));
}

fn axis_state(k: Intrinsics) -> SystemState {
    SystemState { t: Se23::identity(), b: Vector6::zeros(), s: Se3::identity(), k }
}

#[test]
fn pinhole_projection_values() {
    let xi = axis_state(Intrinsics::new(400.0, 400.0, 320.0, 240.0).unwrap());
    let uv = measurement_h(&xi, &Vector3::new(0.0, 0.0, 2.0)).unwrap();
    assert!((uv - nalgebra::Vector2::new(320.0, 240.0)).norm() < 1e-12);
    let uv = measurement_h(&xi, &Vector3::new(1.0, 0.0, 2.0)).unwrap();
    assert!((uv - nalgebra::Vector2::new(520.0, 240.0)).norm() < 1e-12);
    assert!(measurement_h(&xi, &Vector3::new(0.0, 0.0, -2.0)).is_err());
}

#[test]
fn measurement_invariant_under_the_action() {
    // h(φ(X, ξ), p) for a world point agrees with projecting through the
    // matrices of the transformed state directly.
    let mut r = rng(4);
    for _ in 0..50 {
        let xi = state(&mut r);
        let cam = xi.t.theta().compose(&xi.s);
        let p = cam.act(&Vector3::new(r_range(&mut r), r_range(&mut r), 3.0));
        let uv = measurement_h(&xi, &p).unwrap();
        let q = cam.inverse().act(&p);
        let oracle = in_mat(&xi.k) * (q / q.z);
        assert!((uv - oracle.xy()).norm() < 1e-9);
    }
}

fn r_range(r: &mut rand_chacha::ChaCha8Rng) -> f64 {
    use rand::Rng;
    r.random_range(-1.0..1.0)
}

#[test]
fn stationary_level_state_stays_put() {
    let grav = GravitySpec::default();
    let xi = SystemState {
        t: Se23::new(So3::rot_z(0.4), Vector3::new(0.5, 0.0, 0.0), Vector3::new(1.0, 2.0, 3.0)),
        b: Vector6::zeros(),
        s: Se3::identity(),
        k: Intrinsics::new(400.0, 400.0, 320.0, 240.0).unwrap(),
    };
    // a = −g Rᵀe₃ cancels gravity, leaving ṗ = v and v̇ = 0.
    let acc = -(xi.t.rot.inverse().act(&grav.vector()));
    let d = system_dynamics(&xi, &Input::imu(Vector3::zeros(), acc), &grav);
    let body_acc = Vector3::new(d[3], d[4], d[5]);
    let body_vel = Vector3::new(d[6], d[7], d[8]);
    assert!(body_acc.norm() < 1e-12);
    assert!((xi.t.rot.act(&body_vel) - xi.t.a).norm() < 1e-12);
}
