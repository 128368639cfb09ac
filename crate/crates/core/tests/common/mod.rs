//! Independent oracles shared by the integration tests: random samplers,
//! matrix representations, an RK4 integrator of the navigation system in
//! plain 5x5 matrix form, and finite-difference helpers.
#![allow(dead_code)]

use msceqf::filter::FilterState;
use msceqf::lie::{Intrinsics, LieGroup, SdElement, Se23, Se3, So3, Vector4, Vector6, Vector9};
use msceqf::symmetry::{GravitySpec, Input, SymElement, SystemState};
use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, SMatrix, SVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Matrix5 = SMatrix<f64, 5, 5>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform<const N: usize>(rng: &mut ChaCha8Rng, scale: f64) -> SVector<f64, N> {
    SVector::<f64, N>::from_fn(|_, _| rng.random_range(-scale..=scale))
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn unskew(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rotation from a uniformly random axis-angle with angle below `max_angle`.
/// Built with nalgebra's own Rodrigues formula.
pub fn rotation(rng: &mut ChaCha8Rng, max_angle: f64) -> Matrix3<f64> {
    let axis = nalgebra::Unit::new_normalize(uniform::<3>(rng, 1.0) + Vector3::new(1e-9, 0.0, 0.0));
    let angle = rng.random_range(0.0..max_angle);
    *nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix()
}

pub fn so3(rng: &mut ChaCha8Rng) -> So3 {
    So3::from_matrix_unchecked(rotation(rng, 3.0))
}

pub fn se3(rng: &mut ChaCha8Rng) -> Se3 {
    Se3::new(so3(rng), uniform::<3>(rng, 1.0))
}

pub fn se23(rng: &mut ChaCha8Rng) -> Se23 {
    Se23::new(so3(rng), uniform::<3>(rng, 1.0), uniform::<3>(rng, 1.0))
}

pub fn intrinsics(rng: &mut ChaCha8Rng) -> Intrinsics {
    Intrinsics::new(
        rng.random_range(0.5..2.0),
        rng.random_range(0.5..2.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
    .unwrap()
}

pub fn camera_intrinsics(rng: &mut ChaCha8Rng) -> Intrinsics {
    Intrinsics::new(
        rng.random_range(300.0..500.0),
        rng.random_range(300.0..500.0),
        rng.random_range(280.0..360.0),
        rng.random_range(200.0..280.0),
    )
    .unwrap()
}

pub fn sd(rng: &mut ChaCha8Rng) -> SdElement {
    SdElement::new(se23(rng), uniform::<6>(rng, 1.0))
}

pub fn sym(rng: &mut ChaCha8Rng) -> SymElement {
    SymElement { sd: sd(rng), e: se3(rng), l: intrinsics(rng) }
}

pub fn state(rng: &mut ChaCha8Rng) -> SystemState {
    SystemState {
        t: Se23::new(so3(rng), uniform::<3>(rng, 2.0), uniform::<3>(rng, 3.0)),
        b: uniform::<6>(rng, 0.1),
        s: se3(rng),
        k: camera_intrinsics(rng),
    }
}

/// IMU-like input; with `full` the bias and calibration drives are nonzero.
pub fn input(rng: &mut ChaCha8Rng, full: bool) -> Input {
    let mut u = Input::imu(uniform::<3>(rng, 1.0), uniform::<3>(rng, 3.0) + Vector3::new(0.0, 0.0, 9.81));
    if full {
        u.tau = uniform::<6>(rng, 0.1);
        u.mu = uniform::<6>(rng, 0.1);
        u.zeta = uniform::<4>(rng, 0.1);
    }
    u
}

/// A random tangent with its rotational part's norm scaled below `max_rot`.
pub fn tangent9(rng: &mut ChaCha8Rng, max_rot: f64) -> Vector9 {
    let mut u = uniform::<9>(rng, 1.0);
    let w = u.fixed_rows::<3>(0).into_owned();
    let target = rng.random_range(0.0..max_rot);
    u.fixed_rows_mut::<3>(0).copy_from(&(w.normalize() * target));
    u
}

// ---------------------------------------------------------------------------
// Matrix representations

pub fn se3_hat(u: &Vector6) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&u.fixed_rows::<3>(0).into_owned()));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&u.fixed_rows::<3>(3));
    m
}

pub fn se3_vee(m: &Matrix4<f64>) -> Vector6 {
    let w = unskew(&m.fixed_view::<3, 3>(0, 0).into_owned());
    Vector6::new(w.x, w.y, w.z, m[(0, 3)], m[(1, 3)], m[(2, 3)])
}

pub fn se23_hat(u: &Vector9) -> Matrix5 {
    let mut m = Matrix5::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&u.fixed_rows::<3>(0).into_owned()));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&u.fixed_rows::<3>(3));
    m.fixed_view_mut::<3, 1>(0, 4).copy_from(&u.fixed_rows::<3>(6));
    m
}

pub fn se23_vee(m: &Matrix5) -> Vector9 {
    let w = unskew(&m.fixed_view::<3, 3>(0, 0).into_owned());
    let mut u = Vector9::zeros();
    u.fixed_rows_mut::<3>(0).copy_from(&w);
    u.fixed_rows_mut::<3>(3).copy_from(&m.fixed_view::<3, 1>(0, 3));
    u.fixed_rows_mut::<3>(6).copy_from(&m.fixed_view::<3, 1>(0, 4));
    u
}

pub fn in_hat(u: &Vector4) -> Matrix3<f64> {
    Matrix3::new(u[0], 0.0, u[2], 0.0, u[1], u[3], 0.0, 0.0, 0.0)
}

pub fn in_vee(m: &Matrix3<f64>) -> Vector4 {
    Vector4::new(m[(0, 0)], m[(1, 1)], m[(0, 2)], m[(1, 2)])
}

pub fn se3_mat(x: &Se3) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(x.rot.matrix());
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&x.trans);
    m
}

pub fn se23_mat(x: &Se23) -> Matrix5 {
    let mut m = Matrix5::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(x.rot.matrix());
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&x.a);
    m.fixed_view_mut::<3, 1>(0, 4).copy_from(&x.b);
    m
}

pub fn mat_se3(m: &Matrix4<f64>) -> Se3 {
    Se3::new(So3::from_matrix_unchecked(m.fixed_view::<3, 3>(0, 0).into_owned()), m.fixed_view::<3, 1>(0, 3).into_owned())
}

pub fn mat_se23(m: &Matrix5) -> Se23 {
    Se23::new(
        So3::from_matrix_unchecked(m.fixed_view::<3, 3>(0, 0).into_owned()),
        m.fixed_view::<3, 1>(0, 3).into_owned(),
        m.fixed_view::<3, 1>(0, 4).into_owned(),
    )
}

pub fn in_mat(k: &Intrinsics) -> Matrix3<f64> {
    Matrix3::new(k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0)
}

pub fn mat_in(m: &Matrix3<f64>) -> Intrinsics {
    Intrinsics::new(m[(0, 0)], m[(1, 1)], m[(0, 2)], m[(1, 2)]).unwrap()
}

/// SE(3) Adjoint in `(ω, v)` order from the block formula.
pub fn se3_adjoint(x: &Se3) -> SMatrix<f64, 6, 6> {
    let r = *x.rot.matrix();
    let mut m = SMatrix::<f64, 6, 6>::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(skew(&x.trans) * r));
    m
}

/// Largest absolute difference of two element-wise comparable matrices.
pub fn max_abs<R: nalgebra::Dim, C: nalgebra::Dim, S1, S2>(
    a: &nalgebra::Matrix<f64, R, C, S1>,
    b: &nalgebra::Matrix<f64, R, C, S2>,
) -> f64
where
    S1: nalgebra::storage::Storage<f64, R, C>,
    S2: nalgebra::storage::Storage<f64, R, C>,
{
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn state_gap(a: &SystemState, b: &SystemState) -> f64 {
    max_abs(&se23_mat(&a.t), &se23_mat(&b.t))
        .max(max_abs(&a.b, &b.b))
        .max(max_abs(&se3_mat(&a.s), &se3_mat(&b.s)))
        .max(max_abs(&in_mat(&a.k), &in_mat(&b.k)))
}

pub fn sd_gap(a: &SdElement, b: &SdElement) -> f64 {
    max_abs(&se23_mat(&a.d), &se23_mat(&b.d)).max(max_abs(&a.delta, &b.delta))
}

pub fn sym_gap(a: &SymElement, b: &SymElement) -> f64 {
    sd_gap(&a.sd, &b.sd)
        .max(max_abs(&se3_mat(&a.e), &se3_mat(&b.e)))
        .max(max_abs(&in_mat(&a.l), &in_mat(&b.l)))
}

// ---------------------------------------------------------------------------
// Navigation system in matrix form, independent of the library's dynamics

/// `(T, b, S, K)` as plain matrices.
#[derive(Debug, Clone, Copy)]
pub struct MatState {
    pub t: Matrix5,
    pub b: Vector6,
    pub s: Matrix4<f64>,
    pub k: Matrix3<f64>,
}

impl MatState {
    pub fn from_state(x: &SystemState) -> Self {
        Self { t: se23_mat(&x.t), b: x.b, s: se3_mat(&x.s), k: in_mat(&x.k) }
    }

    /// Back to a state, re-orthonormalizing the rotations by SVD.
    pub fn to_state(&self) -> SystemState {
        let mut t = mat_se23(&self.t);
        t.rot = So3::from_matrix_unchecked(nearest_rotation(&self.t.fixed_view::<3, 3>(0, 0).into_owned()));
        let mut s = mat_se3(&self.s);
        s.rot = So3::from_matrix_unchecked(nearest_rotation(&self.s.fixed_view::<3, 3>(0, 0).into_owned()));
        SystemState { t, b: self.b, s, k: mat_in(&self.k) }
    }

    fn axpy(&self, h: f64, d: &MatState) -> MatState {
        MatState { t: self.t + d.t * h, b: self.b + d.b * h, s: self.s + d.s * h, k: self.k + d.k * h }
    }
}

pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut d = Matrix3::identity();
        d[(2, 2)] = -1.0;
        r = u * d * vt;
    }
    r
}

/// Right-hand side of the navigation system:
/// `Ṫ = T(W − B + D) + (G − D)T`, `ḃ = τ`, `Ṡ = S μ∧`, `K̇ = K ζ∧`.
pub fn eq1_rhs(x: &MatState, u: &Input, grav: &GravitySpec) -> MatState {
    let mut w = Matrix5::zeros();
    w.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&u.w.fixed_rows::<3>(0).into_owned()));
    w.fixed_view_mut::<3, 1>(0, 3).copy_from(&u.w.fixed_rows::<3>(3));
    let mut bm = Matrix5::zeros();
    bm.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&x.b.fixed_rows::<3>(0).into_owned()));
    bm.fixed_view_mut::<3, 1>(0, 3).copy_from(&x.b.fixed_rows::<3>(3));
    let mut d = Matrix5::zeros();
    d[(3, 4)] = 1.0;
    let mut g = Matrix5::zeros();
    g.fixed_view_mut::<3, 1>(0, 3).copy_from(&(grav.e3 * grav.g));
    MatState {
        t: x.t * (w - bm + d) + (g - d) * x.t,
        b: u.tau,
        s: x.s * se3_hat(&u.mu),
        k: x.k * in_hat(&u.zeta),
    }
}

/// Classical RK4 with an input that may vary in time; `dt` may be negative.
pub fn rk4(x0: &MatState, u: impl Fn(f64) -> Input, t0: f64, dt: f64, steps: usize, grav: &GravitySpec) -> MatState {
    let h = dt / steps as f64;
    let mut x = *x0;
    for i in 0..steps {
        let t = t0 + h * i as f64;
        let k1 = eq1_rhs(&x, &u(t), grav);
        let k2 = eq1_rhs(&x.axpy(h / 2.0, &k1), &u(t + h / 2.0), grav);
        let k3 = eq1_rhs(&x.axpy(h / 2.0, &k2), &u(t + h / 2.0), grav);
        let k4 = eq1_rhs(&x.axpy(h, &k3), &u(t + h), grav);
        x = MatState {
            t: x.t + (k1.t + k2.t * 2.0 + k3.t * 2.0 + k4.t) * (h / 6.0),
            b: x.b + (k1.b + k2.b * 2.0 + k3.b * 2.0 + k4.b) * (h / 6.0),
            s: x.s + (k1.s + k2.s * 2.0 + k3.s * 2.0 + k4.s) * (h / 6.0),
            k: x.k + (k1.k + k2.k * 2.0 + k3.k * 2.0 + k4.k) * (h / 6.0),
        };
    }
    x
}

/// Left-trivialized state derivative `(T⁻¹Ṫ, ḃ, S⁻¹Ṡ, K⁻¹K̇)` as 25 numbers.
pub fn trivialized(x: &MatState, d: &MatState) -> SVector<f64, 25> {
    let mut out = SVector::<f64, 25>::zeros();
    out.fixed_rows_mut::<9>(0).copy_from(&se23_vee(&(x.t.try_inverse().unwrap() * d.t)));
    out.fixed_rows_mut::<6>(9).copy_from(&d.b);
    out.fixed_rows_mut::<6>(15).copy_from(&se3_vee(&(x.s.try_inverse().unwrap() * d.s)));
    out.fixed_rows_mut::<4>(21).copy_from(&in_vee(&(x.k.try_inverse().unwrap() * d.k)));
    out
}

// ---------------------------------------------------------------------------
// Full error vector including clones

/// Core normal coordinates followed by `log(E_i Ê_i⁻¹)` for every clone.
pub fn full_error(st: &FilterState, truth: &SystemState, true_clones: &[Se3]) -> DVector<f64> {
    let core = msceqf::filter::normal_coords(st, truth).unwrap();
    let mut out = DVector::zeros(st.dim());
    out.rows_mut(0, 25).copy_from(&core);
    for (i, c) in st.clones.iter().enumerate() {
        let e = true_clones[i].compose(&c.e.inverse()).log().unwrap();
        out.rows_mut(25 + 6 * i, 6).copy_from(&e);
    }
    out
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Error after flowing truth and estimate for `dt` (either sign) from the
/// error `eps0`, the truth driven by `u_true` and the estimate by `u`.
pub fn error_flow(st: &FilterState, eps0: &SVector<f64, 25>, u_true: &Input, u: &Input, dt: f64) -> SVector<f64, 25> {
    let grav = GravitySpec::default();
    let truth = msceqf::symmetry::phi(&SymElement::exp(eps0).compose(&st.xhat), &st.origin);
    let est = msceqf::symmetry::phi(&st.xhat, &st.origin);
    let truth_t = rk4(&MatState::from_state(&truth), |_| *u_true, 0.0, dt, 4, &grav).to_state();
    let est_t = rk4(&MatState::from_state(&est), |_| *u, 0.0, dt, 4, &grav).to_state();
    let mut st_t = st.clone();
    st_t.xhat = msceqf::symmetry::solve_group_element(&st.origin, &est_t);
    msceqf::filter::normal_coords(&st_t, &truth_t).unwrap()
}

/// Filter state with a random origin, a random `X̂` and unit covariance.
pub fn filter_state(rng: &mut ChaCha8Rng) -> FilterState {
    let origin = state(rng);
    let mut st = FilterState::new(origin, SMatrix::<f64, 25, 25>::identity(), 0.0).unwrap();
    st.xhat = SymElement::exp(&uniform::<25>(rng, 0.3));
    st
}

/// Random symmetric positive definite matrix with eigenvalues in `[lo, lo + scale]`.
pub fn spd(rng: &mut ChaCha8Rng, n: usize, lo: f64, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let m = &a * a.transpose() * (scale / n as f64) + DMatrix::identity(n, n) * lo;
    (&m + m.transpose()) * 0.5
}
