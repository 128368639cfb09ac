//! The visual-inertial system, its symmetry group and the lift.
//!
//! State `ξ = (T, b, S, K)`: extended pose, IMU biases `(b_ω, b_a)`, camera
//! extrinsics (pose of the camera in the IMU frame) and pinhole intrinsics.
//! The symmetry group is `G = (SE₂(3) ⋉ se(3)) × SE(3) × IN` acting on the
//! right through [`phi`].

use std::ops::Mul;

use nalgebra::{SMatrix, SVector, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::lie::{
    pi_big, pi_z1, skew, upsilon, Intrinsics, LieGroup, Matrix5, SdElement, Se23, Se3, Vector15, Vector4,
    Vector6, Vector9,
};

pub type Vector25 = SVector<f64, 25>;
pub type Matrix25 = SMatrix<f64, 25, 25>;

/// Offsets of the blocks of a 25-dimensional error or tangent vector.
pub mod idx {
    pub const ROT: usize = 0;
    pub const VEL: usize = 3;
    pub const POS: usize = 6;
    pub const BIAS_W: usize = 9;
    pub const BIAS_A: usize = 12;
    pub const EXTR: usize = 15;
    pub const INTR: usize = 21;
    pub const CORE: usize = 25;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GravitySpec {
    /// Magnitude [m/s²].
    pub g: f64,
    /// Direction of gravity in the global frame.
    pub e3: Vector3<f64>,
}

impl GravitySpec {
    pub fn new(g: f64, e3: Vector3<f64>) -> Result<Self> {
        if (e3.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "gravity direction must be a unit vector, |e3| = {}",
                e3.norm()
            )));
        }
        if !(g.is_finite() && g >= 0.0) {
            return Err(Error::InvalidArgument(format!("gravity magnitude {g} m/s² is invalid")));
        }
        Ok(Self { g, e3 })
    }

    /// `g e₃` [m/s²].
    pub fn vector(&self) -> Vector3<f64> {
        self.e3 * self.g
    }
}

impl Default for GravitySpec {
    /// 9.81 m/s² pointing down in a z-up world.
    fn default() -> Self {
        Self { g: 9.81, e3: Vector3::new(0.0, 0.0, -1.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemState {
    /// Extended pose `(R, v, p)`.
    pub t: Se23,
    /// `(b_ω [rad/s], b_a [m/s²])`.
    pub b: Vector6,
    /// Camera pose in the IMU frame.
    pub s: Se3,
    pub k: Intrinsics,
}

impl SystemState {
    /// IMU pose `P = (R, p)`.
    pub fn pose(&self) -> Se3 {
        self.t.theta()
    }

    /// Camera pose in the global frame, `P S`.
    pub fn camera_pose(&self) -> Se3 {
        self.pose() * self.s
    }
}

/// System input. `tau`, `mu` and `zeta` drive the bias and calibration states
/// and vanish when those are modeled as constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Input {
    /// `(ω [rad/s], a [m/s²])`.
    pub w: Vector6,
    pub tau: Vector6,
    pub mu: Vector6,
    pub zeta: Vector4,
}

impl Input {
    pub fn imu(omega: Vector3<f64>, acc: Vector3<f64>) -> Self {
        let mut w = Vector6::zeros();
        w.fixed_rows_mut::<3>(0).copy_from(&omega);
        w.fixed_rows_mut::<3>(3).copy_from(&acc);
        Self { w, tau: Vector6::zeros(), mu: Vector6::zeros(), zeta: Vector4::zeros() }
    }

    pub fn omega(&self) -> Vector3<f64> {
        self.w.fixed_rows::<3>(0).into_owned()
    }

    pub fn acc(&self) -> Vector3<f64> {
        self.w.fixed_rows::<3>(3).into_owned()
    }

    pub fn is_sensor_input(&self) -> bool {
        self.tau == Vector6::zeros() && self.mu == Vector6::zeros() && self.zeta == Vector4::zeros()
    }
}

/// Element `((D, δ), E, L)` of the symmetry group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymElement {
    pub sd: SdElement,
    pub e: Se3,
    pub l: Intrinsics,
}

impl SymElement {
    pub fn d(&self) -> &Se23 {
        &self.sd.d
    }

    /// `B = χ(D)`.
    pub fn b_sub(&self) -> Se3 {
        self.sd.d.chi()
    }

    /// `C = Θ(D)`.
    pub fn c_sub(&self) -> Se3 {
        self.sd.d.theta()
    }
}

fn split25(u: &Vector25) -> (Vector15, Vector6, Vector4) {
    (
        u.fixed_rows::<15>(0).into_owned(),
        u.fixed_rows::<6>(15).into_owned(),
        u.fixed_rows::<4>(21).into_owned(),
    )
}

fn join25(a: &Vector15, b: &Vector6, c: &Vector4) -> Vector25 {
    let mut u = Vector25::zeros();
    u.fixed_rows_mut::<15>(0).copy_from(a);
    u.fixed_rows_mut::<6>(15).copy_from(b);
    u.fixed_rows_mut::<4>(21).copy_from(c);
    u
}

impl LieGroup<25> for SymElement {
    fn identity() -> Self {
        Self { sd: SdElement::identity(), e: Se3::identity(), l: Intrinsics::identity() }
    }

    fn compose(&self, o: &Self) -> Self {
        Self { sd: self.sd.compose(&o.sd), e: self.e.compose(&o.e), l: self.l.compose(&o.l) }
    }

    fn inverse(&self) -> Self {
        Self { sd: self.sd.inverse(), e: self.e.inverse(), l: self.l.inverse() }
    }

    fn exp(u: &Vector25) -> Self {
        let (a, b, c) = split25(u);
        Self { sd: SdElement::exp(&a), e: Se3::exp(&b), l: Intrinsics::exp(&c) }
    }

    fn log(&self) -> Result<Vector25> {
        Ok(join25(&self.sd.log()?, &self.e.log()?, &self.l.log()?))
    }

    fn adjoint(&self) -> Matrix25 {
        let mut m = Matrix25::zeros();
        m.fixed_view_mut::<15, 15>(0, 0).copy_from(&self.sd.adjoint());
        m.fixed_view_mut::<6, 6>(15, 15).copy_from(&self.e.adjoint());
        m.fixed_view_mut::<4, 4>(21, 21).copy_from(&self.l.adjoint());
        m
    }

    fn ad(u: &Vector25) -> Matrix25 {
        let (a, b, c) = split25(u);
        let mut m = Matrix25::zeros();
        m.fixed_view_mut::<15, 15>(0, 0).copy_from(&SdElement::ad(&a));
        m.fixed_view_mut::<6, 6>(15, 15).copy_from(&Se3::ad(&b));
        m.fixed_view_mut::<4, 4>(21, 21).copy_from(&Intrinsics::ad(&c));
        m
    }

    fn distance(&self, o: &Self) -> f64 {
        self.sd.distance(&o.sd).max(self.e.distance(&o.e)).max(self.l.distance(&o.l))
    }
}

impl Mul for SymElement {
    type Output = SymElement;
    fn mul(self, rhs: SymElement) -> SymElement {
        self.compose(&rhs)
    }
}

/// The 5x5 matrices `W`, `B`, `D`, `G` of the navigation dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynMatrices {
    pub w_mat: Matrix5,
    pub b_mat: Matrix5,
    pub d_mat: Matrix5,
    pub g_mat: Matrix5,
}

fn input_like_matrix(omega: &Vector3<f64>, acc: &Vector3<f64>) -> Matrix5 {
    let mut m = Matrix5::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(omega));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(acc);
    m
}

pub fn build_dyn_matrices(xi: &SystemState, u: &Input, grav: &GravitySpec) -> DynMatrices {
    let mut d_mat = Matrix5::zeros();
    d_mat[(3, 4)] = 1.0;
    let mut g_mat = Matrix5::zeros();
    g_mat.fixed_view_mut::<3, 1>(0, 3).copy_from(&grav.vector());
    DynMatrices {
        w_mat: input_like_matrix(&u.omega(), &u.acc()),
        b_mat: input_like_matrix(
            &xi.b.fixed_rows::<3>(0).into_owned(),
            &xi.b.fixed_rows::<3>(3).into_owned(),
        ),
        d_mat,
        g_mat,
    }
}

/// `(T⁻¹Ṫ, ḃ, S⁻¹Ṡ, K⁻¹K̇)` with `Ṫ = T(W − B + D) + (G − D)T`.
pub fn system_dynamics(xi: &SystemState, u: &Input, grav: &GravitySpec) -> Vector25 {
    let m = build_dyn_matrices(xi, u, grav);
    let t = xi.t.matrix();
    let t_dot = t * (m.w_mat - m.b_mat + m.d_mat) + (m.g_mat - m.d_mat) * t;
    let body = xi.t.inverse().matrix() * t_dot;
    let mut out = Vector25::zeros();
    out.fixed_rows_mut::<9>(0).copy_from(&Se23::vee(&body));
    out.fixed_rows_mut::<6>(9).copy_from(&u.tau);
    out.fixed_rows_mut::<6>(15).copy_from(&u.mu);
    out.fixed_rows_mut::<4>(21).copy_from(&u.zeta);
    out
}

/// Right action `φ(X, ξ) = (T D, Ad_{B⁻¹}(b − δ), C⁻¹ S E, K L)`.
pub fn phi(x: &SymElement, xi: &SystemState) -> SystemState {
    SystemState {
        t: xi.t.compose(x.d()),
        b: x.b_sub().inverse().adjoint() * (xi.b - x.sd.delta),
        s: x.c_sub().inverse().compose(&xi.s).compose(&x.e),
        k: xi.k.compose(&x.l),
    }
}

/// The unique `X` with `φ(X, from) = to`.
pub fn solve_group_element(from: &SystemState, to: &SystemState) -> SymElement {
    let d = from.t.inverse().compose(&to.t);
    let delta = from.b - d.chi().adjoint() * to.b;
    let e = from.s.inverse().compose(&d.theta()).compose(&to.s);
    let l = from.k.inverse().compose(&to.k);
    SymElement { sd: SdElement::new(d, delta), e, l }
}

/// `Λ₁` in vee form: `(ω − b_ω, a − b_a + g Rᵀe₃, Rᵀv)`.
///
/// This is the closed form of `(W − B + D) + T⁻¹(G − D)T`; the `D` entries
/// cancel so the sum lies in se₂(3).
fn lift_nav(xi: &SystemState, w: &Vector6, grav: &GravitySpec) -> Vector9 {
    let rt = xi.t.rot.inverse();
    let mut l1 = Vector9::zeros();
    l1.fixed_rows_mut::<3>(0)
        .copy_from(&(w.fixed_rows::<3>(0) - xi.b.fixed_rows::<3>(0)));
    l1.fixed_rows_mut::<3>(3).copy_from(
        &(w.fixed_rows::<3>(3) - xi.b.fixed_rows::<3>(3) + rt.act(&grav.vector())),
    );
    l1.fixed_rows_mut::<3>(6).copy_from(&rt.act(&xi.t.a));
    l1
}

/// The lift `Λ(ξ, u)` ordered `(Λ₁, Λ₂, Λ₃, Λ₄)`.
pub fn lift(xi: &SystemState, u: &Input, grav: &GravitySpec) -> Vector25 {
    let l1 = lift_nav(xi, &u.w, grav);
    let l2 = Se3::ad(&xi.b) * pi_big(&l1) - u.tau;
    let l3 = xi.s.inverse().adjoint() * upsilon(&l1) + u.mu;
    let mut out = Vector25::zeros();
    out.fixed_rows_mut::<9>(0).copy_from(&l1);
    out.fixed_rows_mut::<6>(9).copy_from(&l2);
    out.fixed_rows_mut::<6>(15).copy_from(&l3);
    out.fixed_rows_mut::<4>(21).copy_from(&u.zeta);
    out
}

/// Body-frame velocity of the lifted system, `X⁻¹Ẋ = Λ(φ(X, ξ°), u)`.
pub fn lifted_dynamics(
    x: &SymElement,
    u: &Input,
    origin: &SystemState,
    grav: &GravitySpec,
) -> Vector25 {
    lift(&phi(x, origin), u, grav)
}

/// Pixel measurement `K π((P S)⁻¹ * p_f)`, first two rows.
pub fn measurement_h(xi: &SystemState, pf: &Vector3<f64>) -> Result<Vector2<f64>> {
    let pc = xi.camera_pose().inverse().act(pf);
    if pc.z <= crate::lie::DEPTH_EPS {
        return Err(Error::DegenerateDepth { depth: pc.z, min: crate::lie::DEPTH_EPS });
    }
    let uv = xi.k.matrix() * pi_z1(&pc)?;
    Ok(Vector2::new(uv.x, uv.y))
}

/// Change of global reference `α(H, ξ) = (H⁻¹T, b, S, K)` for `H = (R_H, 0, p_H)`
/// with `R_H` fixing the gravity direction.
pub fn alpha_action(h: &Se23, xi: &SystemState, grav: &GravitySpec) -> Result<SystemState> {
    validate_reference_change(h, grav)?;
    Ok(alpha_action_unchecked(h, xi))
}

/// [`alpha_action`] without the gravity check; used to demonstrate that the
/// lift is not invariant under arbitrary rotations.
pub fn alpha_action_unchecked(h: &Se23, xi: &SystemState) -> SystemState {
    SystemState { t: h.inverse().compose(&xi.t), ..*xi }
}

pub fn validate_reference_change(h: &Se23, grav: &GravitySpec) -> Result<()> {
    if h.a.norm() > 0.0 {
        return Err(Error::InvalidArgument(
            "reference change must have zero velocity part".into(),
        ));
    }
    if (h.rot.act(&grav.e3) - grav.e3).norm() > 1e-9 {
        return Err(Error::InvalidArgument(
            "reference change rotation must fix the gravity direction".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::So3;

    fn axis_state() -> SystemState {
        SystemState {
            t: Se23::identity(),
            b: Vector6::zeros(),
            s: Se3::identity(),
            k: Intrinsics::new(400.0, 400.0, 320.0, 240.0).unwrap(),
        }
    }

    #[test]
    fn zero_input_matrices() {
        let grav = GravitySpec::default();
        let m = build_dyn_matrices(&axis_state(), &Input::imu(Vector3::zeros(), Vector3::zeros()), &grav);
        assert_eq!(m.w_mat, Matrix5::zeros());
        assert_eq!(m.b_mat, Matrix5::zeros());
        assert_eq!(m.d_mat[(3, 4)], 1.0);
        assert_eq!(m.d_mat.abs().sum(), 1.0);
        assert_eq!(m.g_mat.column(3).rows(0, 3), grav.vector());
    }

    #[test]
    fn w_matrix_layout() {
        let grav = GravitySpec::default();
        let u = Input::imu(Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.0, 0.0, 9.81));
        let m = build_dyn_matrices(&axis_state(), &u, &grav);
        assert_eq!(m.w_mat.fixed_view::<3, 3>(0, 0), skew(&Vector3::z()));
        assert_eq!(m.w_mat.column(3).into_owned(), Matrix5::zeros().column(3) + nalgebra::Vector5::new(0.0, 0.0, 9.81, 0.0, 0.0));
        let t = Se23::new(So3::rot_x(0.4), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 2.0, 0.0)).matrix();
        assert!((m.g_mat * t - t * m.g_mat).abs().max() > 1e-3);
    }

    #[test]
    fn stationary_state_has_no_acceleration() {
        let grav = GravitySpec::default();
        let rot = So3::exp(&Vector3::new(0.2, -0.1, 0.7));
        let mut xi = axis_state();
        xi.t = Se23::new(rot, Vector3::zeros(), Vector3::new(1.0, 2.0, 3.0));
        // R a + g e₃ = 0
        let acc = -rot.inverse().act(&grav.vector());
        let f = system_dynamics(&xi, &Input::imu(Vector3::zeros(), acc), &grav);
        assert!(f.fixed_rows::<9>(0).norm() < 1e-14);
        assert_eq!(f.fixed_rows::<16>(9).norm(), 0.0);
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let xi = axis_state();
        let uv = measurement_h(&xi, &Vector3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(uv, Vector2::new(320.0, 240.0));
        let uv = measurement_h(&xi, &Vector3::new(1.0, 0.0, 2.0)).unwrap();
        assert_eq!(uv, Vector2::new(520.0, 240.0));
        assert!(measurement_h(&xi, &Vector3::new(0.0, 0.0, -2.0)).is_err());
    }

    #[test]
    fn zero_bias_and_zeta_give_zero_lift_parts() {
        let grav = GravitySpec::default();
        let xi = axis_state();
        let l = lift(&xi, &Input::imu(Vector3::new(0.1, 0.2, 0.3), Vector3::new(1.0, 2.0, 3.0)), &grav);
        assert_eq!(l.fixed_rows::<6>(9).norm(), 0.0);
        assert_eq!(l.fixed_rows::<4>(21).norm(), 0.0);
    }

    #[test]
    fn identity_action_and_solve() {
        let xi = axis_state();
        assert_eq!(phi(&SymElement::identity(), &xi), xi);
        let x = solve_group_element(&xi, &xi);
        assert!(x.distance(&SymElement::identity()) < 1e-15);
    }

    #[test]
    fn reference_change_validation() {
        let grav = GravitySpec::default();
        let xi = axis_state();
        let yaw = Se23::new(So3::rot_z(0.3), Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0));
        assert!(alpha_action(&yaw, &xi, &grav).is_ok());
        let tilt = Se23::new(So3::rot_x(0.3), Vector3::zeros(), Vector3::zeros());
        assert!(alpha_action(&tilt, &xi, &grav).is_err());
        let moving = Se23::new(So3::rot_z(0.3), Vector3::x(), Vector3::zeros());
        assert!(alpha_action(&moving, &xi, &grav).is_err());
        let ident = alpha_action(&Se23::identity(), &xi, &grav).unwrap();
        assert_eq!(ident, xi);
    }

    #[test]
    fn gravity_spec_requires_unit_direction() {
        assert!(GravitySpec::new(9.81, Vector3::new(0.0, 0.0, -2.0)).is_err());
        assert!(GravitySpec::new(9.81, Vector3::new(0.0, 0.0, -1.0)).is_ok());
    }
}
