use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Vector3};

use super::{skew, LieGroup, Matrix6, So3, Vector6};
use crate::error::Result;

/// Rigid transform `(R, t)`, acting on points as `R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Se3 {
    pub rot: So3,
    pub trans: Vector3<f64>,
}

impl Se3 {
    pub fn new(rot: So3, trans: Vector3<f64>) -> Self {
        Self { rot, trans }
    }

    pub fn from_translation(trans: Vector3<f64>) -> Self {
        Self { rot: So3::identity(), trans }
    }

    pub fn from_rotation(rot: So3) -> Self {
        Self { rot, trans: Vector3::zeros() }
    }

    /// The `*` point action.
    pub fn act(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rot.act(p) + self.trans
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rot.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.trans);
        m
    }

    pub fn from_matrix_unchecked(m: &Matrix4<f64>) -> Self {
        Self {
            rot: So3::from_matrix_unchecked(m.fixed_view::<3, 3>(0, 0).into_owned()),
            trans: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    /// Matrix form of a tangent vector (4x4).
    pub fn hat(u: &Vector6) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&u.fixed_rows::<3>(0).into_owned()));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&u.fixed_rows::<3>(3));
        m
    }

    pub fn vee(m: &Matrix4<f64>) -> Vector6 {
        let w = super::unskew(&m.fixed_view::<3, 3>(0, 0).into_owned());
        let mut u = Vector6::zeros();
        u.fixed_rows_mut::<3>(0).copy_from(&w);
        u.fixed_rows_mut::<3>(3).copy_from(&m.fixed_view::<3, 1>(0, 3));
        u
    }

    /// Left Jacobian `J_l(u) = Σ ad_u^k / (k+1)!`, ordered `(ω, v)`:
    /// `[[J, 0], [Q, J]]` with `J` the SO(3) left Jacobian.
    pub fn left_jacobian(u: &Vector6) -> Matrix6 {
        let phi: Vector3<f64> = u.fixed_rows::<3>(0).into_owned();
        let rho: Vector3<f64> = u.fixed_rows::<3>(3).into_owned();
        let theta = phi.norm();
        if theta < 1e-2 {
            return series_left_jacobian(u);
        }
        let j = So3::left_jacobian(&phi);
        let q = q_block(&phi, &rho, theta);
        let mut out = Matrix6::zeros();
        out.fixed_view_mut::<3, 3>(0, 0).copy_from(&j);
        out.fixed_view_mut::<3, 3>(3, 3).copy_from(&j);
        out.fixed_view_mut::<3, 3>(3, 0).copy_from(&q);
        out
    }

    pub fn left_jacobian_inv(u: &Vector6) -> Matrix6 {
        let phi: Vector3<f64> = u.fixed_rows::<3>(0).into_owned();
        let rho: Vector3<f64> = u.fixed_rows::<3>(3).into_owned();
        let theta = phi.norm();
        let (j_inv, q) = if theta < 1e-2 {
            let jl = series_left_jacobian(u);
            let j: Matrix3<f64> = jl.fixed_view::<3, 3>(0, 0).into_owned();
            (j.try_inverse().expect("left jacobian is invertible near zero"),
             jl.fixed_view::<3, 3>(3, 0).into_owned())
        } else {
            (So3::left_jacobian_inv(&phi), q_block(&phi, &rho, theta))
        };
        let mut out = Matrix6::zeros();
        out.fixed_view_mut::<3, 3>(0, 0).copy_from(&j_inv);
        out.fixed_view_mut::<3, 3>(3, 3).copy_from(&j_inv);
        out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-j_inv * q * j_inv));
        out
    }
}

fn series_left_jacobian(u: &Vector6) -> Matrix6 {
    let ad = Se3::ad(u);
    let mut term = Matrix6::identity();
    let mut sum = Matrix6::identity();
    for k in 1..14 {
        term = term * ad / (k as f64 + 1.0);
        sum += term;
    }
    sum
}

fn q_block(phi: &Vector3<f64>, rho: &Vector3<f64>, theta: f64) -> Matrix3<f64> {
    let p = skew(phi);
    let r = skew(rho);
    let (s, c) = theta.sin_cos();
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let t4 = t3 * theta;
    let t5 = t4 * theta;
    0.5 * r
        + (theta - s) / t3 * (p * r + r * p + p * r * p)
        + (t2 + 2.0 * c - 2.0) / (2.0 * t4) * (p * p * r + r * p * p - 3.0 * p * r * p)
        + (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t5) * (p * r * p * p + p * p * r * p)
}

impl LieGroup<6> for Se3 {
    fn identity() -> Self {
        Self { rot: So3::identity(), trans: Vector3::zeros() }
    }

    fn compose(&self, other: &Self) -> Self {
        Self {
            rot: self.rot.compose(&other.rot),
            trans: self.rot.act(&other.trans) + self.trans,
        }
    }

    fn inverse(&self) -> Self {
        let rot = self.rot.inverse();
        Self { trans: -rot.act(&self.trans), rot }
    }

    fn exp(u: &Vector6) -> Self {
        let phi: Vector3<f64> = u.fixed_rows::<3>(0).into_owned();
        let rho: Vector3<f64> = u.fixed_rows::<3>(3).into_owned();
        Self { rot: So3::exp(&phi), trans: So3::left_jacobian(&phi) * rho }
    }

    fn log(&self) -> Result<Vector6> {
        let phi = self.rot.log()?;
        let mut u = Vector6::zeros();
        u.fixed_rows_mut::<3>(0).copy_from(&phi);
        u.fixed_rows_mut::<3>(3).copy_from(&(So3::left_jacobian_inv(&phi) * self.trans));
        Ok(u)
    }

    fn adjoint(&self) -> Matrix6 {
        let r = self.rot.matrix();
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(skew(&self.trans) * r));
        m
    }

    fn ad(u: &Vector6) -> Matrix6 {
        let w = skew(&u.fixed_rows::<3>(0).into_owned());
        let v = skew(&u.fixed_rows::<3>(3).into_owned());
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&w);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&w);
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&v);
        m
    }

    fn distance(&self, other: &Self) -> f64 {
        self.rot.distance(&other.rot).max((self.trans - other.trans).abs().max())
    }
}

impl Mul for Se3 {
    type Output = Se3;
    fn mul(self, rhs: Se3) -> Se3 {
        self.compose(&rhs)
    }
}
