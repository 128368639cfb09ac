use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};

use super::{skew, LieGroup, Matrix9, Se3, So3, Vector9};
use crate::error::Result;

/// Extended pose `(R, a, b)`; for navigation states `a` is the velocity and
/// `b` the position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Se23 {
    pub rot: So3,
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
}

pub type Matrix5 = nalgebra::SMatrix<f64, 5, 5>;

impl Se23 {
    pub fn new(rot: So3, a: Vector3<f64>, b: Vector3<f64>) -> Self {
        Self { rot, a, b }
    }

    pub fn matrix(&self) -> Matrix5 {
        let mut m = Matrix5::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rot.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.a);
        m.fixed_view_mut::<3, 1>(0, 4).copy_from(&self.b);
        m
    }

    /// Reads the blocks of a 5x5 matrix without projecting the rotation.
    pub fn from_matrix_unchecked(m: &Matrix5) -> Self {
        Self {
            rot: So3::from_matrix_unchecked(m.fixed_view::<3, 3>(0, 0).into_owned()),
            a: m.fixed_view::<3, 1>(0, 3).into_owned(),
            b: m.fixed_view::<3, 1>(0, 4).into_owned(),
        }
    }

    pub fn hat(u: &Vector9) -> Matrix5 {
        let mut m = Matrix5::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&u.fixed_rows::<3>(0).into_owned()));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&u.fixed_rows::<3>(3));
        m.fixed_view_mut::<3, 1>(0, 4).copy_from(&u.fixed_rows::<3>(6));
        m
    }

    pub fn vee(m: &Matrix5) -> Vector9 {
        let mut u = Vector9::zeros();
        u.fixed_rows_mut::<3>(0)
            .copy_from(&super::unskew(&m.fixed_view::<3, 3>(0, 0).into_owned()));
        u.fixed_rows_mut::<3>(3).copy_from(&m.fixed_view::<3, 1>(0, 3));
        u.fixed_rows_mut::<3>(6).copy_from(&m.fixed_view::<3, 1>(0, 4));
        u
    }

    /// `R` with the first vector, as an SE(3) element.
    pub fn chi(&self) -> Se3 {
        Se3::new(self.rot, self.a)
    }

    /// `R` with the second vector, as an SE(3) element.
    pub fn theta(&self) -> Se3 {
        Se3::new(self.rot, self.b)
    }
}

impl LieGroup<9> for Se23 {
    fn identity() -> Self {
        Self { rot: So3::identity(), a: Vector3::zeros(), b: Vector3::zeros() }
    }

    fn compose(&self, other: &Self) -> Self {
        Self {
            rot: self.rot.compose(&other.rot),
            a: self.rot.act(&other.a) + self.a,
            b: self.rot.act(&other.b) + self.b,
        }
    }

    fn inverse(&self) -> Self {
        let rot = self.rot.inverse();
        Self { a: -rot.act(&self.a), b: -rot.act(&self.b), rot }
    }

    fn exp(u: &Vector9) -> Self {
        let phi: Vector3<f64> = u.fixed_rows::<3>(0).into_owned();
        let j = So3::left_jacobian(&phi);
        Self {
            rot: So3::exp(&phi),
            a: j * u.fixed_rows::<3>(3),
            b: j * u.fixed_rows::<3>(6),
        }
    }

    fn log(&self) -> Result<Vector9> {
        let phi = self.rot.log()?;
        let j_inv = So3::left_jacobian_inv(&phi);
        let mut u = Vector9::zeros();
        u.fixed_rows_mut::<3>(0).copy_from(&phi);
        u.fixed_rows_mut::<3>(3).copy_from(&(j_inv * self.a));
        u.fixed_rows_mut::<3>(6).copy_from(&(j_inv * self.b));
        Ok(u)
    }

    fn adjoint(&self) -> Matrix9 {
        let r: &Matrix3<f64> = self.rot.matrix();
        let mut m = Matrix9::zeros();
        for k in 0..3 {
            m.fixed_view_mut::<3, 3>(3 * k, 3 * k).copy_from(r);
        }
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(skew(&self.a) * r));
        m.fixed_view_mut::<3, 3>(6, 0).copy_from(&(skew(&self.b) * r));
        m
    }

    fn ad(u: &Vector9) -> Matrix9 {
        let w = skew(&u.fixed_rows::<3>(0).into_owned());
        let mut m = Matrix9::zeros();
        for k in 0..3 {
            m.fixed_view_mut::<3, 3>(3 * k, 3 * k).copy_from(&w);
        }
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&skew(&u.fixed_rows::<3>(3).into_owned()));
        m.fixed_view_mut::<3, 3>(6, 0).copy_from(&skew(&u.fixed_rows::<3>(6).into_owned()));
        m
    }

    fn distance(&self, other: &Self) -> f64 {
        self.rot
            .distance(&other.rot)
            .max((self.a - other.a).abs().max())
            .max((self.b - other.b).abs().max())
    }
}

impl Mul for Se23 {
    type Output = Se23;
    fn mul(self, rhs: Se23) -> Se23 {
        self.compose(&rhs)
    }
}
