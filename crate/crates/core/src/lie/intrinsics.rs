use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4};

use super::{LieGroup, Vector4};
use crate::error::{Error, Result};

/// Pinhole intrinsics `(fx, fy, cx, cy)` viewed as an element of the
/// upper-triangular group of camera matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// `(e^x - 1) / x`, with a 4th-order Taylor branch near zero.
fn expm1_ratio(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0 + x * x * x * x / 120.0
    } else {
        x.exp_m1() / x
    }
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !cx.is_finite() || !cy.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "intrinsics need fx, fy > 0 [px] and finite cx, cy [px], got ({fx}, {fy}, {cx}, {cy})"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn hat(u: &Vector4) -> Matrix3<f64> {
        Matrix3::new(u[0], 0.0, u[2], 0.0, u[1], u[3], 0.0, 0.0, 0.0)
    }

    pub fn as_vector(&self) -> Vector4 {
        Vector4::new(self.fx, self.fy, self.cx, self.cy)
    }
}

impl LieGroup<4> for Intrinsics {
    fn identity() -> Self {
        Self { fx: 1.0, fy: 1.0, cx: 0.0, cy: 0.0 }
    }

    fn compose(&self, o: &Self) -> Self {
        Self {
            fx: self.fx * o.fx,
            fy: self.fy * o.fy,
            cx: self.cx + self.fx * o.cx,
            cy: self.cy + self.fy * o.cy,
        }
    }

    fn inverse(&self) -> Self {
        Self {
            fx: 1.0 / self.fx,
            fy: 1.0 / self.fy,
            cx: -self.cx / self.fx,
            cy: -self.cy / self.fy,
        }
    }

    fn exp(u: &Vector4) -> Self {
        Self {
            fx: u[0].exp(),
            fy: u[1].exp(),
            cx: u[2] * expm1_ratio(u[0]),
            cy: u[3] * expm1_ratio(u[1]),
        }
    }

    fn log(&self) -> Result<Vector4> {
        let alpha = self.fx.ln();
        let beta = self.fy.ln();
        Ok(Vector4::new(
            alpha,
            beta,
            self.cx / expm1_ratio(alpha),
            self.cy / expm1_ratio(beta),
        ))
    }

    fn adjoint(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m[(2, 0)] = -self.cx;
        m[(2, 2)] = self.fx;
        m[(3, 1)] = -self.cy;
        m[(3, 3)] = self.fy;
        m
    }

    fn ad(u: &Vector4) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m[(2, 0)] = -u[2];
        m[(2, 2)] = u[0];
        m[(3, 1)] = -u[3];
        m[(3, 3)] = u[1];
        m
    }

    fn distance(&self, other: &Self) -> f64 {
        (self.as_vector() - other.as_vector()).abs().max()
    }
}

impl Mul for Intrinsics {
    type Output = Intrinsics;
    fn mul(self, rhs: Intrinsics) -> Intrinsics {
        self.compose(&rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn log_of_scaled_element() {
        let k = Intrinsics::new(E, 1.0, 0.0, 0.0).unwrap();
        let u = k.log().unwrap();
        assert!((u - Vector4::new(1.0, 0.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn product_matches_matrix_product() {
        let a = Intrinsics::new(400.0, 410.0, 320.0, 240.0).unwrap();
        let b = Intrinsics::new(1.1, 0.9, -3.0, 2.0).unwrap();
        assert!(((a * b).matrix() - a.matrix() * b.matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn taylor_branch_matches_closed_form() {
        for x in [9.9e-7f64, -9.9e-7, 3e-7] {
            let closed = x.exp_m1() / x;
            assert!((expm1_ratio(x) - closed).abs() < 1e-15);
        }
        let k = Intrinsics::exp(&Vector4::new(0.0, 0.0, 2.0, 3.0));
        assert_eq!(k, Intrinsics::new(1.0, 1.0, 2.0, 3.0).unwrap());
    }

    #[test]
    fn rejects_nonpositive_focal() {
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(Intrinsics::new(1.0, -1.0, 0.0, 0.0).is_err());
        assert!(Intrinsics::new(1.0, 1.0, f64::NAN, 0.0).is_err());
    }
}
