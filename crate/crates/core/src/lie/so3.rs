use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};

use super::{skew, unskew, LieGroup};
use crate::error::{Error, Result};

/// Angles above `π - NEAR_PI` take the axis from the symmetric part.
const NEAR_PI: f64 = 1e-4;
/// The logarithm refuses angles in `[π - LOG_EXCLUSION, π]`.
const LOG_EXCLUSION: f64 = 1e-6;
/// Products drifting further than this from orthonormal are re-projected.
/// Well below the `from_matrix` check, so every composed rotation passes it.
const ORTHO_TOL: f64 = 1e-12;

/// Rotation stored as an orthonormal 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct So3 {
    mat: Matrix3<f64>,
}

impl So3 {
    /// Validates orthonormality and orientation within 1e-9.
    pub fn from_matrix(mat: Matrix3<f64>) -> Result<Self> {
        let ortho = (mat * mat.transpose() - Matrix3::identity()).abs().max();
        let det = mat.determinant();
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "not a rotation matrix (|RRᵀ - I| = {ortho:e}, det = {det})"
            )));
        }
        Ok(Self { mat })
    }

    /// Projects an arbitrary matrix onto the closest rotation (polar factor).
    pub fn from_matrix_projected(mat: Matrix3<f64>) -> Self {
        let svd = mat.svd(true, true);
        let u = svd.u.unwrap();
        let v_t = svd.v_t.unwrap();
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Self { mat: r }
    }

    /// Wraps a matrix without checks. Intended for integrator stages and
    /// oracles where the matrix is only approximately orthonormal.
    pub fn from_matrix_unchecked(mat: Matrix3<f64>) -> Self {
        Self { mat }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.mat
    }

    pub fn act(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.mat * v
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::exp(&Vector3::new(angle, 0.0, 0.0))
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::exp(&Vector3::new(0.0, angle, 0.0))
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::exp(&Vector3::new(0.0, 0.0, angle))
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let s = unskew(&self.mat).norm();
        let c = 0.5 * (self.mat.trace() - 1.0);
        s.atan2(c)
    }

    fn renormalized(mat: Matrix3<f64>) -> Self {
        if (mat.transpose() * mat - Matrix3::identity()).abs().max() > ORTHO_TOL {
            Self::from_matrix_projected(mat)
        } else {
            Self { mat }
        }
    }

    /// Left Jacobian `J_l(φ) = Σ (φ^)^k / (k+1)!`.
    pub fn left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
        let theta = phi.norm();
        let w = skew(phi);
        if theta < 1e-6 {
            return Matrix3::identity() + 0.5 * w + w * w / 6.0;
        }
        let t2 = theta * theta;
        Matrix3::identity()
            + (1.0 - theta.cos()) / t2 * w
            + (theta - theta.sin()) / (t2 * theta) * w * w
    }

    pub fn left_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
        let theta = phi.norm();
        let w = skew(phi);
        if theta < 1e-6 {
            return Matrix3::identity() - 0.5 * w + w * w / 12.0;
        }
        let t2 = theta * theta;
        let coeff = 1.0 / t2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin());
        Matrix3::identity() - 0.5 * w + coeff * w * w
    }
}

impl LieGroup<3> for So3 {
    fn identity() -> Self {
        Self { mat: Matrix3::identity() }
    }

    fn compose(&self, other: &Self) -> Self {
        Self::renormalized(self.mat * other.mat)
    }

    fn inverse(&self) -> Self {
        Self { mat: self.mat.transpose() }
    }

    fn exp(u: &Vector3<f64>) -> Self {
        let theta = u.norm();
        let w = skew(u);
        let mat = if theta < 1e-8 {
            Matrix3::identity() + w + 0.5 * w * w
        } else {
            Matrix3::identity()
                + theta.sin() / theta * w
                + (1.0 - theta.cos()) / (theta * theta) * w * w
        };
        Self { mat }
    }

    fn log(&self) -> Result<Vector3<f64>> {
        let r = &self.mat;
        let axis_scaled = unskew(r);
        let s = axis_scaled.norm();
        let c = 0.5 * (r.trace() - 1.0);
        let theta = s.atan2(c);
        if theta >= PI - LOG_EXCLUSION {
            return Err(Error::Domain(format!(
                "rotation angle {theta} is within {LOG_EXCLUSION:e} of π"
            )));
        }
        if theta < 1e-8 {
            // θ/sinθ ≈ 1 + θ²/6
            return Ok(axis_scaled * (1.0 + s * s / 6.0));
        }
        if theta < PI - NEAR_PI {
            return Ok(axis_scaled * (theta / s));
        }
        // Near π the antisymmetric part vanishes; recover the axis from
        // nnᵀ = (sym(R) - cosθ I) / (1 - cosθ) and fix its sign afterwards.
        let sym = 0.5 * (r + r.transpose());
        let nnt = (sym - Matrix3::identity() * c) / (1.0 - c);
        let (mut k, mut best) = (0, nnt[(0, 0)]);
        for i in 1..3 {
            if nnt[(i, i)] > best {
                best = nnt[(i, i)];
                k = i;
            }
        }
        let mut n: Vector3<f64> = nnt.column(k).into_owned() / best.sqrt();
        n.normalize_mut();
        if n.dot(&axis_scaled) < 0.0 {
            n = -n;
        }
        Ok(n * theta)
    }

    fn adjoint(&self) -> Matrix3<f64> {
        self.mat
    }

    fn ad(u: &Vector3<f64>) -> Matrix3<f64> {
        skew(u)
    }

    fn distance(&self, other: &Self) -> f64 {
        (self.mat - other.mat).abs().max()
    }
}

impl Mul for So3 {
    type Output = So3;
    fn mul(self, rhs: So3) -> So3 {
        self.compose(&rhs)
    }
}

impl Mul<Vector3<f64>> for So3 {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.mat * rhs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_turn_maps_e1_to_e2() {
        let r = So3::exp(&Vector3::new(0.0, 0.0, PI / 2.0));
        let e2 = r.act(&Vector3::x());
        assert!((e2 - Vector3::y()).norm() < 1e-15);
    }

    #[test]
    fn log_near_pi_uses_symmetric_part() {
        let axis = Vector3::new(1.0, -2.0, 0.5).normalize();
        for angle in [PI - 5e-5, PI - 2e-6, PI - 1e-3] {
            let r = So3::exp(&(axis * angle));
            let w = r.log().unwrap();
            assert!((w - axis * angle).norm() < 1e-8, "angle {angle}: {w}");
        }
    }

    #[test]
    fn log_rejects_half_turn() {
        let r = So3::exp(&Vector3::new(0.0, PI, 0.0));
        assert!(matches!(r.log(), Err(Error::Domain(_))));
    }

    #[test]
    fn from_matrix_validates() {
        assert!(So3::from_matrix(Matrix3::identity() * 2.0).is_err());
        let mut reflect = Matrix3::identity();
        reflect[(2, 2)] = -1.0;
        assert!(So3::from_matrix(reflect).is_err());
        let r = So3::exp(&Vector3::new(0.3, 0.2, -0.1));
        assert!(So3::from_matrix(*r.matrix()).is_ok());
    }

    #[test]
    fn projection_recovers_rotation() {
        let r = So3::exp(&Vector3::new(0.3, -0.7, 1.1));
        let noisy = r.matrix() + Matrix3::from_element(1e-5);
        let p = So3::from_matrix_projected(noisy);
        assert!(So3::from_matrix(*p.matrix()).is_ok());
        assert!(p.distance(&r) < 1e-4);
    }

    #[test]
    fn left_jacobian_inverse_pair() {
        for phi in [Vector3::new(1e-9, 0.0, 0.0), Vector3::new(0.4, -1.2, 2.0)] {
            let prod = So3::left_jacobian(&phi) * So3::left_jacobian_inv(&phi);
            assert!((prod - Matrix3::identity()).abs().max() < 1e-12);
        }
    }
}
