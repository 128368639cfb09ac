//! Matrix Lie groups used by the filter.
//!
//! Every group stores its elements in the smallest natural parametrization
//! (rotations as 3x3 matrices, translations as vectors) and converts to the
//! homogeneous matrix form on demand. Tangent vectors are always expressed in
//! "vee" coordinates with the rotational part first:
//!
//! | group      | dim | tangent ordering                         |
//! |------------|-----|------------------------------------------|
//! | SO(3)      | 3   | ω                                        |
//! | SE(3)      | 6   | (ω, v)                                   |
//! | SE₂(3)     | 9   | (ω, v, w)  (v ↔ first vector, w ↔ second) |
//! | IN         | 4   | (α, β, χ, γ) for generator [[α,0,χ],[0,β,γ],[0,0,0]] |
//! | SE₂(3)⋉se(3) | 15 | (SE₂(3) part, se(3) part)               |

mod intrinsics;
mod maps;
mod sd;
mod se23;
mod se3;
mod so3;

pub use intrinsics::Intrinsics;
pub use maps::{chi, d_pi_z1, gamma, pi_big, pi_z1, theta, upsilon, xi_map, DEPTH_EPS};
pub use sd::SdElement;
pub use se23::{Matrix5, Se23};
pub use se3::Se3;
pub use so3::So3;

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};

pub type Vector4 = SVector<f64, 4>;
pub type Vector6 = SVector<f64, 6>;
pub type Vector9 = SVector<f64, 9>;
pub type Vector15 = SVector<f64, 15>;
pub type Matrix6 = SMatrix<f64, 6, 6>;
pub type Matrix9 = SMatrix<f64, 9, 9>;
pub type Matrix15 = SMatrix<f64, 15, 15>;

/// A matrix Lie group of dimension `N`.
pub trait LieGroup<const N: usize>: Sized + Clone {
    fn identity() -> Self;

    fn compose(&self, other: &Self) -> Self;

    fn inverse(&self) -> Self;

    fn exp(u: &SVector<f64, N>) -> Self;

    /// Group logarithm. Fails when the rotational part is too close to π.
    fn log(&self) -> Result<SVector<f64, N>>;

    /// Matrix of the big Adjoint, `Ad_X u = (X u^ X⁻¹)^∨`.
    fn adjoint(&self) -> SMatrix<f64, N, N>;

    /// Matrix of the little adjoint, `ad_u v = [u^, v^]^∨`.
    fn ad(u: &SVector<f64, N>) -> SMatrix<f64, N, N>;

    /// Largest coordinate-wise discrepancy from `other`, in the element's own
    /// parametrization. Used for tolerance checks.
    fn distance(&self, other: &Self) -> f64;
}

/// Skew-symmetric matrix of a 3-vector.
#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`]; reads the antisymmetric part.
#[inline]
pub fn unskew(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Identifies a Lie algebra for the dimension-checked [`wedge`] / [`vee`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algebra {
    So3,
    Se3,
    Se23,
    In,
}

impl Algebra {
    pub fn dim(self) -> usize {
        match self {
            Algebra::So3 => 3,
            Algebra::Se3 => 6,
            Algebra::Se23 => 9,
            Algebra::In => 4,
        }
    }

    fn matrix_size(self) -> usize {
        match self {
            Algebra::So3 | Algebra::In => 3,
            Algebra::Se3 => 4,
            Algebra::Se23 => 5,
        }
    }
}

/// Matrix form of a tangent vector, with a runtime dimension check.
pub fn wedge(u: &[f64], algebra: Algebra) -> Result<DMatrix<f64>> {
    if u.len() != algebra.dim() {
        return Err(Error::InvalidArgument(format!(
            "{:?} algebra expects {} coordinates, got {}",
            algebra,
            algebra.dim(),
            u.len()
        )));
    }
    let n = algebra.matrix_size();
    let mut m = DMatrix::zeros(n, n);
    match algebra {
        Algebra::In => {
            m[(0, 0)] = u[0];
            m[(1, 1)] = u[1];
            m[(0, 2)] = u[2];
            m[(1, 2)] = u[3];
        }
        _ => {
            let w = skew(&Vector3::new(u[0], u[1], u[2]));
            m.view_mut((0, 0), (3, 3)).copy_from(&w);
            for col in 0..(n - 3) {
                for r in 0..3 {
                    m[(r, 3 + col)] = u[3 + 3 * col + r];
                }
            }
        }
    }
    Ok(m)
}

/// Inverse of [`wedge`].
pub fn vee(m: &DMatrix<f64>, algebra: Algebra) -> Result<DVector<f64>> {
    let n = algebra.matrix_size();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "{:?} algebra expects a {n}x{n} matrix, got {}x{}",
            algebra,
            m.nrows(),
            m.ncols()
        )));
    }
    let mut u = DVector::zeros(algebra.dim());
    match algebra {
        Algebra::In => {
            u[0] = m[(0, 0)];
            u[1] = m[(1, 1)];
            u[2] = m[(0, 2)];
            u[3] = m[(1, 2)];
        }
        _ => {
            let w = unskew(&m.fixed_view::<3, 3>(0, 0).into_owned());
            u.rows_mut(0, 3).copy_from(&w);
            for col in 0..(n - 3) {
                for r in 0..3 {
                    u[3 + 3 * col + r] = m[(r, 3 + col)];
                }
            }
        }
    }
    Ok(u)
}
