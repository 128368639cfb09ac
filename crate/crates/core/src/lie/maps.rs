use nalgebra::{Matrix3, SMatrix, Vector3};

use super::{Se23, Se3, So3, Vector6, Vector9};
use crate::error::{Error, Result};

/// Smallest admissible depth for the projection onto the `z = 1` plane.
pub const DEPTH_EPS: f64 = 1e-9;

fn check_depth(z: f64) -> Result<()> {
    if z.abs() <= DEPTH_EPS {
        Err(Error::DegenerateDepth { depth: z, min: DEPTH_EPS })
    } else {
        Ok(())
    }
}

/// `v / z`.
pub fn pi_z1(v: &Vector3<f64>) -> Result<Vector3<f64>> {
    check_depth(v.z)?;
    Ok(Vector3::new(v.x / v.z, v.y / v.z, 1.0))
}

/// Differential of [`pi_z1`]; the third row is zero.
pub fn d_pi_z1(v: &Vector3<f64>) -> Result<Matrix3<f64>> {
    check_depth(v.z)?;
    let iz = 1.0 / v.z;
    let iz2 = iz * iz;
    Ok(Matrix3::new(iz, 0.0, -v.x * iz2, 0.0, iz, -v.y * iz2, 0.0, 0.0, 0.0))
}

/// `Ξ(v)`, the 3x4 matrix with `Ξ(v) u = u^ v` for intrinsics tangents `u`
/// when `v` lies on the `z = 1` plane.
pub fn xi_map(v: &Vector3<f64>) -> SMatrix<f64, 3, 4> {
    SMatrix::<f64, 3, 4>::new(v.x, 0.0, v.z, 0.0, 0.0, v.y, 0.0, v.z, 0.0, 0.0, 0.0, 0.0)
}

/// `Π`: se₂(3) → se(3), keeps `(ω, v)`.
pub fn pi_big(u: &Vector9) -> Vector6 {
    u.fixed_rows::<6>(0).into_owned()
}

/// `Υ`: se₂(3) → se(3), keeps `(ω, w)`.
pub fn upsilon(u: &Vector9) -> Vector6 {
    let mut out = Vector6::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(&u.fixed_rows::<3>(0));
    out.fixed_rows_mut::<3>(3).copy_from(&u.fixed_rows::<3>(6));
    out
}

/// `Γ`: SE(3) → SO(3).
pub fn gamma(x: &Se3) -> So3 {
    x.rot
}

/// `χ`: SE₂(3) → SE(3), keeps `(A, a)`.
pub fn chi(x: &Se23) -> Se3 {
    x.chi()
}

/// `Θ`: SE₂(3) → SE(3), keeps `(A, b)`.
pub fn theta(x: &Se23) -> Se3 {
    x.theta()
}
