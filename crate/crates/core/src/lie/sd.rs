use std::ops::Mul;

use nalgebra::SMatrix;

use super::{LieGroup, Matrix15, Se23, Se3, Vector15, Vector6, Vector9};
use crate::error::Result;

/// Element `(D, δ)` of the semi-direct bias group SE₂(3) ⋉ se(3).
///
/// The product is `(A, a)(B, b) = (AB, a + Ad_{χ(A)} b)`, where `χ` keeps the
/// rotation and the first vector of `A`, so the se(3) part is transported by
/// the 6x6 SE(3) Adjoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdElement {
    pub d: Se23,
    pub delta: Vector6,
}

/// `Π` as a 6x9 selector: drops the second vector of an se₂(3) tangent.
fn pi_selector() -> SMatrix<f64, 6, 9> {
    let mut m = SMatrix::<f64, 6, 9>::zeros();
    for i in 0..6 {
        m[(i, i)] = 1.0;
    }
    m
}

fn split(u: &Vector15) -> (Vector9, Vector6) {
    (u.fixed_rows::<9>(0).into_owned(), u.fixed_rows::<6>(9).into_owned())
}

fn join(u: &Vector9, v: &Vector6) -> Vector15 {
    let mut out = Vector15::zeros();
    out.fixed_rows_mut::<9>(0).copy_from(u);
    out.fixed_rows_mut::<6>(9).copy_from(v);
    out
}

impl SdElement {
    pub fn new(d: Se23, delta: Vector6) -> Self {
        Self { d, delta }
    }
}

impl LieGroup<15> for SdElement {
    fn identity() -> Self {
        Self { d: Se23::identity(), delta: Vector6::zeros() }
    }

    fn compose(&self, other: &Self) -> Self {
        Self {
            d: self.d.compose(&other.d),
            delta: self.delta + self.d.chi().adjoint() * other.delta,
        }
    }

    fn inverse(&self) -> Self {
        let d = self.d.inverse();
        Self { delta: -(d.chi().adjoint() * self.delta), d }
    }

    /// `(exp u, J_l(Π u) v)`: the se(3) part integrates `Ad_{χ(exp(tu))} v`
    /// over `t ∈ [0, 1]`.
    fn exp(x: &Vector15) -> Self {
        let (u, v) = split(x);
        let pu: Vector6 = u.fixed_rows::<6>(0).into_owned();
        Self { d: Se23::exp(&u), delta: Se3::left_jacobian(&pu) * v }
    }

    fn log(&self) -> Result<Vector15> {
        let u = self.d.log()?;
        let pu: Vector6 = u.fixed_rows::<6>(0).into_owned();
        Ok(join(&u, &(Se3::left_jacobian_inv(&pu) * self.delta)))
    }

    fn adjoint(&self) -> Matrix15 {
        let ad_d = self.d.adjoint();
        let mut m = Matrix15::zeros();
        m.fixed_view_mut::<9, 9>(0, 0).copy_from(&ad_d);
        m.fixed_view_mut::<6, 9>(9, 0)
            .copy_from(&(Se3::ad(&self.delta) * pi_selector() * ad_d));
        m.fixed_view_mut::<6, 6>(9, 9).copy_from(&self.d.chi().adjoint());
        m
    }

    fn ad(x: &Vector15) -> Matrix15 {
        let (u, v) = split(x);
        let pu: Vector6 = u.fixed_rows::<6>(0).into_owned();
        let mut m = Matrix15::zeros();
        m.fixed_view_mut::<9, 9>(0, 0).copy_from(&Se23::ad(&u));
        m.fixed_view_mut::<6, 9>(9, 0).copy_from(&(Se3::ad(&v) * pi_selector()));
        m.fixed_view_mut::<6, 6>(9, 9).copy_from(&Se3::ad(&pu));
        m
    }

    fn distance(&self, other: &Self) -> f64 {
        self.d.distance(&other.d).max((self.delta - other.delta).abs().max())
    }
}

impl Mul for SdElement {
    type Output = SdElement;
    fn mul(self, rhs: SdElement) -> SdElement {
        self.compose(&rhs)
    }
}
