use nalgebra::{DMatrix, Matrix3, SMatrix, Vector3};

use super::{expm, FilterState, Matrix12, NoiseSpec};
use crate::error::{Error, Result};
use crate::lie::{skew, LieGroup, Matrix5, Matrix6, Se23, Se3, So3, Vector6};
use crate::symmetry::{
    build_dyn_matrices, idx, phi, solve_group_element, GravitySpec, Input, Matrix25, SymElement,
    SystemState,
};

pub type Matrix25x12 = SMatrix<f64, 25, 12>;

/// Largest admissible integration step [s].
const MAX_DT: f64 = 0.1;

/// The state matrix `A_t⁰` of the linearized error dynamics `ε̇ = A ε`.
pub fn state_matrix_a(state: &FilterState, u: &Input, grav: &GravitySpec) -> Matrix25 {
    let o = &state.origin;
    let d = state.xhat.d();
    let a_hat = d.rot.matrix();
    let (va, vb) = (d.a, d.b);
    let delta = state.xhat.sd.delta;
    let delta_w: Vector3<f64> = delta.fixed_rows::<3>(0).into_owned();
    let bo_w: Vector3<f64> = o.b.fixed_rows::<3>(0).into_owned();
    let rt = o.t.rot.inverse();
    let rte3 = rt.act(&grav.e3);
    let rtv = rt.act(&o.t.a);

    let psi1 = a_hat * u.omega() + delta_w;
    let psi2 = psi1 - bo_w;
    let psi3 = va - skew(&psi1) * vb;
    let psi4 = va + rtv - skew(&psi2) * vb;
    let mut theta = Vector6::zeros();
    theta.fixed_rows_mut::<3>(3).copy_from(&(rte3 * grav.g));
    let mut big_psi = Matrix6::zeros();
    big_psi.fixed_view_mut::<3, 3>(3, 0).copy_from(&(skew(&rte3) * grav.g));
    let mut varrho = Vector6::zeros();
    varrho.fixed_rows_mut::<3>(0).copy_from(&psi2);
    varrho.fixed_rows_mut::<3>(3).copy_from(&psi4);

    let ad_bo = Se3::ad(&o.b);
    let q = d.chi().adjoint() * u.w + delta + theta;
    let ad_q = Se3::ad(&q);
    let ad_s_inv = o.s.inverse().adjoint();
    let vb_x = skew(&vb);
    let id3 = Matrix3::identity();

    let mut a = Matrix25::zeros();
    // ₁A
    a.fixed_view_mut::<6, 6>(0, 0).copy_from(&(big_psi - ad_bo));
    a.fixed_view_mut::<3, 3>(6, 0).copy_from(&(skew(&rtv) - vb_x * skew(&bo_w)));
    a.fixed_view_mut::<3, 3>(6, 3).copy_from(&id3);
    // ₂A
    a.fixed_view_mut::<6, 6>(0, idx::BIAS_W).copy_from(&Matrix6::identity());
    a.fixed_view_mut::<3, 3>(6, idx::BIAS_W).copy_from(&vb_x);
    // ₃A, ₄A
    a.fixed_view_mut::<6, 6>(idx::BIAS_W, 0).copy_from(&(ad_bo * big_psi - ad_q * ad_bo));
    a.fixed_view_mut::<6, 6>(idx::BIAS_W, idx::BIAS_W).copy_from(&ad_q);
    // ₅A
    let mut m5 = SMatrix::<f64, 6, 9>::zeros();
    m5.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(&psi1)));
    m5.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-skew(&psi3) - skew(&bo_w) * vb_x));
    m5.fixed_view_mut::<3, 3>(3, 3).copy_from(&id3);
    m5.fixed_view_mut::<3, 3>(3, 6).copy_from(&(-skew(&psi2)));
    a.fixed_view_mut::<6, 9>(idx::EXTR, 0).copy_from(&(ad_s_inv * m5));
    // ₆A
    let mut m6 = Matrix6::zeros();
    m6.fixed_view_mut::<3, 3>(0, 0).copy_from(&id3);
    m6.fixed_view_mut::<3, 3>(3, 0).copy_from(&vb_x);
    a.fixed_view_mut::<6, 6>(idx::EXTR, idx::BIAS_W).copy_from(&(ad_s_inv * m6));
    // ₇A
    a.fixed_view_mut::<6, 6>(idx::EXTR, idx::EXTR).copy_from(&Se3::ad(&(ad_s_inv * varrho)));
    a
}

/// `B = ∂ε̇/∂n` for `n = (n_ω, n_a, n_bω, n_ba)`, where the true input is the
/// measurement minus `(n_ω, n_a)` and the biases are driven by `n_b`.
pub fn input_matrix_b(state: &FilterState, _u: &Input) -> Matrix25x12 {
    let xi = state.estimate();
    let mut dl = Matrix25x12::zeros();
    // ∂Λ₁: −[I₆; 0]
    for i in 0..6 {
        dl[(i, i)] = -1.0;
    }
    // ∂Λ₂: −ad_b Π ∂Λ₁ and −I on the random walk
    dl.fixed_view_mut::<6, 6>(idx::BIAS_W, 0).copy_from(&(-Se3::ad(&xi.b)));
    for i in 0..6 {
        dl[(idx::BIAS_W + i, 6 + i)] = -1.0;
    }
    // ∂Λ₃: −Ad_{S⁻¹} Υ [I₆; 0]
    let ad_s_inv = xi.s.inverse().adjoint();
    let mut ups = Matrix6::zeros();
    ups.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    dl.fixed_view_mut::<6, 6>(idx::EXTR, 0).copy_from(&(-ad_s_inv * ups));
    state.xhat.adjoint() * dl
}

/// Full transition matrix: `exp(A dt)` on the core, identity on the clones.
pub fn state_transition_phi(a: &Matrix25, dt: f64, k: usize) -> DMatrix<f64> {
    let n = 25 + 6 * k;
    let mut out = DMatrix::identity(n, n);
    out.view_mut((0, 0), (25, 25)).copy_from(&expm(&(a * dt)));
    out
}

/// `Q = Φ B Q_c Bᵀ Φᵀ dt`, symmetrized.
pub fn process_noise_q(phi: &Matrix25, b: &Matrix25x12, noise: &NoiseSpec, dt: f64) -> Matrix25 {
    let qc: Matrix12 = noise.qc();
    let pb = phi * b;
    let q = pb * qc * pb.transpose() * dt;
    (q + q.transpose()) * 0.5
}

/// Exact flow of the estimate over `dt` with the input held constant.
///
/// The estimated state follows the system dynamics, so
/// `T(dt) = exp(dt(G − D)) T exp(dt(W − B + D))` while the biases and the
/// calibration stay put; the group element is then re-solved from the origin.
pub fn propagate_mean(
    xhat: &SymElement,
    origin: &SystemState,
    u: &Input,
    dt: f64,
    grav: &GravitySpec,
) -> SymElement {
    let xi = phi(xhat, origin);
    let m = build_dyn_matrices(&xi, u, grav);
    let left = expm(&((m.g_mat - m.d_mat) * dt));
    let right: Matrix5 = expm(&((m.w_mat - m.b_mat + m.d_mat) * dt));
    let t_new = left * xi.t.matrix() * right;
    let mut t = Se23::from_matrix_unchecked(&t_new);
    let w_hat: Vector3<f64> = (u.omega() - xi.b.fixed_rows::<3>(0)) * dt;
    // Same rotation as the matrix product, but exactly orthonormal.
    t.rot = xi.t.rot.compose(&So3::exp(&w_hat));
    let next = SystemState { t, ..xi };
    solve_group_element(origin, &next)
}

/// One propagation step of mean and covariance.
pub fn propagate(
    state: &FilterState,
    u: &Input,
    dt: f64,
    noise: &NoiseSpec,
    grav: &GravitySpec,
) -> Result<FilterState> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::InvalidArgument(format!(
            "propagation step must lie in (0, {MAX_DT}] s, got {dt}"
        )));
    }
    let a = state_matrix_a(state, u, grav);
    let phi_core = expm(&(a * dt));
    let b = input_matrix_b(state, u);
    let q = process_noise_q(&phi_core, &b, noise, dt);

    let n = state.dim();
    let mut cov = state.cov.clone();
    let pcc = Matrix25::from_iterator(state.cov.view((0, 0), (25, 25)).iter().copied());
    let pcc_new = phi_core * pcc * phi_core.transpose() + q;
    cov.view_mut((0, 0), (25, 25)).copy_from(&((pcc_new + pcc_new.transpose()) * 0.5));
    if n > 25 {
        let phi_d = DMatrix::from_iterator(25, 25, phi_core.iter().copied());
        let pcx = &phi_d * state.cov.view((0, 25), (25, n - 25));
        cov.view_mut((0, 25), (25, n - 25)).copy_from(&pcx);
        cov.view_mut((25, 0), (n - 25, 25)).copy_from(&pcx.transpose());
    }

    Ok(FilterState {
        origin: state.origin,
        xhat: propagate_mean(&state.xhat, &state.origin, u, dt, grav),
        clones: state.clones.clone(),
        cov,
        stamp: state.stamp + dt,
    })
}
