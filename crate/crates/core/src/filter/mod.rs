//! The multi state constraint equivariant filter.
//!
//! The estimate is `ξ̂ = φ(X̂, ξ°)` for a fixed origin `ξ°`. Errors live in
//! normal coordinates `ε = log(X X̂⁻¹)`, so the true group element is
//! `exp(ε) X̂`; clones follow the same convention on SE(3).

mod expm;
mod propagate;
mod triangulate;
mod update;
mod window;

pub use expm::expm;
pub use propagate::{
    input_matrix_b, process_noise_q, propagate, propagate_mean, state_matrix_a,
    state_transition_phi,
};
pub use triangulate::{
    triangulate, varsigma, varsigma_inv, AnchoredFeature, FeatureTrack, TriangulationConfig,
};
pub use update::{
    chi2_gate, chi2_threshold, eqf_update, feature_jacobians, nullspace_project, process_image,
    qr_compress, FeatureJacobians, ImageReport, UpdateOutcome,
};
pub use window::{clone_state, marginalize};

use nalgebra::{DMatrix, Matrix3, SMatrix, Vector3};

use crate::error::{Error, Result};
use crate::lie::{Intrinsics, LieGroup, Matrix6, Se3, So3, Vector6};
use crate::symmetry::{
    idx, phi, solve_group_element, GravitySpec, Matrix25, SymElement, SystemState, Vector25,
};

pub type Matrix12 = SMatrix<f64, 12, 12>;

/// Continuous-time noise densities of the IMU and the pixel noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Gyroscope white noise [rad/s/√Hz].
    pub sigma_w: Vector3<f64>,
    /// Accelerometer white noise [m/s²/√Hz].
    pub sigma_a: Vector3<f64>,
    /// Gyroscope bias random walk [rad/s²/√Hz].
    pub sigma_bw: Vector3<f64>,
    /// Accelerometer bias random walk [m/s³/√Hz].
    pub sigma_ba: Vector3<f64>,
    /// Pixel noise standard deviation [px].
    pub sigma_px: f64,
}

impl NoiseSpec {
    /// Isotropic densities. Zero densities are accepted, which is useful for
    /// noiseless simulation; the pixel noise used by the update must be positive.
    pub fn isotropic(w: f64, a: f64, bw: f64, ba: f64, px: f64) -> Result<Self> {
        let spec = Self {
            sigma_w: Vector3::repeat(w),
            sigma_a: Vector3::repeat(a),
            sigma_bw: Vector3::repeat(bw),
            sigma_ba: Vector3::repeat(ba),
            sigma_px: px,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Densities of a typical MEMS unit (EuRoC datasheet values).
    pub fn euroc() -> Self {
        Self::isotropic(1.6968e-4, 2.0e-3, 1.9393e-5, 3.0e-3, 1.0).expect("valid defaults")
    }

    pub fn zero() -> Self {
        Self::isotropic(0.0, 0.0, 0.0, 0.0, 0.0).expect("valid zeros")
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .sigma_w
            .iter()
            .chain(self.sigma_a.iter())
            .chain(self.sigma_bw.iter())
            .chain(self.sigma_ba.iter())
            .chain(std::iter::once(&self.sigma_px));
        for v in all {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::InvalidArgument(format!("noise density {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// `Q_c = diag(σ²_ω, σ²_a, σ²_bω, σ²_ba)`.
    pub fn qc(&self) -> Matrix12 {
        let mut d = SMatrix::<f64, 12, 1>::zeros();
        for i in 0..3 {
            d[i] = self.sigma_w[i].powi(2);
            d[3 + i] = self.sigma_a[i].powi(2);
            d[6 + i] = self.sigma_bw[i].powi(2);
            d[9 + i] = self.sigma_ba[i].powi(2);
        }
        Matrix12::from_diagonal(&d)
    }

    /// The same densities with the IMU terms scaled by `factor` in variance.
    pub fn scaled_imu(&self, factor: f64) -> Self {
        let s = factor.sqrt();
        Self {
            sigma_w: self.sigma_w * s,
            sigma_a: self.sigma_a * s,
            sigma_bw: self.sigma_bw * s,
            sigma_ba: self.sigma_ba * s,
            sigma_px: self.sigma_px,
        }
    }
}

/// Prior standard deviations of the initial state, per physical block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialStd {
    /// [rad]
    pub attitude: f64,
    /// [m/s]
    pub velocity: f64,
    /// [m]
    pub position: f64,
    /// [rad/s]
    pub bias_w: f64,
    /// [m/s²]
    pub bias_a: f64,
    /// [rad]
    pub ext_rot: f64,
    /// [m]
    pub ext_trans: f64,
    /// [px]
    pub focal: f64,
    /// [px]
    pub center: f64,
}

impl InitialStd {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            ("attitude", self.attitude, "rad"),
            ("velocity", self.velocity, "m/s"),
            ("position", self.position, "m"),
            ("bias_w", self.bias_w, "rad/s"),
            ("bias_a", self.bias_a, "m/s²"),
            ("ext_rot", self.ext_rot, "rad"),
            ("ext_trans", self.ext_trans, "m"),
            ("focal", self.focal, "px"),
            ("center", self.center, "px"),
        ];
        for (name, v, unit) in vals {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "initial std {name} must be > 0 {unit}, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Diagonal covariance of a physical perturbation (see [`perturb_state`]).
    pub fn physical_covariance(&self) -> Matrix25 {
        let mut d = Vector25::zeros();
        let blocks = [
            (0, 3, self.attitude),
            (3, 3, self.velocity),
            (6, 3, self.position),
            (9, 3, self.bias_w),
            (12, 3, self.bias_a),
            (15, 3, self.ext_rot),
            (18, 3, self.ext_trans),
            (21, 2, self.focal),
            (23, 2, self.center),
        ];
        for (start, len, s) in blocks {
            d.rows_mut(start, len).fill(s * s);
        }
        Matrix25::from_diagonal(&d)
    }
}

impl Default for InitialStd {
    fn default() -> Self {
        Self {
            attitude: 0.5f64.to_radians(),
            velocity: 0.05,
            position: 0.01,
            bias_w: 0.01,
            bias_a: 0.05,
            ext_rot: 1f64.to_radians(),
            ext_trans: 0.01,
            focal: 2.0,
            center: 2.0,
        }
    }
}

/// Applies a physical perturbation `(θ, δv, δp, δb_ω, δb_a, s_R, s_t, δk)`:
/// `R exp(θ)`, additive velocity/position/bias/intrinsics, `S exp(s)`.
pub fn perturb_state(xi: &SystemState, d: &Vector25) -> Result<SystemState> {
    let v3 = |i: usize| -> Vector3<f64> { d.fixed_rows::<3>(i).into_owned() };
    let mut out = *xi;
    out.t.rot = xi.t.rot.compose(&So3::exp(&v3(0)));
    out.t.a += v3(3);
    out.t.b += v3(6);
    out.b += d.fixed_rows::<6>(9);
    out.s = xi.s.compose(&Se3::exp(&d.fixed_rows::<6>(15).into_owned()));
    out.k = Intrinsics::new(
        xi.k.fx + d[21],
        xi.k.fy + d[22],
        xi.k.cx + d[23],
        xi.k.cy + d[24],
    )?;
    Ok(out)
}

/// Linear map from a physical perturbation of `ξ°` to normal coordinates at
/// `X̂ = I`.
pub fn physical_to_normal_jacobian(origin: &SystemState) -> Matrix25 {
    let rt = origin.t.rot.inverse().matrix().to_owned();
    let mut j = Matrix25::zeros();
    // ε_D = (θ, R°ᵀδv, R°ᵀδp)
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    j.fixed_view_mut::<3, 3>(3, 3).copy_from(&rt);
    j.fixed_view_mut::<3, 3>(6, 6).copy_from(&rt);
    // ε_δ = −δb + ad_{b°} Π ε_D
    let ad_b = Se3::ad(&origin.b);
    let pi_ed = j.fixed_view::<6, 25>(0, 0).into_owned();
    let ed = ad_b * pi_ed;
    j.fixed_view_mut::<6, 25>(idx::BIAS_W, 0).copy_from(&ed);
    for i in 0..6 {
        j[(idx::BIAS_W + i, 9 + i)] -= 1.0;
    }
    // ε_E = Ad_{S°⁻¹} Υ ε_D + s
    let mut ups = SMatrix::<f64, 6, 25>::zeros();
    ups.fixed_view_mut::<3, 25>(0, 0).copy_from(&j.fixed_view::<3, 25>(0, 0));
    ups.fixed_view_mut::<3, 25>(3, 0).copy_from(&j.fixed_view::<3, 25>(6, 0));
    let ee = origin.s.inverse().adjoint() * ups;
    j.fixed_view_mut::<6, 25>(idx::EXTR, 0).copy_from(&ee);
    for i in 0..6 {
        j[(idx::EXTR + i, 15 + i)] += 1.0;
    }
    // ε_L = (δfx/fx, δfy/fy, δcx/fx, δcy/fy)
    let k = &origin.k;
    j[(21, 21)] = 1.0 / k.fx;
    j[(22, 22)] = 1.0 / k.fy;
    j[(23, 23)] = 1.0 / k.fx;
    j[(24, 24)] = 1.0 / k.fy;
    j
}

/// `Σ_ε = J Σ_phys Jᵀ` at the origin.
pub fn initial_covariance(origin: &SystemState, std: &InitialStd) -> Matrix25 {
    let j = physical_to_normal_jacobian(origin);
    let s = j * std.physical_covariance() * j.transpose();
    (s + s.transpose()) * 0.5
}

/// A frozen copy of `Ê` taken at an image stamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloneEntry {
    pub stamp: f64,
    pub e: Se3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub origin: SystemState,
    pub xhat: SymElement,
    /// Clones ordered by strictly increasing stamp.
    pub clones: Vec<CloneEntry>,
    pub cov: DMatrix<f64>,
    pub stamp: f64,
}

/// Offset of clone `i` in the error vector.
pub fn clone_offset(i: usize) -> usize {
    idx::CORE + 6 * i
}

impl FilterState {
    /// Filter at `X̂ = I` with the origin as the initial estimate.
    pub fn new(origin: SystemState, cov: Matrix25, stamp: f64) -> Result<Self> {
        let state = Self {
            origin,
            xhat: SymElement::identity(),
            clones: Vec::new(),
            cov: DMatrix::from_iterator(25, 25, cov.iter().copied()),
            stamp,
        };
        state.check_invariants()?;
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        clone_offset(self.clones.len())
    }

    /// `ξ̂ = φ(X̂, ξ°)`.
    pub fn estimate(&self) -> SystemState {
        phi(&self.xhat, &self.origin)
    }

    pub fn clone_index(&self, stamp: f64) -> Option<usize> {
        self.clones.iter().position(|c| c.stamp == stamp)
    }

    /// Camera pose of clone `i` in the global frame, `Θ(T°) S° Ê_i`.
    pub fn clone_camera_pose(&self, i: usize) -> Se3 {
        self.origin.camera_pose().compose(&self.clones[i].e)
    }

    pub fn core_cov(&self) -> Matrix25 {
        Matrix25::from_iterator(self.cov.view((0, 0), (25, 25)).iter().copied())
    }

    /// Marginal covariance of `(ρ_R, ρ_p)`.
    pub fn pose_covariance(&self) -> Matrix6 {
        let rows = [0, 1, 2, 6, 7, 8];
        Matrix6::from_fn(|i, j| self.cov[(rows[i], rows[j])])
    }

    pub fn check_invariants(&self) -> Result<()> {
        let n = self.dim();
        if self.cov.nrows() != n || self.cov.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "covariance is {}x{} but {} clones need {n}x{n}",
                self.cov.nrows(),
                self.cov.ncols(),
                self.clones.len()
            )));
        }
        if self.clones.windows(2).any(|w| w[1].stamp <= w[0].stamp) {
            return Err(Error::InvalidArgument("clone stamps must increase strictly".into()));
        }
        let asym = (&self.cov - self.cov.transpose()).abs().max();
        let scale = self.cov.abs().max().max(1.0);
        if asym > 1e-9 * scale {
            return Err(Error::InvalidArgument(format!("covariance asymmetry {asym:e}")));
        }
        Ok(())
    }

    /// Smallest eigenvalue of the covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }
}

/// Core normal coordinates `ε = log(solve(ξ°, φ(X̂⁻¹, ξ)))` of a true state.
pub fn normal_coords(state: &FilterState, xi_true: &SystemState) -> Result<Vector25> {
    let e = phi(&state.xhat.inverse(), xi_true);
    solve_group_element(&state.origin, &e).log()
}

/// Inverse chart: the true state whose normal coordinates are `eps`.
pub fn normal_coords_inv(state: &FilterState, eps: &Vector25) -> SystemState {
    phi(&SymElement::exp(eps).compose(&state.xhat), &state.origin)
}

/// Settings shared by every filter operation.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub noise: NoiseSpec,
    pub grav: GravitySpec,
    pub max_clones: usize,
    pub tri: TriangulationConfig,
    /// Quantile of the χ² gate; `None` disables gating.
    pub gate_quantile: Option<f64>,
    /// Compress stacked systems with more rows than states by QR.
    pub qr_compress: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            noise: NoiseSpec::euroc(),
            grav: GravitySpec::default(),
            max_clones: 11,
            tri: TriangulationConfig::default(),
            gate_quantile: Some(0.95),
            qr_compress: true,
        }
    }
}

/// Gauge directions of the error: global yaw and the three global
/// translations, as columns in the full error space of `state`.
///
/// A change of global frame `H` moves the true group element to `Y X` with a
/// constant `Y`, so these directions do not depend on time or on `X̂`.
pub fn gauge_directions(state: &FilterState) -> DMatrix<f64> {
    let o = &state.origin;
    let n = state.dim();
    let mut out = DMatrix::zeros(n, 4);
    let to_inv = o.t.inverse().adjoint();
    let cam_inv = o.camera_pose().inverse().adjoint();
    for (col, eta6) in [
        Vector6::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0),
        Vector6::new(0.0, 0.0, 0.0, 1.0, 0.0, 0.0),
        Vector6::new(0.0, 0.0, 0.0, 0.0, 1.0, 0.0),
        Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0),
    ]
    .iter()
    .enumerate()
    {
        // η as an se₂(3) element with zero velocity part.
        let mut eta = crate::lie::Vector9::zeros();
        eta.fixed_rows_mut::<3>(0).copy_from(&eta6.fixed_rows::<3>(0));
        eta.fixed_rows_mut::<3>(6).copy_from(&eta6.fixed_rows::<3>(3));
        let ed = to_inv * eta;
        let edelta = Se3::ad(&o.b) * crate::lie::pi_big(&ed);
        let ee = cam_inv * eta6;
        let mut v = DMatrix::zeros(n, 1);
        v.view_mut((0, 0), (9, 1)).copy_from(&ed);
        v.view_mut((idx::BIAS_W, 0), (6, 1)).copy_from(&edelta);
        v.view_mut((idx::EXTR, 0), (6, 1)).copy_from(&ee);
        for i in 0..state.clones.len() {
            v.view_mut((clone_offset(i), 0), (6, 1)).copy_from(&ee);
        }
        out.set_column(col, &v.column(0));
    }
    out
}

/// `1 / (nᵀ Σ⁺ n)` for each gauge direction `n`: the variance left along
/// `n` once every other direction is known.
///
/// The pseudo-inverse is needed because a fresh clone duplicates `ε_E` and
/// leaves `Σ` singular; the gauge directions are orthogonal to that null space.
pub fn gauge_variances(state: &FilterState) -> [f64; 4] {
    let n = gauge_directions(state);
    let sym = (&state.cov + state.cov.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let tol = 1e-12 * eig.eigenvalues.abs().max();
    let inv = eig.eigenvalues.map(|l| if l > tol { 1.0 / l } else { 0.0 });
    let proj = eig.eigenvectors.transpose() * &n;
    let mut out = [0.0; 4];
    for (k, o) in out.iter_mut().enumerate() {
        let info: f64 = proj.column(k).iter().zip(inv.iter()).map(|(p, l)| p * p * l).sum();
        *o = 1.0 / info;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::Se23;

    pub(crate) fn sample_origin() -> SystemState {
        SystemState {
            t: Se23::new(
                So3::exp(&Vector3::new(0.1, -0.2, 0.3)),
                Vector3::new(0.5, -0.3, 0.1),
                Vector3::new(1.0, 2.0, 0.5),
            ),
            b: Vector6::new(0.01, -0.02, 0.005, 0.1, -0.05, 0.02),
            s: Se3::new(So3::exp(&Vector3::new(-1.2, 0.0, -1.2)), Vector3::new(0.05, 0.01, -0.02)),
            k: Intrinsics::new(400.0, 410.0, 320.0, 240.0).unwrap(),
        }
    }

    #[test]
    fn normal_coords_vanish_at_estimate() {
        let origin = sample_origin();
        let st = FilterState::new(origin, Matrix25::identity(), 0.0).unwrap();
        assert!(normal_coords(&st, &st.estimate()).unwrap().norm() < 1e-12);
    }

    #[test]
    fn physical_jacobian_is_first_order_map() {
        let origin = sample_origin();
        let st = FilterState::new(origin, Matrix25::identity(), 0.0).unwrap();
        let j = physical_to_normal_jacobian(&origin);
        let d = Vector25::from_fn(|i, _| ((i * 7 % 11) as f64 - 5.0) * 1e-6);
        let xi = perturb_state(&origin, &d).unwrap();
        let eps = normal_coords(&st, &xi).unwrap();
        assert!((eps - j * d).norm() < 1e-9);
    }

    #[test]
    fn noise_validation() {
        assert!(NoiseSpec::isotropic(-1.0, 0.0, 0.0, 0.0, 1.0).is_err());
        assert_eq!(NoiseSpec::zero().qc(), Matrix12::zeros());
        let mut std = InitialStd::default();
        assert!(std.validate().is_ok());
        std.position = 0.0;
        assert!(std.validate().is_err());
    }

    #[test]
    fn pose_covariance_picks_rotation_and_position() {
        let origin = sample_origin();
        let d = Vector25::from_fn(|i, _| 1.0 + i as f64);
        let st = FilterState::new(origin, Matrix25::from_diagonal(&d), 0.0).unwrap();
        let p = st.pose_covariance();
        assert_eq!(p.diagonal(), Vector6::new(1.0, 2.0, 3.0, 7.0, 8.0, 9.0));
    }
}
