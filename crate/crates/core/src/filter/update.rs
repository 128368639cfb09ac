use nalgebra::{DMatrix, DVector, Matrix2x3, Vector2, QR};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::triangulate::point_jacobian;
use super::{
    clone_offset, clone_state, marginalize, triangulate, AnchoredFeature, FeatureTrack,
    FilterConfig, FilterState,
};
use crate::error::{Error, Result};
use crate::lie::{d_pi_z1, pi_z1, skew, xi_map, LieGroup, Se3, Vector6};
use crate::symmetry::{idx, SymElement, Vector25};

/// Largest innovation-covariance condition number accepted by the update.
const MAX_CONDITION: f64 = 1e12;

/// Linearization of one pixel observation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureJacobians {
    /// `2 × dim` block over the error coordinates.
    pub ct: DMatrix<f64>,
    pub cf: Matrix2x3<f64>,
    pub r: Vector2<f64>,
}

/// Jacobians and residual of the observation `uv` of `feat` at `obs_stamp`.
///
/// The predicted camera-frame point is `Ê⁻¹ ᴬÊ a_f`, with `Ê` the clone at the
/// observation stamp and `ᴬÊ` the anchor clone.
pub fn feature_jacobians(
    state: &FilterState,
    feat: &AnchoredFeature,
    obs_stamp: f64,
    uv: &Vector2<f64>,
) -> Result<FeatureJacobians> {
    let missing = |s: f64| Error::InvalidArgument(format!("no clone at stamp {s} s"));
    let j = state.clone_index(obs_stamp).ok_or_else(|| missing(obs_stamp))?;
    let a = state.clone_index(feat.anchor_stamp).ok_or_else(|| missing(feat.anchor_stamp))?;
    let e_j_inv = state.clones[j].e.inverse();
    let e_a = state.clones[a].e;
    let rel = e_j_inv.compose(&e_a);
    let q = rel.act(&feat.a_f);
    let dpi = d_pi_z1(&q)?;
    let pq = pi_z1(&q)?;

    let l_hat = state.xhat.l;
    let k_o = state.origin.k.matrix();
    let k_hat = k_o * l_hat.matrix();
    let kd = k_hat * dpi;

    let cf3 = kd * rel.rot.matrix() * point_jacobian(&feat.z);
    let cf = cf3.fixed_rows::<2>(0).into_owned();

    let p = e_a.act(&feat.a_f);
    let mut dp = nalgebra::SMatrix::<f64, 3, 6>::zeros();
    dp.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&p));
    dp.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-nalgebra::Matrix3::identity()));
    let ce3 = kd * e_j_inv.rot.matrix() * dp;
    let ce = ce3.fixed_rows::<2>(0).into_owned();

    let cl3 = k_o * xi_map(&(l_hat.matrix() * pq));
    let cl = cl3.fixed_rows::<2>(0).into_owned();

    let mut ct = DMatrix::zeros(2, state.dim());
    let oj = clone_offset(j);
    let oa = clone_offset(a);
    let mut add = |off: usize, m: &nalgebra::SMatrix<f64, 2, 6>| {
        let cur = ct.view((0, off), (2, 6)).into_owned();
        ct.view_mut((0, off), (2, 6)).copy_from(&(cur + m));
    };
    add(oj, &ce);
    add(oa, &(-ce));
    ct.view_mut((0, idx::INTR), (2, 4)).copy_from(&cl);

    let pred = k_hat * pq;
    let r = uv - Vector2::new(pred.x, pred.y);
    Ok(FeatureJacobians { ct, cf, r })
}

/// Projects a stacked system onto the left nullspace of `cf`.
///
/// Returns the projected Jacobian and residual; their row count is
/// `rows − rank(cf)`.
pub fn nullspace_project(
    ct: &DMatrix<f64>,
    cf: &DMatrix<f64>,
    r: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let rows = cf.nrows();
    if ct.nrows() != rows || r.len() != rows {
        return Err(Error::InvalidArgument("stacked blocks disagree in row count".into()));
    }
    let qr = QR::new(cf.clone());
    let rd = qr.r();
    let diag_max = (0..rd.nrows().min(rd.ncols())).map(|i| rd[(i, i)].abs()).fold(0.0, f64::max);
    let rank = (0..rd.nrows().min(rd.ncols()))
        .filter(|&i| rd[(i, i)].abs() > 1e-12 * diag_max.max(f64::MIN_POSITIVE))
        .count();
    if rank < cf.ncols() {
        // Rank-deficient columns break the triangular layout of the plain QR;
        // fall back to an SVD basis of the left nullspace.
        let svd = cf.clone().svd(true, false);
        let u = svd.u.expect("requested U");
        let full = complete_basis(&u, rank);
        let n = full.transpose();
        return Ok((&n * ct, &n * r));
    }
    if rows <= rank {
        return Ok((DMatrix::zeros(0, ct.ncols()), DVector::zeros(0)));
    }
    let mut h = ct.clone();
    let mut rr = r.clone();
    qr.q_tr_mul(&mut h);
    qr.q_tr_mul(&mut rr);
    Ok((h.rows(rank, rows - rank).into_owned(), rr.rows(rank, rows - rank).into_owned()))
}

/// Orthonormal complement of the first `rank` columns of `u` in `ℝ^rows`.
fn complete_basis(u: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let rows = u.nrows();
    let mut basis: Vec<DVector<f64>> = (0..rank.min(u.ncols())).map(|i| u.column(i).into_owned()).collect();
    let mut out = Vec::new();
    for i in 0..rows {
        let mut v = DVector::zeros(rows);
        v[i] = 1.0;
        for b in &basis {
            let d = b.dot(&v);
            v -= b * d;
        }
        let n = v.norm();
        if n > 1e-8 {
            v /= n;
            basis.push(v.clone());
            out.push(v);
        }
        if basis.len() == rows {
            break;
        }
    }
    DMatrix::from_columns(&out)
}

/// Replaces a tall system by the equivalent square one from its QR factorization.
pub fn qr_compress(h: &DMatrix<f64>, r: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (m, n) = h.shape();
    if m <= n {
        return (h.clone(), r.clone());
    }
    let qr = QR::new(h.clone());
    let mut rr = r.clone();
    qr.q_tr_mul(&mut rr);
    (qr.r(), rr.rows(0, n).into_owned())
}

/// `χ²` quantile for `dof` degrees of freedom.
pub fn chi2_threshold(dof: usize, quantile: f64) -> f64 {
    ChiSquared::new(dof as f64).expect("positive degrees of freedom").inverse_cdf(quantile)
}

/// Mahalanobis gate on a projected residual.
pub fn chi2_gate(
    ct: &DMatrix<f64>,
    r: &DVector<f64>,
    cov: &DMatrix<f64>,
    sigma_px: f64,
    quantile: f64,
) -> bool {
    if r.is_empty() {
        return true;
    }
    let s = ct * cov * ct.transpose() + DMatrix::identity(r.len(), r.len()) * sigma_px.powi(2);
    let Some(chol) = s.cholesky() else { return false };
    let d2 = r.dot(&chol.solve(r));
    d2 <= chi2_threshold(r.len(), quantile)
}

/// EqF correction in normal coordinates with a Joseph-form covariance update.
///
/// The innovation `Δ` is the posterior mean of `ε`, and since the true element
/// is `exp(ε) X̂` the estimate moves to `exp(Δ) X̂`.
pub fn eqf_update(
    state: &FilterState,
    h: &DMatrix<f64>,
    r: &DVector<f64>,
    sigma_px: f64,
) -> Result<FilterState> {
    let n = state.dim();
    if h.ncols() != n || h.nrows() != r.len() {
        return Err(Error::InvalidArgument(format!(
            "update expects {}x{n} Jacobian, got {}x{}",
            r.len(),
            h.nrows(),
            h.ncols()
        )));
    }
    if !(sigma_px > 0.0) {
        return Err(Error::InvalidArgument(format!("pixel noise must be > 0 px, got {sigma_px}")));
    }
    if r.is_empty() {
        return Ok(state.clone());
    }
    let m = r.len();
    let var = sigma_px * sigma_px;
    let ph = &state.cov * h.transpose();
    let s = h * &ph + DMatrix::identity(m, m) * var;
    let s = (&s + s.transpose()) * 0.5;
    let chol = s.clone().cholesky().ok_or(Error::SingularInnovation { condition: f64::INFINITY })?;
    let l_diag = chol.l_dirty().diagonal();
    let (lo, hi) = l_diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let condition = (hi / lo).powi(2);
    if condition > MAX_CONDITION {
        return Err(Error::SingularInnovation { condition });
    }
    let gain = chol.solve(&ph.transpose()).transpose();
    let delta = &gain * r;

    let ikh = DMatrix::identity(n, n) - &gain * h;
    let cov = &ikh * &state.cov * ikh.transpose() + &gain * gain.transpose() * var;
    let cov = (&cov + cov.transpose()) * 0.5;

    let core = Vector25::from_iterator(delta.rows(0, 25).iter().copied());
    let xhat = SymElement::exp(&core).compose(&state.xhat);
    let mut clones = state.clones.clone();
    for (i, c) in clones.iter_mut().enumerate() {
        let d = Vector6::from_iterator(delta.rows(clone_offset(i), 6).iter().copied());
        c.e = Se3::exp(&d).compose(&c.e);
    }
    Ok(FilterState { origin: state.origin, xhat, clones, cov, stamp: state.stamp })
}

/// Outcome of one feature in [`process_image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Used,
    Gated,
    TriangulationFailed,
    Skipped,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageReport {
    pub features_used: usize,
    pub features_gated: usize,
    pub triangulation_failures: usize,
    pub features_skipped: usize,
    /// Projected residual rows of every accepted feature, in track order.
    pub innovations: Vec<f64>,
    pub update_rows: usize,
    pub update_skipped: bool,
    pub marginalized: usize,
}

/// Stacks, projects and gates one feature. Returns the projected system.
fn feature_system(
    state: &FilterState,
    track: &FeatureTrack,
    cfg: &FilterConfig,
) -> std::result::Result<(DMatrix<f64>, DVector<f64>), UpdateOutcome> {
    let k_hat = state.estimate().k;
    let feat = triangulate(track, &state.clones, &k_hat, &cfg.tri)
        .map_err(|_| UpdateOutcome::TriangulationFailed)?;
    let m = track.obs.len();
    let n = state.dim();
    let mut ct = DMatrix::zeros(2 * m, n);
    let mut cf = DMatrix::zeros(2 * m, 3);
    let mut r = DVector::zeros(2 * m);
    for (i, (stamp, uv)) in track.obs.iter().enumerate() {
        let jac = feature_jacobians(state, &feat, *stamp, uv).map_err(|_| UpdateOutcome::Skipped)?;
        ct.view_mut((2 * i, 0), (2, n)).copy_from(&jac.ct);
        cf.view_mut((2 * i, 0), (2, 3)).copy_from(&jac.cf);
        r.rows_mut(2 * i, 2).copy_from(&jac.r);
    }
    let (h, rp) = nullspace_project(&ct, &cf, &r).map_err(|_| UpdateOutcome::Skipped)?;
    if rp.is_empty() {
        return Err(UpdateOutcome::Skipped);
    }
    if let Some(q) = cfg.gate_quantile {
        if !chi2_gate(&h, &rp, &state.cov, cfg.noise.sigma_px, q) {
            return Err(UpdateOutcome::Gated);
        }
    }
    Ok((h, rp))
}

/// Image step of the main loop: clone, update with the given mature tracks,
/// then marginalize the oldest clones beyond the window size.
pub fn process_image(
    state: &FilterState,
    stamp: f64,
    tracks: &[FeatureTrack],
    cfg: &FilterConfig,
) -> Result<(FilterState, ImageReport)> {
    if stamp < state.stamp {
        return Err(Error::InvalidArgument(format!(
            "image at {stamp} s precedes the filter stamp {} s",
            state.stamp
        )));
    }
    let mut st = if state.clone_index(stamp).is_some() {
        state.clone()
    } else {
        clone_state(state, stamp)?
    };
    let mut report = ImageReport::default();
    let n = st.dim();
    let mut blocks = Vec::new();
    for track in tracks {
        match feature_system(&st, track, cfg) {
            Ok((h, r)) => {
                report.features_used += 1;
                report.innovations.extend(r.iter().copied());
                blocks.push((h, r));
            }
            Err(UpdateOutcome::Gated) => report.features_gated += 1,
            Err(UpdateOutcome::TriangulationFailed) => report.triangulation_failures += 1,
            Err(_) => report.features_skipped += 1,
        }
    }
    if !blocks.is_empty() {
        let rows: usize = blocks.iter().map(|(_, r)| r.len()).sum();
        let mut h = DMatrix::zeros(rows, n);
        let mut r = DVector::zeros(rows);
        let mut at = 0;
        for (hb, rb) in &blocks {
            h.view_mut((at, 0), (rb.len(), n)).copy_from(hb);
            r.rows_mut(at, rb.len()).copy_from(rb);
            at += rb.len();
        }
        let (h, r) = if cfg.qr_compress { qr_compress(&h, &r) } else { (h, r) };
        report.update_rows = r.len();
        match eqf_update(&st, &h, &r, cfg.noise.sigma_px) {
            Ok(next) => st = next,
            Err(Error::SingularInnovation { .. }) => report.update_skipped = true,
            Err(e) => return Err(e),
        }
    }
    if st.clones.len() > cfg.max_clones {
        let excess = st.clones.len() - cfg.max_clones;
        let stamps: Vec<f64> = st.clones[..excess].iter().map(|c| c.stamp).collect();
        st = marginalize(&st, &stamps)?;
        report.marginalized = excess;
    }
    st.stamp = stamp;
    Ok((st, report))
}
