//! Accuracy and consistency metrics.

use crate::error::{Error, Result};
use crate::lie::{Intrinsics, LieGroup, Matrix6, Se3, Vector6};

/// One estimator run sampled at its camera stamps.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub stamps: Vec<f64>,
    pub est_poses: Vec<Se3>,
    pub est_calib: Vec<(Se3, Intrinsics)>,
    /// Marginal covariance of `(ρ_R, ρ_p)`.
    pub pose_covs: Vec<Matrix6>,
    pub truth_poses: Vec<Se3>,
    /// IMU pose of the filter origin.
    pub origin: Se3,
}

/// `log(P̊⁻¹ P P̂⁻¹ P̊)`, ordered `(rotation, translation)`.
pub fn equivariant_pose_error(truth: &Se3, est: &Se3, origin: &Se3) -> Result<Vector6> {
    origin
        .inverse()
        .compose(truth)
        .compose(&est.inverse())
        .compose(origin)
        .log()
}

/// Nearest-neighbour association within `tol`; returns index pairs and the
/// number of unmatched query stamps. Both inputs must be sorted.
pub fn associate(query: &[f64], reference: &[f64], tol: f64) -> (Vec<(usize, usize)>, usize) {
    let mut pairs = Vec::new();
    let mut unmatched = 0;
    let mut j = 0;
    for (i, t) in query.iter().enumerate() {
        while j + 1 < reference.len() && (reference[j + 1] - t).abs() <= (reference[j] - t).abs() {
            j += 1;
        }
        if !reference.is_empty() && (reference[j] - t).abs() <= tol {
            pairs.push((i, j));
        } else {
            unmatched += 1;
        }
    }
    (pairs, unmatched)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anees {
    /// `(stamp, ANEES over runs)`.
    pub series: Vec<(f64, f64)>,
    /// Time average of the series.
    pub average: f64,
    /// Run-stamp pairs left out for an ill-conditioned covariance.
    pub skipped: usize,
}

/// Pose ANEES `(1/Mn) Σ εᵢᵀ Σᵢ⁻¹ εᵢ` with `n = 6`, per stamp and averaged.
///
/// Runs are matched by stamp index; all runs must share the first run's stamps.
pub fn anees(runs: &[RunRecord]) -> Result<Anees> {
    let first = runs.first().ok_or_else(|| Error::InvalidArgument("ANEES needs at least one run".into()))?;
    for r in runs {
        if r.stamps.len() != first.stamps.len() || r.est_poses.len() != r.stamps.len() {
            return Err(Error::InvalidArgument("runs must share their stamps".into()));
        }
    }
    let mut skipped = 0;
    let mut series = Vec::with_capacity(first.stamps.len());
    for k in 0..first.stamps.len() {
        let mut sum = 0.0;
        let mut m = 0usize;
        for r in runs {
            let cov = &r.pose_covs[k];
            let eig = cov.symmetric_eigenvalues();
            let (lo, hi) = (eig.min(), eig.max());
            if !(lo > 0.0) || hi / lo > 1e12 {
                skipped += 1;
                continue;
            }
            let e = equivariant_pose_error(&r.truth_poses[k], &r.est_poses[k], &r.origin)?;
            let chol = cov.cholesky().ok_or_else(|| Error::InvalidArgument("covariance not PD".into()))?;
            sum += e.dot(&chol.solve(&e));
            m += 1;
        }
        if m > 0 {
            series.push((first.stamps[k], sum / (6.0 * m as f64)));
        }
    }
    let average = if series.is_empty() {
        f64::NAN
    } else {
        series.iter().map(|(_, v)| v).sum::<f64>() / series.len() as f64
    };
    Ok(Anees { series, average, skipped })
}

/// Estimate left-aligned so that its first pose equals the first true pose.
pub fn align_initial(truth: &[Se3], est: &[Se3]) -> Vec<Se3> {
    if truth.is_empty() || est.is_empty() {
        return est.to_vec();
    }
    let h = truth[0].compose(&est[0].inverse());
    est.iter().map(|p| h.compose(p)).collect()
}

/// `(attitude [rad], position [m])` errors of corresponding poses.
pub fn pose_errors(truth: &[Se3], est: &[Se3]) -> Vec<(f64, f64)> {
    truth
        .iter()
        .zip(est)
        .map(|(t, e)| {
            let rot = t.rot.inverse().compose(&e.rot).angle();
            (rot, (t.trans - e.trans).norm())
        })
        .collect()
}

fn rmse(errors: &[(f64, f64)]) -> (f64, f64) {
    let n = errors.len().max(1) as f64;
    let (a, p) = errors.iter().fold((0.0, 0.0), |(a, p), (ea, ep)| (a + ea * ea, p + ep * ep));
    ((a / n).sqrt(), (p / n).sqrt())
}

/// ATE RMSE after alignment with the initial state.
pub fn ate_rmse(run: &RunRecord) -> Result<(f64, f64)> {
    if run.stamps.len() < 2 {
        return Err(Error::InvalidArgument("ATE needs at least two stamps".into()));
    }
    Ok(ate_rmse_poses(&run.truth_poses, &run.est_poses))
}

pub fn ate_rmse_poses(truth: &[Se3], est: &[Se3]) -> (f64, f64) {
    rmse(&pose_errors(truth, &align_initial(truth, est)))
}

/// RMSE of an already aligned estimate.
pub fn rmse_aligned(truth: &[Se3], aligned: &[Se3]) -> (f64, f64) {
    rmse(&pose_errors(truth, aligned))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convergence {
    Converged,
    Diverged,
}

/// Diverged iff any aligned position error exceeds the threshold.
pub fn classify_convergence(run: &RunRecord, pos_threshold_m: f64) -> Convergence {
    let aligned = align_initial(&run.truth_poses, &run.est_poses);
    let worst = pose_errors(&run.truth_poses, &aligned).iter().map(|e| e.1).fold(0.0, f64::max);
    if worst > pos_threshold_m || worst.is_nan() {
        Convergence::Diverged
    } else {
        Convergence::Converged
    }
}

/// `(rotation [deg], translation [m])` error of an extrinsic estimate.
pub fn extrinsic_error(truth: &Se3, est: &Se3) -> (f64, f64) {
    let rel = truth.inverse().compose(est);
    (rel.rot.angle().to_degrees(), (truth.trans - est.trans).norm())
}

/// Least-squares slope of `(x, y)` samples.
pub fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 0.0;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 { 0.0 } else { sxy / sxx }
}
