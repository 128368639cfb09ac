use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use super::CloneEntry;
use crate::error::{Error, Result};
use crate::lie::{d_pi_z1, pi_z1, Intrinsics, LieGroup, Se3, DEPTH_EPS};

/// Observations of one landmark, one per image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrack {
    pub id: u64,
    /// `(stamp [s], pixel)` with strictly increasing stamps.
    pub obs: Vec<(f64, Vector2<f64>)>,
}

impl FeatureTrack {
    pub fn new(id: u64) -> Self {
        Self { id, obs: Vec::new() }
    }

    pub fn push(&mut self, stamp: f64, uv: Vector2<f64>) -> Result<()> {
        if let Some((last, _)) = self.obs.last() {
            if stamp <= *last {
                return Err(Error::InvalidArgument(format!(
                    "track {} observation at {stamp} s does not follow {last} s",
                    self.id
                )));
            }
        }
        self.obs.push((stamp, uv));
        Ok(())
    }
}

/// A landmark in anchored inverse depth: `z = (x/z, y/z, 1/z)` of the point
/// `a_f` expressed in the anchor camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchoredFeature {
    pub anchor_stamp: f64,
    pub z: Vector3<f64>,
    pub a_f: Vector3<f64>,
}

impl AnchoredFeature {
    pub fn from_z(anchor_stamp: f64, z: Vector3<f64>) -> Result<Self> {
        if !(z.z > 0.0) {
            return Err(Error::NegativeDepth(format!("inverse depth {} 1/m", z.z)));
        }
        Ok(Self { anchor_stamp, z, a_f: Vector3::new(z.x / z.z, z.y / z.z, 1.0 / z.z) })
    }
}

/// `ς`: global point to anchored inverse depth given the anchor camera pose.
pub fn varsigma(anchor_pose: &Se3, p_f: &Vector3<f64>) -> Result<Vector3<f64>> {
    let a = anchor_pose.inverse().act(p_f);
    if a.z <= DEPTH_EPS {
        return Err(Error::DegenerateDepth { depth: a.z, min: DEPTH_EPS });
    }
    Ok(Vector3::new(a.x / a.z, a.y / a.z, 1.0 / a.z))
}

/// `ς⁻¹`: anchored inverse depth to a global point.
pub fn varsigma_inv(anchor_pose: &Se3, z: &Vector3<f64>) -> Vector3<f64> {
    anchor_pose.act(&(Vector3::new(z.x, z.y, 1.0) / z.z))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangulationConfig {
    pub min_obs: usize,
    /// Smallest admissible angle between the anchor ray and another ray [deg].
    pub min_parallax_deg: f64,
    pub max_iterations: usize,
    pub step_tol: f64,
    pub cost_tol: f64,
    /// Admissible depth range in the anchor camera [m].
    pub min_depth: f64,
    pub max_depth: f64,
}

impl Default for TriangulationConfig {
    fn default() -> Self {
        Self {
            min_obs: 3,
            min_parallax_deg: 1.0,
            max_iterations: 20,
            step_tol: 1e-10,
            cost_tol: 1e-12,
            min_depth: 0.1,
            max_depth: 200.0,
        }
    }
}

struct View {
    /// Pose of the observing camera in the anchor camera.
    rel: Se3,
    /// Normalized image coordinates.
    m: Vector2<f64>,
}

fn reprojection(views: &[View], z: &Vector3<f64>) -> Result<f64> {
    let mut cost = 0.0;
    for v in views {
        let q = scaled_point(v, z);
        if q.z <= DEPTH_EPS {
            return Err(Error::NegativeDepth(format!("feature behind a camera, depth {:e}", q.z)));
        }
        let p = pi_z1(&q)?;
        cost += (v.m - Vector2::new(p.x, p.y)).norm_squared();
    }
    Ok(cost)
}

/// The point in the view's camera scaled by the inverse depth `z₂`, which is
/// affine in `z` and projects to the same pixel.
fn scaled_point(v: &View, z: &Vector3<f64>) -> Vector3<f64> {
    let rt = v.rel.rot.inverse();
    rt.act(&(Vector3::new(z.x, z.y, 1.0) - v.rel.trans * z.z))
}

/// Triangulates a track over the clone window.
///
/// The camera poses of the clones are `Θ(T°) S° Ê_i`, so relative poses only
/// involve `Ê_i` and the result does not depend on the global frame.
pub fn triangulate(
    track: &FeatureTrack,
    clones: &[CloneEntry],
    k_hat: &Intrinsics,
    cfg: &TriangulationConfig,
) -> Result<AnchoredFeature> {
    if track.obs.len() < cfg.min_obs {
        return Err(Error::InvalidArgument(format!(
            "track {} has {} observations, {} needed",
            track.id,
            track.obs.len(),
            cfg.min_obs
        )));
    }
    let pose_at = |stamp: f64| -> Result<Se3> {
        clones
            .iter()
            .find(|c| c.stamp == stamp)
            .map(|c| c.e)
            .ok_or_else(|| Error::InvalidArgument(format!("no clone at stamp {stamp} s")))
    };
    let anchor_stamp = track.obs[0].0;
    let anchor_inv = pose_at(anchor_stamp)?.inverse();
    let k_inv = k_hat.inverse();
    let mut views = Vec::with_capacity(track.obs.len());
    for (stamp, uv) in &track.obs {
        let rel = anchor_inv.compose(&pose_at(*stamp)?);
        let m = k_inv.matrix() * Vector3::new(uv.x, uv.y, 1.0);
        views.push(View { rel, m: Vector2::new(m.x, m.y) });
    }

    // Parallax between the anchor ray and every other ray, in the anchor frame.
    let bearing = |v: &View| v.rel.rot.act(&Vector3::new(v.m.x, v.m.y, 1.0).normalize());
    let b0 = bearing(&views[0]);
    let parallax = views[1..]
        .iter()
        .map(|v| b0.dot(&bearing(v)).clamp(-1.0, 1.0).acos())
        .fold(0.0, f64::max);
    if parallax.to_degrees() < cfg.min_parallax_deg {
        return Err(Error::InsufficientParallax(format!(
            "track {} subtends {:.3} deg, {} deg needed",
            track.id,
            parallax.to_degrees(),
            cfg.min_parallax_deg
        )));
    }

    // Closest point to all rays.
    let mut lhs = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for v in &views {
        let b = bearing(v);
        let proj = Matrix3::identity() - b * b.transpose();
        lhs += proj;
        rhs += proj * v.rel.trans;
    }
    let a0 = lhs.lu().solve(&rhs).ok_or_else(|| {
        Error::InsufficientParallax(format!("track {}: rays are parallel", track.id))
    })?;
    if a0.z <= cfg.min_depth {
        return Err(Error::NegativeDepth(format!(
            "track {} initial depth {:.4} m below {} m",
            track.id, a0.z, cfg.min_depth
        )));
    }

    let mut z = Vector3::new(a0.x / a0.z, a0.y / a0.z, 1.0 / a0.z);
    let mut cost = reprojection(&views, &z)?;
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        let mut h = Matrix3::zeros();
        let mut g = Vector3::zeros();
        for v in &views {
            let q = scaled_point(v, &z);
            let dpi = d_pi_z1(&q)?;
            let rt = v.rel.rot.inverse().matrix().to_owned();
            let mut dq = Matrix3::zeros();
            dq.set_column(0, &rt.column(0));
            dq.set_column(1, &rt.column(1));
            dq.set_column(2, &(-(rt * v.rel.trans)));
            let jac3 = dpi * dq;
            let jac = jac3.fixed_rows::<2>(0).into_owned();
            let p = pi_z1(&q)?;
            let r = v.m - Vector2::new(p.x, p.y);
            h += jac.transpose() * jac;
            g += jac.transpose() * r;
        }
        let step = h.lu().solve(&g).ok_or_else(|| {
            Error::InsufficientParallax(format!("track {}: singular normal equations", track.id))
        })?;
        // Halve the step until the cost does not increase.
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..8 {
            let cand = z + step * t;
            if let Ok(c) = reprojection(&views, &cand) {
                if c <= cost {
                    accepted = Some((cand, c));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((cand, c)) = accepted else {
            // No descent left: the current iterate is a minimum to working precision.
            converged = true;
            break;
        };
        let dz = (cand - z).norm();
        let dc = cost - c;
        z = cand;
        cost = c;
        if dz <= cfg.step_tol * (1.0 + z.norm()) || dc <= cfg.cost_tol * cost.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations: cfg.max_iterations });
    }
    let depth = 1.0 / z.z;
    if !(z.z > 0.0) || depth < cfg.min_depth || depth > cfg.max_depth {
        return Err(Error::NegativeDepth(format!(
            "track {} depth {depth:.4} m outside ({}, {}) m",
            track.id, cfg.min_depth, cfg.max_depth
        )));
    }
    AnchoredFeature::from_z(anchor_stamp, z)
}

/// `∂a_f/∂z = (1/z₂)[[I₂, −z₁/z₂], [0, −1/z₂]]`.
pub(crate) fn point_jacobian(z: &Vector3<f64>) -> Matrix3<f64> {
    let iz = 1.0 / z.z;
    let mut m = Matrix3::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&(Matrix2::identity() * iz));
    m[(0, 2)] = -z.x * iz * iz;
    m[(1, 2)] = -z.y * iz * iz;
    m[(2, 2)] = -iz * iz;
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::So3;

    fn k() -> Intrinsics {
        Intrinsics::new(400.0, 400.0, 320.0, 240.0).unwrap()
    }

    fn project(pose: &Se3, p: &Vector3<f64>) -> Vector2<f64> {
        let q = pose.inverse().act(p);
        let uv = k().matrix() * (q / q.z);
        Vector2::new(uv.x, uv.y)
    }

    fn scene(baseline: f64) -> (Vec<CloneEntry>, FeatureTrack, Vector3<f64>) {
        let p = Vector3::new(0.3, -0.2, 4.0);
        let mut clones = Vec::new();
        let mut track = FeatureTrack::new(7);
        for i in 0..5 {
            let s = i as f64 / 4.0 - 0.5;
            let pose = Se3::new(So3::rot_y(0.02 * s), Vector3::new(baseline * s, 0.1 * s * s, 0.0));
            clones.push(CloneEntry { stamp: i as f64, e: pose });
            track.push(i as f64, project(&pose, &p)).unwrap();
        }
        (clones, track, p)
    }

    #[test]
    fn noiseless_recovery() {
        let (clones, track, p) = scene(1.0);
        let f = triangulate(&track, &clones, &k(), &TriangulationConfig::default()).unwrap();
        let truth = clones[0].e.inverse().act(&p);
        assert!((f.a_f - truth).norm() < 1e-8, "{}", (f.a_f - truth).norm());
    }

    #[test]
    fn zero_baseline_rejected() {
        let (mut clones, mut track, _) = scene(1.0);
        for (i, c) in clones.iter_mut().enumerate() {
            c.e = Se3::identity();
            track.obs[i].1 = track.obs[0].1;
        }
        let r = triangulate(&track, &clones, &k(), &TriangulationConfig::default());
        assert!(matches!(r, Err(Error::InsufficientParallax(_))));
    }

    #[test]
    fn varsigma_roundtrip() {
        let anchor = Se3::new(So3::exp(&Vector3::new(0.3, 0.1, -0.2)), Vector3::new(1.0, 2.0, 3.0));
        let p = anchor.act(&Vector3::new(0.5, -0.4, 3.0));
        let z = varsigma(&anchor, &p).unwrap();
        assert!((varsigma_inv(&anchor, &z) - p).norm() < 1e-12);
        let f = AnchoredFeature::from_z(0.0, z).unwrap();
        assert!((f.a_f - anchor.inverse().act(&p)).norm() < 1e-12);
    }

    #[test]
    fn point_jacobian_matches_differences() {
        let z = Vector3::new(0.1, -0.3, 0.25);
        let a = |z: &Vector3<f64>| Vector3::new(z.x / z.z, z.y / z.z, 1.0 / z.z);
        let j = point_jacobian(&z);
        let h = 1e-6;
        for c in 0..3 {
            let mut e = Vector3::zeros();
            e[c] = h;
            let fd = (a(&(z + e)) - a(&(z - e))) / (2.0 * h);
            assert!((fd - j.column(c)).norm() < 1e-6);
        }
    }

    #[test]
    fn short_track_rejected() {
        let (clones, mut track, _) = scene(1.0);
        track.obs.truncate(2);
        assert!(triangulate(&track, &clones, &k(), &TriangulationConfig::default()).is_err());
        assert!(track.push(0.5, Vector2::zeros()).is_err());
    }
}
