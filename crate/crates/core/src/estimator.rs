//! Main loop: IMU propagation between images, track bookkeeping, and the
//! image update.

use std::collections::BTreeMap;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::filter::{
    gauge_variances, process_image, propagate, FeatureTrack, FilterConfig, FilterState,
    ImageReport,
};
use crate::lie::Matrix6;
use crate::sim::ImuSample;
use crate::symmetry::{Input, SystemState};

/// Observations of one image, keyed by feature id.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub obs: Vec<(u64, Vector2<f64>)>,
}

/// Regroups tracks by stamp. Stamps come out sorted; observations within a
/// frame are ordered by feature id.
pub fn frames_from_tracks(tracks: &[FeatureTrack]) -> Vec<Frame> {
    let mut by_stamp: BTreeMap<u64, Frame> = BTreeMap::new();
    for tr in tracks {
        for (t, uv) in &tr.obs {
            // Stamps are non-negative, so the bit pattern orders like the value.
            by_stamp
                .entry(t.to_bits())
                .or_insert_with(|| Frame { t: *t, obs: Vec::new() })
                .obs
                .push((tr.id, *uv));
        }
    }
    let mut frames: Vec<Frame> = by_stamp.into_values().collect();
    for f in &mut frames {
        f.obs.sort_by_key(|o| o.0);
    }
    frames
}

/// Adds empty frames at `stamps` that carry no observation.
pub fn with_empty_frames(mut frames: Vec<Frame>, stamps: &[f64]) -> Vec<Frame> {
    for t in stamps {
        if !frames.iter().any(|f| f.t == *t) {
            frames.push(Frame { t: *t, obs: Vec::new() });
        }
    }
    frames.sort_by(|a, b| a.t.total_cmp(&b.t));
    frames
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    /// Record the gauge-direction variances before and after every image.
    pub audit_gauge: bool,
    /// Also record the propagated estimate just before every image update.
    pub record_prior: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub t: f64,
    pub state: SystemState,
    pub pose_cov: Matrix6,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeAudit {
    pub t: f64,
    /// Yaw, then x, y, z translation.
    pub before: [f64; 4],
    pub after: [f64; 4],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunCounts {
    pub images: usize,
    pub updates: usize,
    pub features_used: usize,
    pub features_gated: usize,
    pub triangulation_failures: usize,
    pub features_skipped: usize,
    pub short_tracks: usize,
    pub skipped_updates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<EstimateRow>,
    /// Pre-update estimates at the same stamps, if requested.
    pub priors: Vec<EstimateRow>,
    pub reports: Vec<ImageReport>,
    pub audit: Vec<GaugeAudit>,
    pub counts: RunCounts,
    pub final_state: FilterState,
}

fn check_sorted(name: &str, stamps: impl Iterator<Item = f64>) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for (i, t) in stamps.enumerate() {
        if !(t > prev) {
            return Err(Error::InvalidArgument(format!(
                "{name} stamps must increase strictly (entry {i}: {t} s after {prev} s)"
            )));
        }
        prev = t;
    }
    Ok(())
}

/// Propagates `st` to `t_end` over the IMU samples, holding the average of
/// consecutive samples over each interval.
fn propagate_to(
    st: &mut FilterState,
    imu: &[ImuSample],
    k: &mut usize,
    t_end: f64,
    cfg: &FilterConfig,
) -> Result<()> {
    while st.stamp < t_end {
        while *k + 1 < imu.len() && imu[*k + 1].t <= st.stamp {
            *k += 1;
        }
        let cur = &imu[*k];
        let (next_t, input) = match imu.get(*k + 1) {
            Some(nx) => (
                nx.t,
                Input::imu((cur.omega + nx.omega) * 0.5, (cur.acc + nx.acc) * 0.5),
            ),
            None => (f64::INFINITY, Input::imu(cur.omega, cur.acc)),
        };
        let end = next_t.min(t_end);
        let dt = end - st.stamp;
        if dt > 0.0 {
            *st = propagate(st, &input, dt, &cfg.noise, &cfg.grav)?;
        }
        st.stamp = end;
    }
    Ok(())
}

/// Runs the filter over a dataset.
pub fn run(
    init: FilterState,
    imu: &[ImuSample],
    frames: &[Frame],
    cfg: &FilterConfig,
    opts: &RunOptions,
) -> Result<RunOutput> {
    check_sorted("IMU", imu.iter().map(|s| s.t))?;
    check_sorted("image", frames.iter().map(|f| f.t))?;
    if imu.is_empty() {
        return Err(Error::InvalidArgument("no IMU samples".into()));
    }
    if init.stamp < imu[0].t {
        return Err(Error::InvalidArgument(format!(
            "filter starts at {} s before the first IMU sample at {} s",
            init.stamp, imu[0].t
        )));
    }
    let mut st = init;
    let mut k = 0usize;
    let mut db: BTreeMap<u64, FeatureTrack> = BTreeMap::new();
    let mut rows = Vec::new();
    let mut priors = Vec::new();
    let mut reports = Vec::new();
    let mut audit = Vec::new();
    let mut counts = RunCounts::default();

    let start = st.stamp;
    for frame in frames.iter().filter(|f| f.t >= start) {
        propagate_to(&mut st, imu, &mut k, frame.t, cfg)?;
        let before = opts.audit_gauge.then(|| gauge_variances(&st));
        if opts.record_prior {
            priors.push(EstimateRow { t: frame.t, state: st.estimate(), pose_cov: st.pose_covariance() });
        }

        let mut seen = std::collections::BTreeSet::new();
        for (id, uv) in &frame.obs {
            seen.insert(*id);
            db.entry(*id).or_insert_with(|| FeatureTrack::new(*id)).push(frame.t, *uv)?;
        }
        let mut mature: Vec<FeatureTrack> = Vec::new();
        let lost: Vec<u64> = db.keys().copied().filter(|id| !seen.contains(id)).collect();
        for id in lost {
            mature.push(db.remove(&id).expect("present"));
        }
        let after_clone = st.clones.len() + usize::from(st.clone_index(frame.t).is_none());
        if after_clone > cfg.max_clones {
            let cut = st.clones[after_clone - cfg.max_clones - 1].stamp;
            let full: Vec<u64> =
                db.iter().filter(|(_, tr)| tr.obs[0].0 <= cut).map(|(id, _)| *id).collect();
            for id in full {
                mature.push(db.remove(&id).expect("present"));
            }
        }
        mature.sort_by_key(|t| t.id);
        let before_len = mature.len();
        mature.retain(|t| t.obs.len() >= cfg.tri.min_obs);
        counts.short_tracks += before_len - mature.len();

        let (next, report) = process_image(&st, frame.t, &mature, cfg)?;
        st = next;
        counts.images += 1;
        counts.updates += usize::from(report.features_used > 0 && !report.update_skipped);
        counts.features_used += report.features_used;
        counts.features_gated += report.features_gated;
        counts.triangulation_failures += report.triangulation_failures;
        counts.features_skipped += report.features_skipped;
        counts.skipped_updates += usize::from(report.update_skipped);
        if let Some(before) = before {
            audit.push(GaugeAudit { t: frame.t, before, after: gauge_variances(&st) });
        }
        rows.push(EstimateRow { t: frame.t, state: st.estimate(), pose_cov: st.pose_covariance() });
        reports.push(report);
    }
    Ok(RunOutput { rows, priors, reports, audit, counts, final_state: st })
}
