//! Dataset files. Every table is comma-separated with `#` header lines;
//! floats are written in their shortest round-trip form, so a write, read,
//! write cycle reproduces the bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use msceqf::estimator::EstimateRow;
use msceqf::filter::FeatureTrack;
use msceqf::lie::{Intrinsics, Matrix6, Se23, Se3, So3};
use msceqf::sim::{GroundTruth, ImuSample};
use msceqf::symmetry::SystemState;
use nalgebra::{Matrix3, Vector2, Vector3, Vector6};

use crate::CliError;

pub const IMU_HEADER: &str =
    "# t [s],wx [rad/s],wy [rad/s],wz [rad/s],ax [m/s^2],ay [m/s^2],az [m/s^2]";
pub const TRACKS_HEADER: &str = "# t [s],feature_id [-],u [px],v [px]";
pub const GROUNDTRUTH_HEADER: &str = "# t [s],r11,r12,r13,r21,r22,r23,r31,r32,r33 [-],\
px [m],py [m],pz [m],vx [m/s],vy [m/s],vz [m/s],\
bwx [rad/s],bwy [rad/s],bwz [rad/s],bax [m/s^2],bay [m/s^2],baz [m/s^2]";
pub const ESTIMATE_HEADER: &str = "# t [s],r11,r12,r13,r21,r22,r23,r31,r32,r33 [-],\
px [m],py [m],pz [m],vx [m/s],vy [m/s],vz [m/s],\
bwx [rad/s],bwy [rad/s],bwz [rad/s],bax [m/s^2],bay [m/s^2],baz [m/s^2],\
s_r11,s_r12,s_r13,s_r21,s_r22,s_r23,s_r31,s_r32,s_r33 [-],s_x [m],s_y [m],s_z [m],\
fx [px],fy [px],cx [px],cy [px],\
pose covariance upper triangle row-major over (rho_R [rad], rho_p [m]) (21 entries)";
pub const CALIB_HEADER: &str = "# camera pose in the IMU frame: rotation row-major [-], translation [m]\n\
# intrinsics: fx fy cx cy [px]";

pub const ESTIMATE_COLS: usize = 59;

/// Shortest representation that parses back to the same bits.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn push_row(out: &mut String, vals: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in vals {
        if !first {
            out.push(',');
        }
        first = false;
        out.push_str(&fmt_f64(v));
    }
    out.push('\n');
}

fn rot_row(r: &So3) -> [f64; 9] {
    let m = r.matrix();
    std::array::from_fn(|i| m[(i / 3, i % 3)])
}

pub fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Data rows as `(line, fields)`; `#` lines are skipped.
pub fn records(name: &str, text: &str) -> Result<Vec<(u64, Vec<String>)>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CliError::Data(format!("{name}:{line}: {e}"))
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        out.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

fn floats(name: &str, line: u64, fields: &[String], n: usize) -> Result<Vec<f64>, CliError> {
    if fields.len() != n {
        return Err(CliError::Data(format!("{name}:{line}: expected {n} columns, got {}", fields.len())));
    }
    fields
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let v: f64 = f
                .parse()
                .map_err(|_| CliError::Data(format!("{name}:{line}: column {}: invalid number '{f}'", i + 1)))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(CliError::Data(format!("{name}:{line}: column {}: non-finite value '{f}'", i + 1)))
            }
        })
        .collect()
}

fn rotation(name: &str, line: u64, v: &[f64]) -> Result<So3, CliError> {
    So3::from_matrix(Matrix3::from_row_slice(v)).map_err(|e| CliError::Data(format!("{name}:{line}: {e}")))
}

fn intrinsics(name: &str, line: u64, v: &[f64]) -> Result<Intrinsics, CliError> {
    Intrinsics::new(v[0], v[1], v[2], v[3]).map_err(|e| CliError::Data(format!("{name}:{line}: {e}")))
}

fn increasing(name: &str, line: u64, t: f64, prev: Option<f64>) -> Result<(), CliError> {
    match prev {
        Some(p) if !(t > p) => {
            Err(CliError::Data(format!("{name}:{line}: stamp {t} s does not increase after {p} s")))
        }
        _ => Ok(()),
    }
}

pub fn write_imu(imu: &[ImuSample]) -> String {
    let mut s = format!("{IMU_HEADER}\n");
    for m in imu {
        push_row(&mut s, [m.t, m.omega.x, m.omega.y, m.omega.z, m.acc.x, m.acc.y, m.acc.z]);
    }
    s
}

pub fn read_imu(name: &str, text: &str) -> Result<Vec<ImuSample>, CliError> {
    let mut out: Vec<ImuSample> = Vec::new();
    for (line, f) in records(name, text)? {
        let v = floats(name, line, &f, 7)?;
        increasing(name, line, v[0], out.last().map(|m| m.t))?;
        out.push(ImuSample {
            t: v[0],
            omega: Vector3::new(v[1], v[2], v[3]),
            acc: Vector3::new(v[4], v[5], v[6]),
        });
    }
    Ok(out)
}

/// Rows ordered by stamp, then by feature id.
pub fn write_tracks(tracks: &[FeatureTrack]) -> String {
    let mut rows: Vec<(f64, u64, Vector2<f64>)> =
        tracks.iter().flat_map(|t| t.obs.iter().map(move |(s, uv)| (*s, t.id, *uv))).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut s = format!("{TRACKS_HEADER}\n");
    for (t, id, uv) in rows {
        let _ = writeln!(s, "{},{id},{},{}", fmt_f64(t), fmt_f64(uv.x), fmt_f64(uv.y));
    }
    s
}

/// Tracks sorted by id. Rows must be ordered by stamp and, within a stamp,
/// by strictly increasing feature id.
pub fn read_tracks(name: &str, text: &str) -> Result<Vec<FeatureTrack>, CliError> {
    let mut by_id: BTreeMap<u64, FeatureTrack> = BTreeMap::new();
    let mut prev: Option<(f64, u64)> = None;
    for (line, f) in records(name, text)? {
        if f.len() != 4 {
            return Err(CliError::Data(format!("{name}:{line}: expected 4 columns, got {}", f.len())));
        }
        let id: u64 = f[1]
            .parse()
            .map_err(|_| CliError::Data(format!("{name}:{line}: column 2: invalid feature id '{}'", f[1])))?;
        let v = floats(name, line, &[f[0].clone(), f[2].clone(), f[3].clone()], 3)?;
        let t = v[0];
        if let Some((pt, pid)) = prev {
            if t < pt || (t == pt && id <= pid) {
                return Err(CliError::Data(format!(
                    "{name}:{line}: row (t = {t} s, id = {id}) is out of order after (t = {pt} s, id = {pid})"
                )));
            }
        }
        prev = Some((t, id));
        by_id
            .entry(id)
            .or_insert_with(|| FeatureTrack::new(id))
            .push(t, Vector2::new(v[1], v[2]))
            .map_err(|e| CliError::Data(format!("{name}:{line}: {e}")))?;
    }
    Ok(by_id.into_values().collect())
}

pub fn write_groundtruth(gt: &[GroundTruth]) -> String {
    let mut s = format!("{GROUNDTRUTH_HEADER}\n");
    for g in gt {
        let mut row = vec![g.t];
        row.extend(rot_row(&g.t_pose.rot));
        row.extend(g.t_pose.b.iter());
        row.extend(g.t_pose.a.iter());
        row.extend(g.b.iter());
        push_row(&mut s, row);
    }
    s
}

pub fn read_groundtruth(name: &str, text: &str) -> Result<Vec<GroundTruth>, CliError> {
    let mut out: Vec<GroundTruth> = Vec::new();
    for (line, f) in records(name, text)? {
        let v = floats(name, line, &f, 22)?;
        increasing(name, line, v[0], out.last().map(|g| g.t))?;
        out.push(GroundTruth {
            t: v[0],
            t_pose: Se23::new(
                rotation(name, line, &v[1..10])?,
                Vector3::new(v[13], v[14], v[15]),
                Vector3::new(v[10], v[11], v[12]),
            ),
            b: Vector6::from_column_slice(&v[16..22]),
        });
    }
    Ok(out)
}

/// True and initial camera calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct Calib {
    pub true_s: Se3,
    pub true_k: Intrinsics,
    pub init_s: Se3,
    pub init_k: Intrinsics,
}

const CALIB_KEYS: [&str; 6] = [
    "true_rotation",
    "true_translation",
    "true_intrinsics",
    "initial_rotation",
    "initial_translation",
    "initial_intrinsics",
];

pub fn write_calib(c: &Calib) -> String {
    let mut s = format!("{CALIB_HEADER}\n");
    for (prefix, se3, k) in [("true", &c.true_s, &c.true_k), ("initial", &c.init_s, &c.init_k)] {
        s.push_str(&format!("{prefix}_rotation,"));
        push_row(&mut s, rot_row(&se3.rot));
        s.push_str(&format!("{prefix}_translation,"));
        push_row(&mut s, se3.trans.iter().copied());
        s.push_str(&format!("{prefix}_intrinsics,"));
        push_row(&mut s, [k.fx, k.fy, k.cx, k.cy]);
    }
    s
}

/// Keys must appear exactly once each, in the written order.
pub fn read_calib(name: &str, text: &str) -> Result<Calib, CliError> {
    let recs = records(name, text)?;
    if recs.len() != CALIB_KEYS.len() {
        return Err(CliError::Data(format!("{name}: expected {} rows, got {}", CALIB_KEYS.len(), recs.len())));
    }
    let mut vals = Vec::new();
    for ((line, f), key) in recs.iter().zip(CALIB_KEYS) {
        if f[0] != key {
            return Err(CliError::Data(format!("{name}:{line}: expected key '{key}', got '{}'", f[0])));
        }
        let n = match key.rsplit('_').next() {
            Some("rotation") => 9,
            Some("translation") => 3,
            _ => 4,
        };
        vals.push((*line, floats(name, *line, &f[1..], n)?));
    }
    let se3 = |r: &(u64, Vec<f64>), t: &(u64, Vec<f64>)| -> Result<Se3, CliError> {
        Ok(Se3::new(rotation(name, r.0, &r.1)?, Vector3::from_column_slice(&t.1)))
    };
    Ok(Calib {
        true_s: se3(&vals[0], &vals[1])?,
        true_k: intrinsics(name, vals[2].0, &vals[2].1)?,
        init_s: se3(&vals[3], &vals[4])?,
        init_k: intrinsics(name, vals[5].0, &vals[5].1)?,
    })
}

pub fn write_estimate(rows: &[EstimateRow]) -> String {
    let mut s = format!("{ESTIMATE_HEADER}\n");
    for r in rows {
        let st = &r.state;
        let mut v = Vec::with_capacity(ESTIMATE_COLS);
        v.push(r.t);
        v.extend(rot_row(&st.t.rot));
        v.extend(st.t.b.iter());
        v.extend(st.t.a.iter());
        v.extend(st.b.iter());
        v.extend(rot_row(&st.s.rot));
        v.extend(st.s.trans.iter());
        v.extend([st.k.fx, st.k.fy, st.k.cx, st.k.cy]);
        for i in 0..6 {
            for j in i..6 {
                v.push(r.pose_cov[(i, j)]);
            }
        }
        push_row(&mut s, v);
    }
    s
}

pub fn read_estimate(name: &str, text: &str) -> Result<Vec<EstimateRow>, CliError> {
    let mut out: Vec<EstimateRow> = Vec::new();
    for (line, f) in records(name, text)? {
        let v = floats(name, line, &f, ESTIMATE_COLS)?;
        increasing(name, line, v[0], out.last().map(|r| r.t))?;
        let mut cov = Matrix6::zeros();
        let mut c = 38;
        for i in 0..6 {
            for j in i..6 {
                cov[(i, j)] = v[c];
                cov[(j, i)] = v[c];
                c += 1;
            }
        }
        out.push(EstimateRow {
            t: v[0],
            state: SystemState {
                t: Se23::new(
                    rotation(name, line, &v[1..10])?,
                    Vector3::new(v[13], v[14], v[15]),
                    Vector3::new(v[10], v[11], v[12]),
                ),
                b: Vector6::from_column_slice(&v[16..22]),
                s: Se3::new(rotation(name, line, &v[22..31])?, Vector3::new(v[31], v[32], v[33])),
                k: intrinsics(name, line, &v[34..38])?,
            },
            pose_cov: cov,
        });
    }
    Ok(out)
}
