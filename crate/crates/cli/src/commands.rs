//! Subcommand implementations. Each returns the JSON summary it wrote.

use std::path::Path;
use std::time::Instant;

use msceqf::estimator::{frames_from_tracks, run, with_empty_frames, EstimateRow, RunOptions};
use msceqf::eval::{
    anees, associate, ate_rmse, classify_convergence, extrinsic_error, slope, Convergence, RunRecord,
};
use msceqf::experiment::{
    inject_extrinsic_error, monte_carlo, sample_initial_state, sweep, InitMode, SweepCell,
};
use msceqf::filter::{initial_covariance, FilterState};
use msceqf::lie::{LieGroup, Se3};
use msceqf::sim::{simulate, GroundTruth};
use msceqf::symmetry::SystemState;
use serde_json::{json, Value};

use crate::config::Config;
use crate::io::{self, fmt_f64, Calib};
use crate::CliError;

fn out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))
}

fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    io::write_file(path, &(serde_json::to_string_pretty(v).expect("json serializes") + "\n"))
}

fn lib_config(key: &str) -> impl Fn(msceqf::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("{key}: {e}"))
}

fn lib_data(what: &str) -> impl Fn(msceqf::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{what}: {e}"))
}

fn pose_json(p: &Se3) -> Value {
    let m = p.rot.matrix();
    json!({
        "rotation": (0..9).map(|i| m[(i / 3, i % 3)]).collect::<Vec<_>>(),
        "translation": p.trans.as_slice(),
    })
}

fn calib_json(s: &Se3, k: &msceqf::lie::Intrinsics) -> Value {
    json!({ "extrinsic": pose_json(s), "intrinsics": [k.fx, k.fy, k.cx, k.cy] })
}

/// Writes `imu.csv`, `tracks.csv`, `groundtruth.csv` and `calib.txt`.
pub fn cmd_simulate(cfg: &Config, out: &Path) -> Result<Value, CliError> {
    let sc = cfg.scenario()?;
    let sim = simulate(&sc.traj, &sc.sensor, &sc.landmarks, &sc.grav, &sc.bias0, cfg.seed)
        .map_err(lib_config("simulation"))?;
    let init_s = match sc.extrinsic_error {
        Some(err) => inject_extrinsic_error(&sc.sensor.true_s, err, cfg.seed).map_err(lib_config("experiment"))?,
        None => sc.sensor.true_s,
    };
    let calib = Calib { true_s: sim.true_calib.0, true_k: sim.true_calib.1, init_s, init_k: sim.true_calib.1 };
    out_dir(out)?;
    io::write_file(&out.join("imu.csv"), &io::write_imu(&sim.imu))?;
    io::write_file(&out.join("tracks.csv"), &io::write_tracks(&sim.tracks))?;
    io::write_file(&out.join("groundtruth.csv"), &io::write_groundtruth(&sim.groundtruth))?;
    io::write_file(&out.join("calib.txt"), &io::write_calib(&calib))?;
    Ok(json!({
        "seed": cfg.seed,
        "imu_samples": sim.imu.len(),
        "tracks": sim.tracks.len(),
        "observations": sim.tracks.iter().map(|t| t.obs.len()).sum::<usize>(),
        "landmarks": sim.landmarks.len(),
    }))
}

pub struct Dataset {
    pub imu: Vec<msceqf::sim::ImuSample>,
    pub tracks: Vec<msceqf::filter::FeatureTrack>,
    pub groundtruth: Vec<GroundTruth>,
    pub calib: Calib,
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    let read = |file: &str| io::read_file(&dir.join(file));
    let name = |file: &str| dir.join(file).display().to_string();
    Ok(Dataset {
        imu: io::read_imu(&name("imu.csv"), &read("imu.csv")?)?,
        tracks: io::read_tracks(&name("tracks.csv"), &read("tracks.csv")?)?,
        groundtruth: io::read_groundtruth(&name("groundtruth.csv"), &read("groundtruth.csv")?)?,
        calib: io::read_calib(&name("calib.txt"), &read("calib.txt")?)?,
    })
}

/// Estimate rows matched to ground truth within half a camera period.
fn record(rows: &[EstimateRow], gt: &[GroundTruth], origin: Se3, cam_rate: f64) -> (RunRecord, usize) {
    let est_t: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let gt_t: Vec<f64> = gt.iter().map(|g| g.t).collect();
    let (pairs, unmatched) = associate(&est_t, &gt_t, 0.5 / cam_rate);
    let rec = RunRecord {
        stamps: pairs.iter().map(|p| rows[p.0].t).collect(),
        est_poses: pairs.iter().map(|p| rows[p.0].state.pose()).collect(),
        est_calib: pairs.iter().map(|p| (rows[p.0].state.s, rows[p.0].state.k)).collect(),
        pose_covs: pairs.iter().map(|p| rows[p.0].pose_cov).collect(),
        truth_poses: pairs.iter().map(|p| gt[p.1].t_pose.theta()).collect(),
        origin,
    };
    (rec, unmatched)
}

fn accuracy(cfg: &Config, rec: &RunRecord, unmatched: usize, calib: &Calib) -> Result<Value, CliError> {
    let (ate_rot, ate_pos) = if rec.stamps.len() >= 2 {
        ate_rmse(rec).map_err(lib_data("ATE"))?
    } else {
        (f64::NAN, f64::NAN)
    };
    let nees = if rec.stamps.is_empty() { None } else { Some(anees(std::slice::from_ref(rec)).map_err(lib_data("NEES"))?) };
    let (ext_deg, ext_m) =
        rec.est_calib.last().map(|(s, _)| extrinsic_error(&calib.true_s, s)).unwrap_or((f64::NAN, f64::NAN));
    let k_err = rec
        .est_calib
        .last()
        .map(|(_, k)| (k.as_vector() - calib.true_k.as_vector()).abs().max())
        .unwrap_or(f64::NAN);
    let conv = classify_convergence(rec, cfg.experiment.divergence_m);
    Ok(json!({
        "matched_stamps": rec.stamps.len(),
        "unmatched_stamps": unmatched,
        "ate_rotation_rad": ate_rot,
        "ate_position_m": ate_pos,
        "nees_average": nees.as_ref().map(|n| n.average),
        "nees_skipped": nees.as_ref().map(|n| n.skipped),
        "final_extrinsic_error_deg": ext_deg,
        "final_extrinsic_error_m": ext_m,
        "final_intrinsics_error_px": k_err,
        "diverged": conv == Convergence::Diverged,
    }))
}

/// Filters a dataset directory; writes `estimate.csv` and `report.json`.
pub fn cmd_run(cfg: &Config, dataset: &Path, out: &Path) -> Result<Value, CliError> {
    let sc = cfg.scenario()?;
    let ds = load_dataset(dataset)?;
    let (first, last) = match (ds.imu.first(), ds.imu.last()) {
        (Some(f), Some(l)) => (f.t, l.t),
        _ => return Err(CliError::Data(format!("{}: no IMU samples", dataset.join("imu.csv").display()))),
    };
    let tol = 0.5 / sc.sensor.imu_rate;
    let gt0 = ds
        .groundtruth
        .iter()
        .find(|g| (g.t - first).abs() <= tol)
        .ok_or_else(|| CliError::Data(format!("groundtruth.csv: no row within {tol} s of the first IMU stamp {first} s")))?;
    let truth0 = SystemState { t: gt0.t_pose, b: gt0.b, s: ds.calib.init_s, k: ds.calib.init_k };
    let init = match sc.init {
        InitMode::Truth => truth0,
        InitMode::Sampled => {
            sample_initial_state(&truth0, &sc.init_std, cfg.seed, true).map_err(lib_data("initial state"))?
        }
    };
    let state = FilterState::new(init, initial_covariance(&init, &sc.init_std), first)
        .map_err(lib_data("initial state"))?;
    let n = ((last - first) * sc.sensor.cam_rate + 1e-9).floor() as usize;
    let cam: Vec<f64> = (0..=n).map(|k| first + k as f64 / sc.sensor.cam_rate).collect();
    let frames = with_empty_frames(frames_from_tracks(&ds.tracks), &cam);

    let clock = Instant::now();
    let output = run(state, &ds.imu, &frames, &sc.filter, &RunOptions::default()).map_err(lib_data("filter"))?;
    let wall = clock.elapsed().as_secs_f64();

    out_dir(out)?;
    io::write_file(&out.join("estimate.csv"), &io::write_estimate(&output.rows))?;
    let (rec, unmatched) = record(&output.rows, &ds.groundtruth, init.pose(), sc.sensor.cam_rate);
    let c = output.counts;
    let fin = output.final_state.estimate();
    let report = json!({
        "dataset": dataset.display().to_string(),
        "seed": cfg.seed,
        "counts": {
            "imu_samples": ds.imu.len(),
            "images": c.images,
            "updates": c.updates,
            "features_used": c.features_used,
            "features_gated": c.features_gated,
            "triangulation_failures": c.triangulation_failures,
            "features_skipped": c.features_skipped,
            "short_tracks": c.short_tracks,
            "skipped_updates": c.skipped_updates,
        },
        "timing": {
            "wall_s": wall,
            "per_image_ms": if c.images > 0 { 1e3 * wall / c.images as f64 } else { 0.0 },
        },
        "origin": pose_json(&init.pose()),
        "initial_calibration": calib_json(&init.s, &init.k),
        "final_calibration": calib_json(&fin.s, &fin.k),
        "accuracy": accuracy(cfg, &rec, unmatched, &ds.calib)?,
    });
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

fn origin_from_report(path: &Path) -> Result<Option<Se3>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    let v: Value = serde_json::from_str(&io::read_file(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let nums = |key: &str, n: usize| -> Option<Vec<f64>> {
        let a = v.get("origin")?.get(key)?.as_array()?;
        let out: Vec<f64> = a.iter().filter_map(Value::as_f64).collect();
        (out.len() == n).then_some(out)
    };
    let (Some(r), Some(t)) = (nums("rotation", 9), nums("translation", 3)) else {
        return Err(CliError::Data(format!("{}: missing or malformed origin", path.display())));
    };
    let rot = msceqf::lie::So3::from_matrix(nalgebra::Matrix3::from_row_slice(&r))
        .map_err(|e| CliError::Data(format!("{}: origin: {e}", path.display())))?;
    Ok(Some(Se3::new(rot, nalgebra::Vector3::from_column_slice(&t))))
}

/// Scores `out/estimate.csv` against the dataset; writes `eval.json`.
///
/// The error origin is read from `out/report.json` when present, and is
/// otherwise the first estimated pose.
pub fn cmd_eval(cfg: &Config, dataset: &Path, out: &Path) -> Result<Value, CliError> {
    let sc = cfg.scenario()?;
    let est_path = out.join("estimate.csv");
    let rows = io::read_estimate(&est_path.display().to_string(), &io::read_file(&est_path)?)?;
    let gt_path = dataset.join("groundtruth.csv");
    let gt = io::read_groundtruth(&gt_path.display().to_string(), &io::read_file(&gt_path)?)?;
    let cal_path = dataset.join("calib.txt");
    let calib = io::read_calib(&cal_path.display().to_string(), &io::read_file(&cal_path)?)?;
    let origin = match origin_from_report(&out.join("report.json"))? {
        Some(o) => o,
        None => rows.first().map(|r| r.state.pose()).unwrap_or_else(Se3::identity),
    };
    let (rec, unmatched) = record(&rows, &gt, origin, sc.sensor.cam_rate);
    let v = accuracy(cfg, &rec, unmatched, &calib)?;
    write_json(&out.join("eval.json"), &v)?;
    Ok(v)
}

/// Monte Carlo consistency over seeds `seed, seed + 1, …`; writes
/// `anees.csv` and `mc.json`. Failed runs are left out and flagged.
pub fn cmd_mc(cfg: &Config, n_runs: usize, threads: Option<usize>, out: &Path) -> Result<Value, CliError> {
    if n_runs < 2 {
        return Err(CliError::Config(format!("experiment.runs: must be >= 2 runs, got {n_runs}")));
    }
    let sc = cfg.scenario()?;
    let seeds: Vec<u64> = (0..n_runs as u64).map(|k| cfg.seed + k).collect();
    let runs = monte_carlo(&sc, &seeds, threads).map_err(lib_config("threads"))?;
    let mut records = Vec::new();
    let mut failed = Vec::new();
    for (seed, r) in seeds.iter().zip(runs) {
        match r {
            Ok(run) => records.push(run.record),
            Err(e) => failed.push(json!({ "seed": seed, "error": e.to_string() })),
        }
    }
    out_dir(out)?;
    let a = if records.is_empty() { None } else { Some(anees(&records).map_err(lib_data("ANEES"))?) };
    let (series, average, skipped) = match &a {
        Some(a) => (a.series.clone(), a.average, a.skipped),
        None => (Vec::new(), f64::NAN, 0),
    };
    let partial = !failed.is_empty();
    let mut csv = format!(
        "# runs {} of {}{}, average {}, slope {} [1/s], skipped {}\n# t [s],anees [-]\n",
        records.len(),
        n_runs,
        if partial { " (partial)" } else { "" },
        fmt_f64(average),
        fmt_f64(slope(&series)),
        skipped
    );
    for (t, v) in &series {
        csv.push_str(&format!("{},{}\n", fmt_f64(*t), fmt_f64(*v)));
    }
    io::write_file(&out.join("anees.csv"), &csv)?;
    let summary = json!({
        "runs_requested": n_runs,
        "runs_ok": records.len(),
        "partial": partial,
        "failed": failed,
        "average": average,
        "slope_per_s": slope(&series),
        "skipped": skipped,
        "first_seed": cfg.seed,
    });
    write_json(&out.join("mc.json"), &summary)?;
    if records.is_empty() {
        return Err(CliError::Data(format!("all {n_runs} Monte Carlo runs failed")));
    }
    Ok(summary)
}

/// Robustness grid; writes `grid.csv` (rows: σ-levels, columns: priors)
/// and `cells.csv` with the per-cell breakdown.
pub fn cmd_sweep(cfg: &Config, runs_per_cell: usize, threads: Option<usize>, out: &Path) -> Result<Value, CliError> {
    let sc = cfg.scenario()?;
    let (priors, levels) = cfg.sweep_grid();
    if priors.is_empty() || levels.is_empty() {
        return Err(CliError::Config("sweep.priors and sweep.sigma_levels must be nonempty".into()));
    }
    if runs_per_cell == 0 {
        return Err(CliError::Config("sweep.runs_per_cell: must be >= 1 runs, got 0".into()));
    }
    let conv = cfg.convergence();
    let mut columns: Vec<Vec<SweepCell>> = Vec::new();
    for p in &priors {
        let errors: Vec<(f64, f64)> = levels.iter().map(|l| (l * p.0, l * p.1)).collect();
        let mut cells = sweep(&sc, &errors, &[*p], runs_per_cell, cfg.sweep.base_seed, &conv, threads)
            .map_err(lib_config("sweep"))?;
        // Rotation-based σ-levels are undefined at zero; the grid level is exact.
        for (c, l) in cells.iter_mut().zip(&levels) {
            c.sigma_level = *l;
        }
        columns.push(cells);
    }
    out_dir(out)?;
    let mut grid = format!(
        "# failed runs out of {runs_per_cell} per cell; rows: injected extrinsic error in multiples of the prior std\n# sigma_level [-]"
    );
    for p in &priors {
        grid.push_str(&format!(",prior {} deg / {} m [runs]", fmt_f64(p.0), fmt_f64(p.1)));
    }
    grid.push('\n');
    for (li, l) in levels.iter().enumerate() {
        grid.push_str(&fmt_f64(*l));
        for col in &columns {
            grid.push_str(&format!(",{}", col[li].failures));
        }
        grid.push('\n');
    }
    io::write_file(&out.join("grid.csv"), &grid)?;
    let mut cells_csv = String::from(
        "# prior_deg [deg],prior_m [m],sigma_level [-],error_deg [deg],error_m [m],runs,diverged,not_converged,errored,failures\n",
    );
    for c in columns.iter().flatten() {
        cells_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            fmt_f64(c.prior.0),
            fmt_f64(c.prior.1),
            fmt_f64(c.sigma_level),
            fmt_f64(c.error.0),
            fmt_f64(c.error.1),
            c.runs,
            c.diverged,
            c.not_converged,
            c.errored,
            c.failures
        ));
    }
    io::write_file(&out.join("cells.csv"), &cells_csv)?;
    Ok(json!({
        "priors": priors.iter().map(|p| [p.0, p.1]).collect::<Vec<_>>(),
        "sigma_levels": levels,
        "failures": columns.iter().map(|c| c.iter().map(|x| x.failures).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "runs_per_cell": runs_per_cell,
    }))
}
