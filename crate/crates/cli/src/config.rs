//! TOML configuration. Every section and key is optional and falls back to
//! the library defaults; unknown keys are rejected.

use std::path::{Path, PathBuf};

use msceqf::experiment::{ConvergenceSpec, InitMode, Scenario};
use msceqf::filter::{FilterConfig, InitialStd, NoiseSpec, TriangulationConfig};
use msceqf::lie::{Intrinsics, Se3, So3};
use msceqf::sim::{LandmarkSpec, SensorSpec, TrajectoryKind, TrajectorySpec};
use msceqf::symmetry::GravitySpec;
use nalgebra::{Matrix3, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Noise realization of `simulate`; first seed of `mc`.
    pub seed: u64,
    pub gravity: Gravity,
    pub noise: Noise,
    /// Densities assumed by the filter; `[noise]` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter_noise: Option<Noise>,
    pub initial_std: InitStd,
    pub filter: Filter,
    pub camera: Camera,
    pub imu: Imu,
    pub trajectory: Trajectory,
    pub landmarks: Landmarks,
    pub experiment: Experiment,
    pub sweep: Sweep,
    pub paths: Paths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Gravity {
    /// [m/s²]
    pub magnitude: f64,
    /// Unit vector in the global frame.
    pub direction: [f64; 3],
}

/// Continuous-time densities. The filter scales its IMU variances by
/// `filter.q_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Noise {
    /// [rad/s/√Hz]
    pub gyro: f64,
    /// [m/s²/√Hz]
    pub accel: f64,
    /// [rad/s²/√Hz]
    pub gyro_bias: f64,
    /// [m/s³/√Hz]
    pub accel_bias: f64,
    /// [px]
    pub pixel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitStd {
    pub attitude_deg: f64,
    /// [m/s]
    pub velocity: f64,
    /// [m]
    pub position: f64,
    /// [rad/s]
    pub gyro_bias: f64,
    /// [m/s²]
    pub accel_bias: f64,
    pub extrinsic_rot_deg: f64,
    /// [m]
    pub extrinsic_trans: f64,
    /// [px]
    pub focal: f64,
    /// [px]
    pub center: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Filter {
    /// Number of clones kept in the sliding window.
    pub window: usize,
    pub min_obs: usize,
    pub min_parallax_deg: f64,
    pub max_iterations: usize,
    /// [m]
    pub min_depth: f64,
    /// [m]
    pub max_depth: f64,
    pub gating: bool,
    /// χ² quantile of the innovation gate.
    pub gate_quantile: f64,
    pub qr_compress: bool,
    /// Variance factor applied to the IMU noise assumed by the filter.
    pub q_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Camera {
    /// [px]
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// [px]
    pub width: u32,
    pub height: u32,
    /// [Hz]
    pub rate: f64,
    /// True camera rotation in the IMU frame, row-major.
    pub rotation: [f64; 9],
    /// True camera position in the IMU frame [m].
    pub translation: [f64; 3],
    /// [frames]
    pub track_length_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Imu {
    /// [Hz]
    pub rate: f64,
    /// Initial `(b_ω [rad/s], b_a [m/s²])`.
    pub bias: [f64; 6],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajKind {
    Lissajous,
    Circle,
    SinusoidalYaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Trajectory {
    pub kind: TrajKind,
    /// [m]
    pub amplitudes: [f64; 3],
    /// [Hz]
    pub frequencies: [f64; 3],
    /// [rad/s]
    pub yaw_rate: f64,
    pub tilt_deg: f64,
    /// [Hz]
    pub tilt_freq: [f64; 2],
    /// [m]
    pub center: [f64; 3],
    /// [s]
    pub duration: f64,
    /// Seed of the landmark field.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Landmarks {
    pub count: usize,
    /// Box edge lengths [m].
    pub box_size: [f64; 3],
    /// [m]
    pub clearance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Truth,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Experiment {
    pub init: InitKind,
    /// Injected extrinsic error `[deg, m]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extrinsic_error: Option<[f64; 2]>,
    /// Monte Carlo runs.
    pub runs: usize,
    /// Aligned position error of a diverged run [m].
    pub divergence_m: f64,
    /// Final extrinsic error of a converged run.
    pub converged_rot_deg: f64,
    /// [m]
    pub converged_trans_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    /// Injected error in multiples of the prior std.
    pub sigma_levels: Vec<f64>,
    /// Prior std `[deg, m]` of the extrinsic.
    pub priors: Vec<[f64; 2]>,
    pub runs_per_cell: usize,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub dataset: PathBuf,
    pub out: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            gravity: Gravity::default(),
            noise: Noise::default(),
            filter_noise: None,
            initial_std: InitStd::default(),
            filter: Filter::default(),
            camera: Camera::default(),
            imu: Imu::default(),
            trajectory: Trajectory::default(),
            landmarks: Landmarks::default(),
            experiment: Experiment::default(),
            sweep: Sweep::default(),
            paths: Paths::default(),
        }
    }
}

impl Default for Gravity {
    fn default() -> Self {
        let g = GravitySpec::default();
        Self { magnitude: g.g, direction: g.e3.into() }
    }
}

impl Default for Noise {
    fn default() -> Self {
        let n = NoiseSpec::euroc();
        Self {
            gyro: n.sigma_w.x,
            accel: n.sigma_a.x,
            gyro_bias: n.sigma_bw.x,
            accel_bias: n.sigma_ba.x,
            pixel: n.sigma_px,
        }
    }
}

impl Default for InitStd {
    fn default() -> Self {
        let s = InitialStd::default();
        Self {
            attitude_deg: s.attitude.to_degrees(),
            velocity: s.velocity,
            position: s.position,
            gyro_bias: s.bias_w,
            accel_bias: s.bias_a,
            extrinsic_rot_deg: s.ext_rot.to_degrees(),
            extrinsic_trans: s.ext_trans,
            focal: s.focal,
            center: s.center,
        }
    }
}

impl Default for Filter {
    fn default() -> Self {
        let f = FilterConfig::default();
        Self {
            window: f.max_clones,
            min_obs: f.tri.min_obs,
            min_parallax_deg: f.tri.min_parallax_deg,
            max_iterations: f.tri.max_iterations,
            min_depth: f.tri.min_depth,
            max_depth: f.tri.max_depth,
            gating: f.gate_quantile.is_some(),
            gate_quantile: f.gate_quantile.unwrap_or(0.95),
            qr_compress: f.qr_compress,
            q_scale: 1.0,
        }
    }
}

impl Default for Camera {
    fn default() -> Self {
        let s = SensorSpec::default();
        let r = s.true_s.rot.matrix();
        Self {
            fx: s.true_k.fx,
            fy: s.true_k.fy,
            cx: s.true_k.cx,
            cy: s.true_k.cy,
            width: s.image_size.0,
            height: s.image_size.1,
            rate: s.cam_rate,
            rotation: std::array::from_fn(|i| r[(i / 3, i % 3)]),
            translation: s.true_s.trans.into(),
            track_length_max: s.track_length_max,
        }
    }
}

impl Default for Imu {
    fn default() -> Self {
        Self { rate: SensorSpec::default().imu_rate, bias: [0.0; 6] }
    }
}

impl Default for Trajectory {
    fn default() -> Self {
        let t = TrajectorySpec::default();
        Self {
            kind: TrajKind::Lissajous,
            amplitudes: t.amplitudes.into(),
            frequencies: t.frequencies.into(),
            yaw_rate: t.yaw_rate,
            tilt_deg: t.tilt_deg,
            tilt_freq: t.tilt_freq.into(),
            center: t.center.into(),
            duration: t.duration,
            seed: t.seed,
        }
    }
}

impl Default for Landmarks {
    fn default() -> Self {
        let l = LandmarkSpec::default();
        Self { count: l.count, box_size: l.box_size.into(), clearance: l.clearance }
    }
}

impl Default for Experiment {
    fn default() -> Self {
        let c = ConvergenceSpec::default();
        Self {
            init: InitKind::Sampled,
            extrinsic_error: None,
            runs: 25,
            divergence_m: c.divergence_m,
            converged_rot_deg: c.max_rot_deg,
            converged_trans_m: c.max_trans_m,
        }
    }
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            sigma_levels: vec![0.0, 0.5, 1.0, 2.0, 3.0, 4.0],
            priors: vec![[15.0, 0.05], [30.0, 0.1], [60.0, 0.2]],
            runs_per_cell: 10,
            base_seed: 100,
        }
    }
}

impl Default for Paths {
    fn default() -> Self {
        Self { dataset: PathBuf::from("data"), out: PathBuf::from("out") }
    }
}

fn bad(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

fn finite(key: &str, v: f64, unit: &str) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format_args!("must be finite {unit}, got {v}")))
    }
}

fn positive(key: &str, v: f64, unit: &str) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(bad(key, format_args!("must be > 0 {unit}, got {v}")))
    }
}

fn non_negative(key: &str, v: f64, unit: &str) -> Result<(), CliError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(bad(key, format_args!("must be >= 0 {unit}, got {v}")))
    }
}

fn at_least(key: &str, v: usize, min: usize, unit: &str) -> Result<(), CliError> {
    if v >= min {
        Ok(())
    } else {
        Err(bad(key, format_args!("must be >= {min} {unit}, got {v}")))
    }
}

fn noise_spec(section: &str, n: &Noise) -> Result<NoiseSpec, CliError> {
    non_negative(&format!("{section}.gyro"), n.gyro, "rad/s/√Hz")?;
    non_negative(&format!("{section}.accel"), n.accel, "m/s²/√Hz")?;
    non_negative(&format!("{section}.gyro_bias"), n.gyro_bias, "rad/s²/√Hz")?;
    non_negative(&format!("{section}.accel_bias"), n.accel_bias, "m/s³/√Hz")?;
    non_negative(&format!("{section}.pixel"), n.pixel, "px")?;
    NoiseSpec::isotropic(n.gyro, n.accel, n.gyro_bias, n.accel_bias, n.pixel).map_err(|e| bad(section, e))
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.scenario().map(|_| ())
    }

    pub fn convergence(&self) -> ConvergenceSpec {
        ConvergenceSpec {
            max_rot_deg: self.experiment.converged_rot_deg,
            max_trans_m: self.experiment.converged_trans_m,
            divergence_m: self.experiment.divergence_m,
        }
    }

    /// `(deg, m)` priors and σ-levels of the robustness grid.
    pub fn sweep_grid(&self) -> (Vec<(f64, f64)>, Vec<f64>) {
        (self.sweep.priors.iter().map(|p| (p[0], p[1])).collect(), self.sweep.sigma_levels.clone())
    }

    /// Validates every key and assembles the library scenario.
    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let g = &self.gravity;
        non_negative("gravity.magnitude", g.magnitude, "m/s²")?;
        for v in g.direction {
            finite("gravity.direction", v, "[-]")?;
        }
        let grav = GravitySpec::new(g.magnitude, Vector3::from(g.direction))
            .map_err(|e| bad("gravity.direction", e))?;

        let noise = noise_spec("noise", &self.noise)?;
        let (key, fnoise) = match &self.filter_noise {
            Some(n) => ("filter_noise", noise_spec("filter_noise", n)?),
            None => ("noise", noise),
        };
        if !(fnoise.sigma_px > 0.0) {
            return Err(bad(
                &format!("{key}.pixel"),
                format_args!("must be > 0 px for the filter, got {}; set [filter_noise] for noiseless data", fnoise.sigma_px),
            ));
        }

        let s = &self.initial_std;
        positive("initial_std.attitude_deg", s.attitude_deg, "deg")?;
        positive("initial_std.velocity", s.velocity, "m/s")?;
        positive("initial_std.position", s.position, "m")?;
        positive("initial_std.gyro_bias", s.gyro_bias, "rad/s")?;
        positive("initial_std.accel_bias", s.accel_bias, "m/s²")?;
        positive("initial_std.extrinsic_rot_deg", s.extrinsic_rot_deg, "deg")?;
        positive("initial_std.extrinsic_trans", s.extrinsic_trans, "m")?;
        positive("initial_std.focal", s.focal, "px")?;
        positive("initial_std.center", s.center, "px")?;
        let init_std = InitialStd {
            attitude: s.attitude_deg.to_radians(),
            velocity: s.velocity,
            position: s.position,
            bias_w: s.gyro_bias,
            bias_a: s.accel_bias,
            ext_rot: s.extrinsic_rot_deg.to_radians(),
            ext_trans: s.extrinsic_trans,
            focal: s.focal,
            center: s.center,
        };

        let f = &self.filter;
        at_least("filter.window", f.window, 1, "clones")?;
        at_least("filter.min_obs", f.min_obs, 2, "observations")?;
        non_negative("filter.min_parallax_deg", f.min_parallax_deg, "deg")?;
        at_least("filter.max_iterations", f.max_iterations, 1, "iterations")?;
        positive("filter.min_depth", f.min_depth, "m")?;
        positive("filter.max_depth", f.max_depth, "m")?;
        if f.max_depth <= f.min_depth {
            return Err(bad(
                "filter.max_depth",
                format_args!("must exceed filter.min_depth = {} m, got {} m", f.min_depth, f.max_depth),
            ));
        }
        if !(f.gate_quantile > 0.0 && f.gate_quantile < 1.0) {
            return Err(bad("filter.gate_quantile", format_args!("must lie in (0, 1), got {}", f.gate_quantile)));
        }
        positive("filter.q_scale", f.q_scale, "[-]")?;
        let filter = FilterConfig {
            noise: fnoise.scaled_imu(f.q_scale),
            grav,
            max_clones: f.window,
            tri: TriangulationConfig {
                min_obs: f.min_obs,
                min_parallax_deg: f.min_parallax_deg,
                max_iterations: f.max_iterations,
                min_depth: f.min_depth,
                max_depth: f.max_depth,
                ..Default::default()
            },
            gate_quantile: f.gating.then_some(f.gate_quantile),
            qr_compress: f.qr_compress,
        };

        let c = &self.camera;
        positive("camera.fx", c.fx, "px")?;
        positive("camera.fy", c.fy, "px")?;
        finite("camera.cx", c.cx, "px")?;
        finite("camera.cy", c.cy, "px")?;
        at_least("camera.width", c.width as usize, 1, "px")?;
        at_least("camera.height", c.height as usize, 1, "px")?;
        positive("camera.rate", c.rate, "Hz")?;
        for v in c.rotation {
            finite("camera.rotation", v, "[-]")?;
        }
        for v in c.translation {
            finite("camera.translation", v, "m")?;
        }
        at_least("camera.track_length_max", c.track_length_max, 2, "frames")?;
        let rot = So3::from_matrix(Matrix3::from_row_slice(&c.rotation)).map_err(|e| bad("camera.rotation", e))?;
        let true_k = Intrinsics::new(c.fx, c.fy, c.cx, c.cy).map_err(|e| bad("camera", e))?;

        positive("imu.rate", self.imu.rate, "Hz")?;
        if self.imu.rate < c.rate {
            return Err(bad(
                "imu.rate",
                format_args!("must be >= camera.rate = {} Hz, got {} Hz", c.rate, self.imu.rate),
            ));
        }
        for (i, v) in self.imu.bias.iter().enumerate() {
            finite("imu.bias", *v, if i < 3 { "rad/s" } else { "m/s²" })?;
        }
        let sensor = SensorSpec {
            imu_rate: self.imu.rate,
            cam_rate: c.rate,
            true_s: Se3::new(rot, Vector3::from(c.translation)),
            true_k,
            image_size: (c.width, c.height),
            noise,
            track_length_max: c.track_length_max,
        };
        sensor.validate().map_err(|e| bad("camera", e))?;

        let t = &self.trajectory;
        for v in t.amplitudes.iter().chain(&t.center) {
            finite("trajectory.amplitudes/center", *v, "m")?;
        }
        for v in t.frequencies.iter().chain(&t.tilt_freq) {
            positive("trajectory.frequencies/tilt_freq", *v, "Hz")?;
        }
        finite("trajectory.yaw_rate", t.yaw_rate, "rad/s")?;
        finite("trajectory.tilt_deg", t.tilt_deg, "deg")?;
        positive("trajectory.duration", t.duration, "s")?;
        let traj = TrajectorySpec {
            kind: match t.kind {
                TrajKind::Lissajous => TrajectoryKind::Lissajous,
                TrajKind::Circle => TrajectoryKind::Circle,
                TrajKind::SinusoidalYaw => TrajectoryKind::SinusoidalYaw,
            },
            amplitudes: Vector3::from(t.amplitudes),
            frequencies: Vector3::from(t.frequencies),
            yaw_rate: t.yaw_rate,
            tilt_deg: t.tilt_deg,
            tilt_freq: Vector2::from(t.tilt_freq),
            center: Vector3::from(t.center),
            duration: t.duration,
            seed: t.seed,
        };
        traj.validate().map_err(|e| bad("trajectory", e))?;

        let l = &self.landmarks;
        for v in l.box_size {
            non_negative("landmarks.box_size", v, "m")?;
        }
        non_negative("landmarks.clearance", l.clearance, "m")?;

        let e = &self.experiment;
        if let Some([deg, m]) = e.extrinsic_error {
            non_negative("experiment.extrinsic_error[0]", deg, "deg")?;
            non_negative("experiment.extrinsic_error[1]", m, "m")?;
        }
        positive("experiment.divergence_m", e.divergence_m, "m")?;
        positive("experiment.converged_rot_deg", e.converged_rot_deg, "deg")?;
        positive("experiment.converged_trans_m", e.converged_trans_m, "m")?;

        let w = &self.sweep;
        for v in &w.sigma_levels {
            non_negative("sweep.sigma_levels", *v, "[prior std]")?;
        }
        for [deg, m] in &w.priors {
            positive("sweep.priors[_][0]", *deg, "deg")?;
            positive("sweep.priors[_][1]", *m, "m")?;
        }

        Ok(Scenario {
            traj,
            sensor,
            landmarks: LandmarkSpec { count: l.count, box_size: Vector3::from(l.box_size), clearance: l.clearance },
            grav,
            bias0: Vector6::from(self.imu.bias),
            filter,
            init_std,
            init: match e.init {
                InitKind::Truth => InitMode::Truth,
                InitKind::Sampled => InitMode::Sampled,
            },
            extrinsic_error: e.extrinsic_error.map(|[d, m]| (d, m)),
            audit_gauge: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_library() {
        let sc = Config::default().scenario().unwrap();
        let lib = Scenario::default();
        assert_eq!(sc.sensor, lib.sensor);
        assert_eq!(sc.traj, lib.traj);
        assert_eq!(sc.landmarks, lib.landmarks);
        assert_eq!(sc.filter, lib.filter);
        assert_eq!(sc.grav, lib.grav);
        let (a, b) = (sc.init_std, lib.init_std);
        assert!((a.attitude - b.attitude).abs() < 1e-15 && (a.ext_rot - b.ext_rot).abs() < 1e-15);
    }

    #[test]
    fn empty_text_is_the_default() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
    }
}
