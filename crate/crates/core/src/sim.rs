//! Deterministic synthetic data: trajectories, IMU samples consistent with
//! the navigation dynamics, and pixel tracks of a random landmark field.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::ops::AddAssign;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};

use crate::error::{Error, Result};
use crate::filter::{FeatureTrack, NoiseSpec};
use crate::lie::{Intrinsics, LieGroup, Se23, Se3, So3, Vector6};
use crate::symmetry::GravitySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    /// Per-axis sines; with `f_y = 2 f_x` a figure eight. Yaw follows the
    /// horizontal velocity heading.
    Lissajous,
    /// Horizontal circle of radius `amplitudes.x` at `frequencies.x`, heading
    /// along the velocity.
    Circle,
    /// Lissajous position with a sinusoidal yaw of peak rate `yaw_rate`.
    SinusoidalYaw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    /// [m]
    pub amplitudes: Vector3<f64>,
    /// [Hz]
    pub frequencies: Vector3<f64>,
    /// Peak yaw rate of the sinusoidal-yaw profile [rad/s].
    pub yaw_rate: f64,
    /// Pitch and roll excitation amplitude [deg].
    pub tilt_deg: f64,
    /// Pitch and roll excitation frequencies [Hz].
    pub tilt_freq: Vector2<f64>,
    /// Offset added to every position [m].
    pub center: Vector3<f64>,
    /// [s]
    pub duration: f64,
    pub seed: u64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            kind: TrajectoryKind::Lissajous,
            amplitudes: Vector3::new(2.5, 1.5, 0.3),
            frequencies: Vector3::new(0.05, 0.1, 0.07),
            yaw_rate: 0.5,
            tilt_deg: 10.0,
            tilt_freq: Vector2::new(0.13, 0.19),
            center: Vector3::new(0.0, 0.0, 1.5),
            duration: 60.0,
            seed: 0,
        }
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(Error::InvalidArgument(format!("duration must be > 0 s, got {}", self.duration)));
        }
        if self.frequencies.iter().chain(self.tilt_freq.iter()).any(|f| !(*f > 0.0)) {
            return Err(Error::InvalidArgument("trajectory frequencies must be > 0 Hz".into()));
        }
        Ok(())
    }
}

/// Kinematic sample of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajPoint {
    pub t: f64,
    pub rot: So3,
    /// Body angular velocity `(RᵀṘ)∨` [rad/s].
    pub omega: Vector3<f64>,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    /// World acceleration `v̇` [m/s²].
    pub acc: Vector3<f64>,
}

impl TrajPoint {
    pub fn extended_pose(&self) -> Se23 {
        Se23::new(self.rot, self.v, self.p)
    }

    pub fn pose(&self) -> Se3 {
        Se3::new(self.rot, self.p)
    }
}

/// Analytic trajectory with C² position and orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    pub spec: TrajectorySpec,
}

/// `(f, ḟ, f̈)` of `A sin(2π ν t)`.
fn sine(a: f64, nu: f64, t: f64) -> (f64, f64, f64) {
    let w = TAU * nu;
    let (s, c) = (w * t).sin_cos();
    (a * s, a * w * c, -a * w * w * s)
}

pub fn gen_trajectory(spec: &TrajectorySpec) -> Result<Trajectory> {
    spec.validate()?;
    Ok(Trajectory { spec: *spec })
}

impl Trajectory {
    fn position(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let s = &self.spec;
        match s.kind {
            TrajectoryKind::Circle => {
                let r = s.amplitudes.x;
                let w = TAU * s.frequencies.x;
                let (sn, cs) = (w * t).sin_cos();
                (
                    Vector3::new(r * cs, r * sn, 0.0) + s.center,
                    Vector3::new(-r * w * sn, r * w * cs, 0.0),
                    Vector3::new(-r * w * w * cs, -r * w * w * sn, 0.0),
                )
            }
            TrajectoryKind::Lissajous | TrajectoryKind::SinusoidalYaw => {
                let mut p = Vector3::zeros();
                let mut v = Vector3::zeros();
                let mut a = Vector3::zeros();
                for i in 0..3 {
                    let (f, df, ddf) = sine(s.amplitudes[i], s.frequencies[i], t);
                    p[i] = f;
                    v[i] = df;
                    a[i] = ddf;
                }
                (p + s.center, v, a)
            }
        }
    }

    /// Yaw and its first derivative.
    fn yaw(&self, t: f64, v: &Vector3<f64>, a: &Vector3<f64>) -> (f64, f64) {
        let s = &self.spec;
        match s.kind {
            TrajectoryKind::SinusoidalYaw => {
                let nu = s.frequencies.x;
                let (f, df, _) = sine(s.yaw_rate / (TAU * nu), nu, t);
                (f, df)
            }
            _ => {
                let h2 = v.x * v.x + v.y * v.y;
                if h2 < 1e-18 {
                    (0.0, 0.0)
                } else {
                    (v.y.atan2(v.x), (v.x * a.y - v.y * a.x) / h2)
                }
            }
        }
    }

    pub fn sample(&self, t: f64) -> TrajPoint {
        let s = &self.spec;
        let (p, v, acc) = self.position(t);
        let (psi, dpsi) = self.yaw(t, &v, &acc);
        let amp = s.tilt_deg.to_radians();
        let (th, dth, _) = sine(amp, s.tilt_freq.x, t);
        let (ph, dph, _) = sine(amp, s.tilt_freq.y, t);
        let rot = So3::rot_z(psi).compose(&So3::rot_y(th)).compose(&So3::rot_x(ph));
        // Body rates of the z-y-x Euler sequence.
        let omega = Vector3::new(
            dph - dpsi * th.sin(),
            dth * ph.cos() + dpsi * ph.sin() * th.cos(),
            -dth * ph.sin() + dpsi * ph.cos() * th.cos(),
        );
        TrajPoint { t, rot, omega, p, v, acc }
    }

    /// Noise-free IMU reading `(ω, Rᵀ(v̇ − g e₃))` at `t`.
    pub fn ideal_imu(&self, t: f64, grav: &GravitySpec) -> (Vector3<f64>, Vector3<f64>) {
        let k = self.sample(t);
        (k.omega, k.rot.inverse().act(&(k.acc - grav.vector())))
    }

    /// Arc length over `[0, duration]` [m], by the trapezoidal rule at 1 kHz.
    pub fn length(&self) -> f64 {
        let n = (self.spec.duration * 1000.0).ceil() as usize;
        let dt = self.spec.duration / n as f64;
        (0..n)
            .map(|i| {
                let a = self.sample(i as f64 * dt).v.norm();
                let b = self.sample((i + 1) as f64 * dt).v.norm();
                0.5 * (a + b) * dt
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub omega: Vector3<f64>,
    pub acc: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub t: f64,
    pub t_pose: Se23,
    pub b: Vector6,
}

/// Stamps `k / rate` for `k = 0, 1, …` up to `duration`, without drift.
pub fn stamps(rate: f64, duration: f64) -> Vec<f64> {
    let n = (duration * rate + 1e-9).floor() as usize;
    (0..=n).map(|k| k as f64 / rate).collect()
}

/// IMU samples and the true bias at each of them.
pub fn synth_imu(
    traj: &Trajectory,
    grav: &GravitySpec,
    noise: &NoiseSpec,
    rate: f64,
    bias0: &Vector6,
    seed: u64,
) -> (Vec<ImuSample>, Vec<Vector6>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 1.0 / rate;
    let sd = dt.sqrt();
    let mut bias = *bias0;
    let mut samples = Vec::new();
    let mut biases = Vec::new();
    let gauss = |rng: &mut ChaCha8Rng| -> Vector3<f64> {
        Vector3::from_fn(|_, _| StandardNormal.sample(rng))
    };
    for t in stamps(rate, traj.spec.duration) {
        let (w, a) = traj.ideal_imu(t, grav);
        let nw = gauss(&mut rng).component_mul(&noise.sigma_w) / sd;
        let na = gauss(&mut rng).component_mul(&noise.sigma_a) / sd;
        samples.push(ImuSample {
            t,
            omega: w + bias.fixed_rows::<3>(0) + nw,
            acc: a + bias.fixed_rows::<3>(3) + na,
        });
        biases.push(bias);
        let rw = gauss(&mut rng).component_mul(&noise.sigma_bw) * sd;
        let ra = gauss(&mut rng).component_mul(&noise.sigma_ba) * sd;
        bias.fixed_rows_mut::<3>(0).add_assign(&rw);
        bias.fixed_rows_mut::<3>(3).add_assign(&ra);
    }
    (samples, biases)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSpec {
    /// [Hz]
    pub imu_rate: f64,
    /// [Hz]
    pub cam_rate: f64,
    /// Camera pose in the IMU frame.
    pub true_s: Se3,
    pub true_k: Intrinsics,
    /// `(width, height)` [px]
    pub image_size: (u32, u32),
    pub noise: NoiseSpec,
    /// Longest track before it is restarted under a new id [frames].
    pub track_length_max: usize,
}

/// Forward-looking camera: optical axis along the IMU x axis, image x to the
/// IMU −y and image y to the IMU −z.
pub fn forward_camera_rotation() -> So3 {
    So3::from_matrix(Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0))
        .expect("proper rotation")
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            imu_rate: 200.0,
            cam_rate: 10.0,
            true_s: Se3::new(forward_camera_rotation(), Vector3::new(0.05, -0.02, 0.01)),
            true_k: Intrinsics::new(400.0, 400.0, 320.0, 240.0).expect("valid intrinsics"),
            image_size: (640, 480),
            noise: NoiseSpec::euroc(),
            track_length_max: 20,
        }
    }
}

impl SensorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.imu_rate > 0.0 && self.cam_rate > 0.0 && self.imu_rate >= self.cam_rate) {
            return Err(Error::InvalidArgument(format!(
                "rates must satisfy imu {} Hz >= camera {} Hz > 0",
                self.imu_rate, self.cam_rate
            )));
        }
        if self.track_length_max < 2 {
            return Err(Error::InvalidArgument("track_length_max must be >= 2 frames".into()));
        }
        self.noise.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkSpec {
    pub count: usize,
    /// Box edge lengths [m], centered on the trajectory center.
    pub box_size: Vector3<f64>,
    /// Minimum distance to the trajectory [m].
    pub clearance: f64,
}

impl Default for LandmarkSpec {
    fn default() -> Self {
        Self { count: 200, box_size: Vector3::new(10.0, 10.0, 4.0), clearance: 1.0 }
    }
}

/// Uniform landmarks in a box, rejecting points closer than the clearance to
/// the trajectory (sampled at 10 Hz). Gives up after `100 × count` draws.
pub fn gen_landmarks(traj: &Trajectory, spec: &LandmarkSpec, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let path: Vec<Vector3<f64>> =
        stamps(10.0, traj.spec.duration).iter().map(|t| traj.sample(*t).p).collect();
    let mut out = Vec::with_capacity(spec.count);
    let mut draws = 0;
    while out.len() < spec.count && draws < 100 * spec.count.max(1) {
        draws += 1;
        let u = Vector3::from_fn(|_, _| rng.random::<f64>() - 0.5);
        let p = traj.spec.center + u.component_mul(&spec.box_size);
        if path.iter().all(|q| (p - q).norm() >= spec.clearance) {
            out.push(p);
        }
    }
    out
}

/// Projects landmarks at every camera stamp, with track bookkeeping.
pub fn synth_tracks(
    traj: &Trajectory,
    landmarks: &[Vector3<f64>],
    sensor: &SensorSpec,
    seed: u64,
) -> Vec<FeatureTrack> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (sensor.image_size.0 as f64, sensor.image_size.1 as f64);
    let k = sensor.true_k.matrix();
    let mut next_id = 0u64;
    let mut active: HashMap<usize, FeatureTrack> = HashMap::new();
    let mut done = Vec::new();
    for t in stamps(sensor.cam_rate, traj.spec.duration) {
        let cam = traj.sample(t).pose().compose(&sensor.true_s).inverse();
        for (li, p) in landmarks.iter().enumerate() {
            let q = cam.act(p);
            let mut seen = None;
            if q.z > 1e-3 {
                let uv = k * (q / q.z);
                let n: Vector2<f64> = Vector2::from_fn(|_, _| StandardNormal.sample(&mut rng));
                let uv = Vector2::new(uv.x, uv.y) + n * sensor.noise.sigma_px;
                if uv.x >= 0.0 && uv.x < w && uv.y >= 0.0 && uv.y < h {
                    seen = Some(uv);
                }
            }
            match seen {
                Some(uv) => {
                    let full = active.get(&li).is_some_and(|tr| tr.obs.len() >= sensor.track_length_max);
                    if full {
                        done.push(active.remove(&li).expect("present"));
                    }
                    let tr = active.entry(li).or_insert_with(|| {
                        next_id += 1;
                        FeatureTrack::new(next_id - 1)
                    });
                    tr.obs.push((t, uv));
                }
                None => {
                    if let Some(tr) = active.remove(&li) {
                        done.push(tr);
                    }
                }
            }
        }
    }
    done.extend(active.into_values());
    done.sort_by_key(|tr| tr.id);
    done
}

/// Composes `true_s` with a rotation of exactly `angle_deg` about a random
/// axis and a translation of exactly `trans_m` along a random direction.
pub fn perturb_calibration(true_s: &Se3, angle_deg: f64, trans_m: f64, seed: u64) -> Result<Se3> {
    if !(angle_deg >= 0.0 && trans_m >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "perturbation must be >= 0 deg and >= 0 m, got {angle_deg} deg, {trans_m} m"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis: [f64; 3] = UnitSphere.sample(&mut rng);
    let dir: [f64; 3] = UnitSphere.sample(&mut rng);
    let axis = Vector3::from(axis).normalize();
    let dir = Vector3::from(dir).normalize();
    let delta = Se3::new(So3::exp(&(axis * angle_deg.to_radians())), dir * trans_m);
    Ok(true_s.compose(&delta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub groundtruth: Vec<GroundTruth>,
    pub imu: Vec<ImuSample>,
    pub tracks: Vec<FeatureTrack>,
    pub true_calib: (Se3, Intrinsics),
    pub landmarks: Vec<Vector3<f64>>,
}

/// Full dataset from one seed; sub-seeds are derived per stream.
pub fn simulate(
    traj_spec: &TrajectorySpec,
    sensor: &SensorSpec,
    landmarks: &LandmarkSpec,
    grav: &GravitySpec,
    bias0: &Vector6,
    seed: u64,
) -> Result<SimOutput> {
    sensor.validate()?;
    let traj = gen_trajectory(traj_spec)?;
    let lm = gen_landmarks(&traj, landmarks, traj_spec.seed);
    let (imu, biases) = synth_imu(&traj, grav, &sensor.noise, sensor.imu_rate, bias0, seed.wrapping_mul(2) + 1);
    let groundtruth = imu
        .iter()
        .zip(&biases)
        .map(|(s, b)| GroundTruth { t: s.t, t_pose: traj.sample(s.t).extended_pose(), b: *b })
        .collect();
    let tracks = synth_tracks(&traj, &lm, sensor, seed.wrapping_mul(2) + 2);
    Ok(SimOutput { groundtruth, imu, tracks, true_calib: (sensor.true_s, sensor.true_k), landmarks: lm })
}
