//! Seeded simulation runs, Monte Carlo consistency and robustness grids.

use nalgebra::Vector6;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{frames_from_tracks, run, with_empty_frames, RunOptions, RunOutput};
use crate::eval::{classify_convergence, extrinsic_error, Convergence, RunRecord};
use crate::filter::{initial_covariance, perturb_state, FilterConfig, FilterState, InitialStd};
use crate::sim::{
    gen_trajectory, perturb_calibration, simulate, stamps, LandmarkSpec, SensorSpec, SimOutput,
    TrajectorySpec,
};
use crate::lie::Se3;
use crate::symmetry::{GravitySpec, SystemState, Vector25};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Start exactly at the true state.
    Truth,
    /// Start at a draw from the prior around the true state.
    Sampled,
}

/// Everything that defines a seeded synthetic run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub traj: TrajectorySpec,
    pub sensor: SensorSpec,
    pub landmarks: LandmarkSpec,
    pub grav: GravitySpec,
    pub bias0: Vector6<f64>,
    /// Filter tuning; its noise may differ from `sensor.noise`.
    pub filter: FilterConfig,
    pub init_std: InitialStd,
    pub init: InitMode,
    /// Injected extrinsic error `(deg, m)` applied on top of the initial
    /// estimate.
    pub extrinsic_error: Option<(f64, f64)>,
    pub audit_gauge: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        let sensor = SensorSpec::default();
        let filter = FilterConfig { noise: sensor.noise, ..Default::default() };
        Self {
            traj: TrajectorySpec::default(),
            sensor,
            landmarks: LandmarkSpec::default(),
            grav: GravitySpec::default(),
            bias0: Vector6::zeros(),
            filter,
            init_std: InitialStd::default(),
            init: InitMode::Sampled,
            extrinsic_error: None,
            audit_gauge: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub seed: u64,
    pub sim: SimOutput,
    pub truth0: SystemState,
    pub init: SystemState,
    pub output: RunOutput,
    pub record: RunRecord,
}

impl Scenario {
    /// Injects an extrinsic error with a prior whose per-axis standard
    /// deviation equals the error magnitude.
    pub fn with_matched_extrinsic(mut self, deg: f64, m: f64) -> Self {
        self.extrinsic_error = Some((deg, m));
        self.init_std.ext_rot = deg.to_radians();
        self.init_std.ext_trans = m;
        self
    }
}

impl ScenarioRun {
    /// `(t, deg, m)` extrinsic error at each camera stamp.
    pub fn extrinsic_series(&self) -> Vec<(f64, f64, f64)> {
        let truth = self.sim.true_calib.0;
        self.output
            .rows
            .iter()
            .map(|r| {
                let (d, m) = extrinsic_error(&truth, &r.state.s);
                (r.t, d, m)
            })
            .collect()
    }

    pub fn final_extrinsic_error(&self) -> (f64, f64) {
        self.extrinsic_series().last().map(|e| (e.1, e.2)).unwrap_or((f64::NAN, f64::NAN))
    }
}

/// Initial estimate drawn from the prior around `truth`. With `keep_extrinsic`
/// the extrinsic block is left at its value in `truth`.
pub fn sample_initial_state(
    truth: &SystemState,
    std: &InitialStd,
    seed: u64,
    keep_extrinsic: bool,
) -> Result<SystemState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let sd = std.physical_covariance().diagonal().map(f64::sqrt);
    let mut z = Vector25::from_fn(|_, _| StandardNormal.sample(&mut rng));
    if keep_extrinsic {
        z.fixed_rows_mut::<6>(15).fill(0.0);
    }
    // Initial estimate = truth ⊕ (−δ), so that truth ≈ estimate ⊕ δ.
    perturb_state(truth, &(-z.component_mul(&sd)))
}

/// The injected extrinsic error of a seeded run, applied on top of `s`.
pub fn inject_extrinsic_error(s: &Se3, (deg, m): (f64, f64), seed: u64) -> Result<Se3> {
    perturb_calibration(s, deg, m, seed ^ 0x5eed_ca1b)
}

/// Simulates and filters one seeded run.
pub fn run_scenario(sc: &Scenario, seed: u64) -> Result<ScenarioRun> {
    sc.init_std.validate()?;
    sc.filter.noise.validate()?;
    let sim = simulate(&sc.traj, &sc.sensor, &sc.landmarks, &sc.grav, &sc.bias0, seed)?;
    let traj = gen_trajectory(&sc.traj)?;
    let t0 = sim.imu.first().map(|s| s.t).ok_or_else(|| Error::InvalidArgument("empty IMU".into()))?;
    let truth0 = SystemState {
        t: traj.sample(t0).extended_pose(),
        b: sc.bias0,
        s: sc.sensor.true_s,
        k: sc.sensor.true_k,
    };
    let std = sc.init_std;
    let mut init = match sc.init {
        InitMode::Truth => truth0,
        // An injected extrinsic error replaces the random extrinsic draw.
        InitMode::Sampled => sample_initial_state(&truth0, &std, seed, sc.extrinsic_error.is_some())?,
    };
    if let Some(err) = sc.extrinsic_error {
        init.s = inject_extrinsic_error(&init.s, err, seed)?;
    }
    let cov = initial_covariance(&init, &std);
    let state = FilterState::new(init, cov, t0)?;
    let cam = stamps(sc.sensor.cam_rate, sc.traj.duration);
    let frames = with_empty_frames(frames_from_tracks(&sim.tracks), &cam);
    let output = run(state, &sim.imu, &frames, &sc.filter, &RunOptions { audit_gauge: sc.audit_gauge, ..Default::default() })?;
    let record = RunRecord {
        stamps: output.rows.iter().map(|r| r.t).collect(),
        est_poses: output.rows.iter().map(|r| r.state.pose()).collect(),
        est_calib: output.rows.iter().map(|r| (r.state.s, r.state.k)).collect(),
        pose_covs: output.rows.iter().map(|r| r.pose_cov).collect(),
        truth_poses: output.rows.iter().map(|r| traj.sample(r.t).pose()).collect(),
        origin: init.pose(),
    };
    Ok(ScenarioRun { seed, sim, truth0, init, output, record })
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Runs `seeds` in parallel; results keep the seed order.
pub fn monte_carlo(sc: &Scenario, seeds: &[u64], threads: Option<usize>) -> Result<Vec<Result<ScenarioRun>>> {
    let p = pool(threads)?;
    Ok(p.install(|| seeds.par_iter().map(|s| run_scenario(sc, *s)).collect()))
}

/// Convergence thresholds for robustness runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceSpec {
    pub max_rot_deg: f64,
    pub max_trans_m: f64,
    /// Aligned position error above which a run counts as diverged.
    pub divergence_m: f64,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self { max_rot_deg: 2.0, max_trans_m: 0.02, divergence_m: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunVerdict {
    pub seed: u64,
    pub diverged: bool,
    pub extrinsic_converged: bool,
    pub final_rot_deg: f64,
    pub final_trans_m: f64,
    /// The run aborted with an error.
    pub errored: bool,
}

impl RunVerdict {
    pub fn failed(&self) -> bool {
        self.errored || self.diverged || !self.extrinsic_converged
    }
}

pub fn judge(run: &Result<ScenarioRun>, seed: u64, spec: &ConvergenceSpec) -> RunVerdict {
    match run {
        Ok(r) => {
            let (d, m) = r.final_extrinsic_error();
            RunVerdict {
                seed,
                diverged: classify_convergence(&r.record, spec.divergence_m) == Convergence::Diverged,
                extrinsic_converged: d < spec.max_rot_deg && m < spec.max_trans_m,
                final_rot_deg: d,
                final_trans_m: m,
                errored: false,
            }
        }
        Err(_) => RunVerdict {
            seed,
            diverged: true,
            extrinsic_converged: false,
            final_rot_deg: f64::NAN,
            final_trans_m: f64::NAN,
            errored: true,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    /// Injected error `(deg, m)`.
    pub error: (f64, f64),
    /// Prior standard deviation `(deg, m)`.
    pub prior: (f64, f64),
    /// Error in multiples of the prior (rotation part).
    pub sigma_level: f64,
    pub runs: usize,
    pub diverged: usize,
    pub not_converged: usize,
    pub errored: usize,
    pub failures: usize,
}

/// Robustness grid. Every cell runs `runs_per_cell` seeds starting at
/// `base_seed`; run errors are counted as failures.
pub fn sweep(
    sc: &Scenario,
    errors: &[(f64, f64)],
    priors: &[(f64, f64)],
    runs_per_cell: usize,
    base_seed: u64,
    conv: &ConvergenceSpec,
    threads: Option<usize>,
) -> Result<Vec<SweepCell>> {
    if errors.is_empty() || priors.is_empty() || runs_per_cell == 0 {
        return Err(Error::InvalidArgument("sweep grids and runs per cell must be nonempty".into()));
    }
    let jobs: Vec<(usize, usize, u64)> = (0..priors.len())
        .flat_map(|p| {
            (0..errors.len()).flat_map(move |e| (0..runs_per_cell as u64).map(move |k| (p, e, base_seed + k)))
        })
        .collect();
    let p = pool(threads)?;
    let verdicts: Vec<(usize, usize, RunVerdict)> = p.install(|| {
        jobs.par_iter()
            .map(|&(pi, ei, seed)| {
                let (pd, pm) = priors[pi];
                let mut cell = sc.clone();
                cell.init_std.ext_rot = pd.to_radians();
                cell.init_std.ext_trans = pm;
                cell.extrinsic_error = Some(errors[ei]);
                let r = run_scenario(&cell, seed);
                (pi, ei, judge(&r, seed, conv))
            })
            .collect()
    });
    let mut cells = Vec::new();
    for (pi, prior) in priors.iter().enumerate() {
        for (ei, error) in errors.iter().enumerate() {
            let vs: Vec<&RunVerdict> =
                verdicts.iter().filter(|v| v.0 == pi && v.1 == ei).map(|v| &v.2).collect();
            cells.push(SweepCell {
                error: *error,
                prior: *prior,
                sigma_level: if prior.0 > 0.0 { error.0 / prior.0 } else { f64::INFINITY },
                runs: vs.len(),
                diverged: vs.iter().filter(|v| v.diverged).count(),
                not_converged: vs.iter().filter(|v| !v.extrinsic_converged).count(),
                errored: vs.iter().filter(|v| v.errored).count(),
                failures: vs.iter().filter(|v| v.failed()).count(),
            });
        }
    }
    Ok(cells)
}
