//! Closed-loop quadrotor simulation: point-mass dynamics, schedule-based
//! guidance, a PID position controller and an online pose estimator that
//! sees rendered frames and noisy IMU readings.

mod control;
mod guidance;
mod mission;
mod vehicle;

pub use control::{invert_thrust, AxisGains, PidController, PidGains};
pub use guidance::{guidance, FlightPlan, GuidanceTarget, Phase};
pub use mission::Mission;
pub use vehicle::{
    attitude_angles, attitude_quat, dynamics_step, thrust_direction, ControlCommand, VehicleParams, VehicleState,
};

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataio::{render_frame, Frame, ImuSample, ImuWindow, NoisyImu, Observation, WorldSpec};
use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};
use crate::kalman::{self, ConstantVelocity, GaussianSampler, KalmanModel, KalmanState};
use crate::model::FusionModel;
use crate::nn::LstmState;

/// Source of the pose fed to guidance and control.
#[derive(Debug, Clone)]
pub enum Estimator {
    /// The true state at every control step.
    Truth,
    /// Constant-velocity Kalman filter on noisy position fixes at camera
    /// rate.
    Kalman { accel_psd: f64, meas_sigma: f64 },
    /// The fusion model, fed rendered frames and IMU windows at camera rate.
    Learned(Box<FusionModel>),
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Truth => "truth",
            Estimator::Kalman { .. } => "kf",
            Estimator::Learned(_) => "learned",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightRecord {
    pub time: f64,
    pub truth: Pose,
    pub estimate: Pose,
    pub target: GuidanceTarget,
    pub command: ControlCommand,
    /// A dropped frame arrived at this step.
    pub corrupted: bool,
    /// The estimator took the IMU-only branch at this step.
    pub imu_only: bool,
}

pub const FLIGHT_CSV_HEADER: &str = "t,true_px,true_py,true_pz,true_qw,true_qx,true_qy,true_qz,\
est_px,est_py,est_pz,est_qw,est_qx,est_qy,est_qz,des_px,des_py,des_pz,des_vx,des_vy,des_vz,\
cmd_F,cmd_psi,cmd_theta,cmd_phi,corrupted,imu_only";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlightLog {
    pub records: Vec<FlightRecord>,
}

impl FlightLog {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{FLIGHT_CSV_HEADER}\n");
        for r in &self.records {
            let v = |p: &Pose| {
                let x = p.to_vector();
                format!("{},{},{},{},{},{},{}", x[0], x[1], x[2], x[3], x[4], x[5], x[6])
            };
            let (tp, tv) = (r.target.position, r.target.velocity);
            let c = r.command;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.time,
                v(&r.truth),
                v(&r.estimate),
                tp.x,
                tp.y,
                tp.z,
                tv.x,
                tv.y,
                tv.z,
                c.thrust,
                c.yaw,
                c.pitch,
                c.roll,
                r.corrupted as u8,
                r.imu_only as u8
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlightStatus {
    Landed { time: f64 },
    /// Ground contact faster than the touchdown speed.
    Crashed { time: f64, sink_rate: f64 },
    TimedOut,
    /// The estimator failed; the log holds everything up to the failure.
    Aborted(String),
}

#[derive(Debug, Clone)]
pub struct FlightOutcome {
    pub log: FlightLog,
    pub status: FlightStatus,
    pub final_state: VehicleState,
    /// Horizontal distance from the pad center when the run ended, m.
    pub landing_error: f64,
    pub frames: usize,
    pub corrupted_frames: usize,
    /// Frames whose pixel variance sent the learned estimator down the
    /// IMU-only branch.
    pub imu_only_updates: usize,
}

impl FlightOutcome {
    pub fn landed(&self) -> bool {
        matches!(self.status, FlightStatus::Landed { .. })
    }

    pub fn summary(&self, estimator: &str) -> String {
        let status = match &self.status {
            FlightStatus::Landed { time } => format!("landed at {time:.2} s"),
            FlightStatus::Crashed { time, sink_rate } => format!("crashed at {time:.2} s, sinking {sink_rate:.2} m/s"),
            FlightStatus::TimedOut => "timed out".to_string(),
            FlightStatus::Aborted(e) => format!("aborted: {e}"),
        };
        let est_err: Vec<f64> = self
            .log
            .records
            .iter()
            .map(|r| (r.estimate.position - r.truth.position).norm())
            .collect();
        let est_rmse = crate::geometry::rms(&est_err).unwrap_or(f64::NAN);
        let mut out = String::new();
        let _ = writeln!(out, "estimator = {estimator}");
        let _ = writeln!(out, "status = {status}");
        let _ = writeln!(out, "landing_error_m = {:.6}", self.landing_error);
        let _ = writeln!(out, "estimate_rmse_m = {est_rmse:.6}");
        let _ = writeln!(out, "frames = {}", self.frames);
        let _ = writeln!(out, "corrupted_frames = {}", self.corrupted_frames);
        let _ = writeln!(out, "imu_only_updates = {}", self.imu_only_updates);
        out
    }
}

/// Position and velocity handed to the controller.
struct Estimate {
    pose: Pose,
    velocity: Vec3,
}

enum Runtime {
    Truth,
    Kalman {
        model: KalmanModel,
        state: KalmanState,
        noise: GaussianSampler,
        /// Time and true orientation of the last fix.
        fixed_at: f64,
        last_fix: Pose,
    },
    Learned {
        model: Box<FusionModel>,
        prev: Pose,
        before: Pose,
        core: LstmState,
    },
}

/// Velocity standard deviation of the filter's prior at take off, m/s.
const KF_INITIAL_VELOCITY_STD: f64 = 0.1;

impl Runtime {
    fn new(est: &Estimator, mission: &Mission, start: &VehicleState) -> Result<Self> {
        match est {
            Estimator::Truth => Ok(Runtime::Truth),
            Estimator::Kalman { accel_psd, meas_sigma } => {
                let cv = ConstantVelocity {
                    dt: 1.0 / mission.camera_rate_hz,
                    accel_psd: *accel_psd,
                    meas_sigma: *meas_sigma,
                    axes: 3,
                };
                let model = cv.model()?;
                let mut mean = DVector::zeros(6);
                mean.rows_mut(0, 3).copy_from(&start.position);
                let mut p0 = DMatrix::zeros(6, 6);
                for i in 0..3 {
                    p0[(i, i)] = meas_sigma * meas_sigma;
                    p0[(i + 3, i + 3)] = KF_INITIAL_VELOCITY_STD.powi(2);
                }
                let state = KalmanState::new(&model, mean, p0)?;
                let noise = GaussianSampler::new(model.r());
                Ok(Runtime::Kalman {
                    model,
                    state,
                    noise,
                    fixed_at: 0.0,
                    last_fix: start.pose(),
                })
            }
            Estimator::Learned(m) => {
                if m.config.image_shape != mission.image_shape {
                    return Err(Error::InvalidSpec(format!(
                        "model expects {:?} frames, mission renders {:?}",
                        m.config.image_shape, mission.image_shape
                    )));
                }
                Ok(Runtime::Learned {
                    core: m.initial_state(),
                    model: m.clone(),
                    prev: start.pose(),
                    before: start.pose(),
                })
            }
        }
    }

    fn needs_frames(&self) -> bool {
        matches!(self, Runtime::Learned { .. })
    }

    /// Handles a camera tick; returns whether the IMU-only branch ran.
    fn on_frame(
        &mut self,
        truth: &VehicleState,
        frame: Option<Frame>,
        imu: ImuWindow,
        rng: &mut ChaCha8Rng,
    ) -> Result<bool> {
        match self {
            Runtime::Truth => Ok(false),
            Runtime::Kalman {
                model,
                state,
                noise,
                fixed_at,
                last_fix,
            } => {
                let y = DVector::from_column_slice(truth.position.as_slice()) + noise.sample(rng);
                *state = kalman::kf_step(model, state, &y)?;
                *fixed_at = truth.time;
                *last_fix = truth.pose();
                Ok(false)
            }
            Runtime::Learned {
                model,
                prev,
                before,
                core,
            } => {
                let frame = frame.expect("frames are rendered for the learned estimator");
                let obs = Observation {
                    frame,
                    imu,
                    ground_truth: None,
                };
                let p = model.predict(&obs, prev, core)?;
                *before = *prev;
                *prev = p.pose;
                *core = p.state;
                Ok(p.imu_only)
            }
        }
    }

    fn estimate(&self, truth: &VehicleState, t: f64) -> Estimate {
        match self {
            Runtime::Truth => Estimate {
                pose: truth.pose(),
                velocity: truth.velocity,
            },
            Runtime::Kalman {
                state,
                fixed_at,
                last_fix,
                ..
            } => {
                let p = Vec3::new(state.mean[0], state.mean[1], state.mean[2]);
                let v = Vec3::new(state.mean[3], state.mean[4], state.mean[5]);
                let mut pose = *last_fix;
                pose.position = p + v * (t - fixed_at);
                pose.timestamp = t;
                Estimate { pose, velocity: v }
            }
            Runtime::Learned { prev, before, .. } => {
                let span = prev.timestamp - before.timestamp;
                let v = if span > 0.0 {
                    (prev.position - before.position) / span
                } else {
                    Vec3::zeros()
                };
                let mut pose = *prev;
                pose.position += v * (t - prev.timestamp);
                pose.timestamp = t;
                Estimate { pose, velocity: v }
            }
        }
    }
}

/// Seed offsets for the independent random streams of a run.
const IMU_STREAM: u64 = 0x1;
const FRAME_STREAM: u64 = 0x2;
const FIX_STREAM: u64 = 0x3;

/// Flies `mission` with `estimator` in `world`.
///
/// The loop runs at the control rate. Each camera tick renders a frame of
/// the true pose (dropped with the mission's corruption probability) and
/// hands it with the IMU readings since the previous tick to the estimator;
/// between ticks the controller extrapolates the latest estimate with its
/// implied velocity. The run ends at ground contact or at the timeout.
pub fn fly(mission: &Mission, estimator: &Estimator, world: &WorldSpec, seed: u64) -> Result<FlightOutcome> {
    mission.validate()?;
    world.validate()?;
    let dt = mission.control_dt();
    let per_frame = mission.steps_per_frame()?;
    let params = mission.vehicle;
    let max_steps = (mission.timeout_s * mission.control_rate_hz).ceil() as usize;
    let time_of = |i: usize| i as f64 / mission.control_rate_hz;

    let mut state = VehicleState::at_rest(mission.plan.waypoints[0].1, mission.yaw);
    let mut runtime = Runtime::new(estimator, mission, &state)?;
    let mut controller = PidController::new(mission.gains);
    let mut imu_sensor = NoisyImu::new(mission.noise, seed ^ IMU_STREAM);
    let mut frame_rng = ChaCha8Rng::seed_from_u64(seed ^ FRAME_STREAM);
    let mut fix_rng = ChaCha8Rng::seed_from_u64(seed ^ FIX_STREAM);
    let mut imu_buffer: Vec<ImuSample> = Vec::with_capacity(per_frame);

    let mut log = FlightLog::default();
    let (mut frames, mut corrupted_frames, mut imu_only_updates) = (0, 0, 0);
    let mut status = FlightStatus::TimedOut;

    for i in 0..=max_steps {
        let t = time_of(i);
        state.time = t;
        if state.position.z <= mission.touchdown_altitude {
            let sink = -state.velocity.z;
            status = if sink < mission.touchdown_speed {
                FlightStatus::Landed { time: t }
            } else {
                FlightStatus::Crashed { time: t, sink_rate: sink }
            };
            break;
        }
        if i == max_steps {
            break;
        }

        let (mut corrupted, mut imu_only) = (false, false);
        if i > 0 && i % per_frame == 0 {
            frames += 1;
            corrupted = frame_rng.random::<f64>() < mission.corrupt_fraction;
            corrupted_frames += corrupted as usize;
            let frame = if runtime.needs_frames() {
                let mut f = render_frame(world, &state.pose(), mission.image_shape)?;
                f.quantize();
                if corrupted {
                    f.corrupt();
                }
                Some(f)
            } else {
                None
            };
            let window = ImuWindow::new(std::mem::take(&mut imu_buffer), time_of(i - per_frame), t)?;
            match runtime.on_frame(&state, frame, window, &mut fix_rng) {
                Ok(b) => imu_only = b,
                Err(e) => {
                    status = FlightStatus::Aborted(e.to_string());
                    break;
                }
            }
            imu_only_updates += imu_only as usize;
        }

        let est = runtime.estimate(&state, t);
        let target = guidance(&mission.plan, t)?;
        let command = controller.command(&est.pose.position, &est.velocity, &target, mission.yaw, &params, dt);
        imu_buffer.push(imu_sensor.read(t, state.specific_force(&params, command.thrust), state.angular_velocity));
        log.records.push(FlightRecord {
            time: t,
            truth: state.pose(),
            estimate: est.pose,
            target,
            command,
            corrupted,
            imu_only,
        });
        state = dynamics_step(&state, &command, &params, dt);
    }

    let (px, py) = mission.plan.pad;
    let landing_error = ((state.position.x - px).powi(2) + (state.position.y - py).powi(2)).sqrt();
    Ok(FlightOutcome {
        log,
        status,
        final_state: state,
        landing_error,
        frames,
        corrupted_frames,
        imu_only_updates,
    })
}
