use crate::dataio::GRAVITY;
use crate::error::{Error, Result};
use crate::geometry::{Pose, Quat, Vec3};

/// Point-mass quadrotor with a first-order attitude response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    pub mass: f64,
    /// Linear drag coefficient, N s/m.
    pub drag: f64,
    /// Time constant of the attitude response to commanded angles, s.
    pub attitude_lag: f64,
    /// Pitch and roll envelope, rad.
    pub max_tilt: f64,
    /// Maximum thrust as a multiple of the weight.
    pub max_thrust_ratio: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            mass: 1.0,
            drag: 0.1,
            attitude_lag: 0.15,
            max_tilt: 30f64.to_radians(),
            max_thrust_ratio: 2.5,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mass > 0.0
            && self.drag >= 0.0
            && self.attitude_lag > 0.0
            && self.max_tilt > 0.0
            && self.max_tilt < std::f64::consts::FRAC_PI_2
            && self.max_thrust_ratio >= 1.0;
        if !ok || ![self.mass, self.drag, self.attitude_lag, self.max_thrust_ratio].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidSpec(format!("vehicle parameters {self:?}")));
        }
        Ok(())
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * GRAVITY
    }

    pub fn max_thrust(&self) -> f64 {
        self.max_thrust_ratio * self.hover_thrust()
    }
}

/// Thrust and attitude setpoint. Angles follow the aviation sense in a
/// z-up world: positive pitch raises the nose (thrust tips toward `-x` at
/// zero yaw), positive roll lowers the right side (thrust tips toward `-y`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    /// N
    pub thrust: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl ControlCommand {
    pub fn hover(params: &VehicleParams, yaw: f64) -> Self {
        ControlCommand {
            thrust: params.hover_thrust(),
            yaw,
            pitch: 0.0,
            roll: 0.0,
        }
    }

    /// Limits thrust to `[0, max]` and pitch and roll to the tilt envelope.
    pub fn clamped(self, params: &VehicleParams) -> Self {
        let tilt = params.max_tilt;
        ControlCommand {
            thrust: self.thrust.clamp(0.0, params.max_thrust()),
            yaw: self.yaw,
            pitch: self.pitch.clamp(-tilt, tilt),
            roll: self.roll.clamp(-tilt, tilt),
        }
    }
}

/// `Rz(yaw) Ry(-pitch) Rx(roll)`
pub fn attitude_quat(roll: f64, pitch: f64, yaw: f64) -> Quat {
    let rz = Quat::from_axis_angle(Vec3::z(), yaw);
    let ry = Quat::from_axis_angle(Vec3::y(), -pitch);
    let rx = Quat::from_axis_angle(Vec3::x(), roll);
    rz.mul(ry).mul(rx)
}

/// Inverse of [`attitude_quat`] as `(roll, pitch, yaw)`.
pub fn attitude_angles(q: Quat) -> (f64, f64, f64) {
    let r = q.to_rotation_matrix();
    let pitch = r[(2, 0)].clamp(-1.0, 1.0).asin();
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    (roll, pitch, yaw)
}

/// Unit thrust direction in the world frame for the given angles.
pub fn thrust_direction(roll: f64, pitch: f64, yaw: f64) -> Vec3 {
    let (sy, cy) = yaw.sin_cos();
    let body = Vec3::new(-pitch.sin() * roll.cos(), -roll.sin(), pitch.cos() * roll.cos());
    Vec3::new(cy * body.x - sy * body.y, sy * body.x + cy * body.y, body.z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Body to world, unit norm.
    pub orientation: Quat,
    /// Body frame, rad/s.
    pub angular_velocity: Vec3,
    pub time: f64,
}

impl VehicleState {
    pub fn at_rest(position: Vec3, yaw: f64) -> Self {
        VehicleState {
            position,
            velocity: Vec3::zeros(),
            orientation: attitude_quat(0.0, 0.0, yaw),
            angular_velocity: Vec3::zeros(),
            time: 0.0,
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.position, self.orientation, self.time).expect("vehicle orientation is unit norm")
    }

    /// World-frame acceleration under thrust `thrust` at the current attitude.
    pub fn acceleration(&self, params: &VehicleParams, thrust: f64) -> Vec3 {
        let up = self.orientation.rotate(Vec3::z());
        up * (thrust / params.mass) - Vec3::z() * GRAVITY - self.velocity * (params.drag / params.mass)
    }

    /// Accelerometer reading in the body frame.
    pub fn specific_force(&self, params: &VehicleParams, thrust: f64) -> Vec3 {
        let a = self.acceleration(params, thrust) + Vec3::z() * GRAVITY;
        self.orientation.to_rotation_matrix().transpose() * a
    }
}

/// Advances the vehicle by `dt`.
///
/// The attitude angles relax exponentially toward the command. Translation
/// uses the acceleration at the start of the step, `p += v dt + a dt^2 / 2`,
/// which is exact for a constant acceleration.
pub fn dynamics_step(state: &VehicleState, cmd: &ControlCommand, params: &VehicleParams, dt: f64) -> VehicleState {
    let a = state.acceleration(params, cmd.thrust);
    let position = state.position + state.velocity * dt + a * (0.5 * dt * dt);
    let velocity = state.velocity + a * dt;

    let (roll, pitch, yaw) = attitude_angles(state.orientation);
    let keep = (-dt / params.attitude_lag).exp();
    let relax = |cur: f64, target: f64| target + (cur - target) * keep;
    let yaw_err = (cmd.yaw - yaw + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    let orientation = attitude_quat(relax(roll, cmd.roll), relax(pitch, cmd.pitch), yaw + yaw_err * (1.0 - keep));

    // body rate from the rotation over the step
    let dq = state.orientation.conj().mul(orientation);
    let (s, w) = (Vec3::new(dq.x, dq.y, dq.z), dq.w);
    let angle = 2.0 * s.norm().atan2(w.abs());
    let axis = if w < 0.0 { -s } else { s };
    let angular_velocity = if angle > 0.0 {
        axis.normalize() * (angle / dt)
    } else {
        Vec3::zeros()
    };

    VehicleState {
        position,
        velocity,
        orientation,
        angular_velocity,
        time: state.time + dt,
    }
}
