use crate::dataio::GRAVITY;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

use super::guidance::GuidanceTarget;
use super::vehicle::{ControlCommand, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Anti-windup limit on the integrated position error, m s.
    pub i_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidGains {
    pub horizontal: AxisGains,
    pub vertical: AxisGains,
}

impl Default for PidGains {
    fn default() -> Self {
        PidGains {
            horizontal: AxisGains {
                kp: 6.0,
                ki: 0.2,
                kd: 4.5,
                i_limit: 0.5,
            },
            vertical: AxisGains {
                kp: 6.0,
                ki: 0.2,
                kd: 4.5,
                i_limit: 0.5,
            },
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        for g in [self.horizontal, self.vertical] {
            let vals = [g.kp, g.ki, g.kd, g.i_limit];
            if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidSpec(format!("controller gains {g:?}")));
            }
        }
        Ok(())
    }

    fn axis(&self, i: usize) -> AxisGains {
        if i == 2 {
            self.vertical
        } else {
            self.horizontal
        }
    }
}

/// Cascaded position controller: PID on the position error with velocity
/// feed-forward gives a desired acceleration, which is inverted exactly into
/// thrust and pitch/roll at a held yaw.
#[derive(Debug, Clone, PartialEq)]
pub struct PidController {
    pub gains: PidGains,
    integral: Vec3,
}

impl PidController {
    pub fn new(gains: PidGains) -> Self {
        PidController {
            gains,
            integral: Vec3::zeros(),
        }
    }

    pub fn integral(&self) -> Vec3 {
        self.integral
    }

    /// Desired world acceleration; advances the integrator by `dt`.
    pub fn acceleration(&mut self, position: &Vec3, velocity: &Vec3, target: &GuidanceTarget, dt: f64) -> Vec3 {
        let e = target.position - position;
        let de = target.velocity - velocity;
        let mut a = Vec3::zeros();
        for i in 0..3 {
            let g = self.gains.axis(i);
            self.integral[i] = (self.integral[i] + e[i] * dt).clamp(-g.i_limit, g.i_limit);
            a[i] = g.kp * e[i] + g.ki * self.integral[i] + g.kd * de[i];
        }
        a
    }

    pub fn command(
        &mut self,
        position: &Vec3,
        velocity: &Vec3,
        target: &GuidanceTarget,
        yaw: f64,
        params: &VehicleParams,
        dt: f64,
    ) -> ControlCommand {
        let a = self.acceleration(position, velocity, target, dt);
        invert_thrust(&a, velocity, yaw, params)
    }
}

/// Thrust and angles that produce world acceleration `a` at velocity `v`
/// (drag compensated), clamped to the vehicle envelope.
pub fn invert_thrust(a: &Vec3, v: &Vec3, yaw: f64, params: &VehicleParams) -> ControlCommand {
    let f = (a + Vec3::z() * GRAVITY) * params.mass + v * params.drag;
    // keep some upward thrust so the attitude stays defined
    let f = Vec3::new(f.x, f.y, f.z.max(0.1 * params.hover_thrust()));
    let (sy, cy) = yaw.sin_cos();
    let fx = cy * f.x + sy * f.y;
    let fy = -sy * f.x + cy * f.y;
    let thrust = f.norm();
    let roll = (-fy / thrust).clamp(-1.0, 1.0).asin();
    let pitch = (-fx).atan2(f.z);
    ControlCommand {
        thrust,
        yaw,
        pitch,
        roll,
    }
    .clamped(params)
}

#[cfg(test)]
mod tests {
    use super::super::guidance::Phase;
    use super::super::vehicle::thrust_direction;
    use super::*;

    fn target(p: Vec3) -> GuidanceTarget {
        GuidanceTarget {
            position: p,
            velocity: Vec3::zeros(),
            phase: Phase::Transit,
        }
    }

    #[test]
    fn on_target_means_hover() {
        let params = VehicleParams::default();
        let mut c = PidController::new(PidGains::default());
        let p = Vec3::new(1.0, 2.0, 3.0);
        let cmd = c.command(&p, &Vec3::zeros(), &target(p), 0.7, &params, 0.01);
        assert!((cmd.thrust - params.hover_thrust()).abs() < 1e-12);
        assert!(cmd.pitch.abs() < 1e-12 && cmd.roll.abs() < 1e-12);
        assert_eq!(cmd.yaw, 0.7);
    }

    #[test]
    fn forward_error_pitches_nose_down() {
        let params = VehicleParams::default();
        let mut c = PidController::new(PidGains::default());
        let cmd = c.command(&Vec3::zeros(), &Vec3::zeros(), &target(Vec3::x()), 0.0, &params, 0.01);
        assert!(cmd.pitch < 0.0);
        assert!(cmd.roll.abs() < 1e-12);
        let d = thrust_direction(cmd.roll, cmd.pitch, cmd.yaw);
        assert!(d.x > 0.0);
    }

    #[test]
    fn inversion_is_exact_inside_the_envelope() {
        let params = VehicleParams::default();
        for (a, v, yaw) in [
            (Vec3::new(1.0, -2.0, 0.5), Vec3::new(0.3, 0.1, 0.0), 0.0),
            (Vec3::new(-0.5, 0.7, -1.0), Vec3::new(-1.0, 0.2, 0.4), 1.2),
        ] {
            let cmd = invert_thrust(&a, &v, yaw, &params);
            let got = thrust_direction(cmd.roll, cmd.pitch, cmd.yaw) * (cmd.thrust / params.mass)
                - Vec3::z() * GRAVITY
                - v * (params.drag / params.mass);
            assert!((got - a).norm() < 1e-12, "{got:?} vs {a:?}");
        }
    }

    #[test]
    fn integrator_is_clamped() {
        let mut c = PidController::new(PidGains::default());
        for _ in 0..10_000 {
            c.acceleration(&Vec3::zeros(), &Vec3::zeros(), &target(Vec3::new(5.0, -5.0, 5.0)), 0.01);
        }
        assert_eq!(c.integral(), Vec3::new(0.5, -0.5, 0.5));
    }

    /// Unit step on `x'' = u` with the default gains, simulated finely.
    fn step_response(g: AxisGains) -> (f64, f64) {
        let dt = 1e-3;
        let (mut x, mut v, mut i) = (0.0f64, 0.0f64, 0.0f64);
        let (mut peak, mut settled_at) = (0.0f64, 0.0);
        for k in 0..20_000 {
            let t = k as f64 * dt;
            let e = 1.0 - x;
            i = (i + e * dt).clamp(-g.i_limit, g.i_limit);
            let u = g.kp * e + g.ki * i - g.kd * v;
            v += u * dt;
            x += v * dt;
            peak = peak.max(x);
            if (x - 1.0).abs() > 0.02 {
                settled_at = t;
            }
        }
        (peak - 1.0, settled_at)
    }

    #[test]
    fn default_gains_step_response() {
        let gains = PidGains::default();
        for g in [gains.horizontal, gains.vertical] {
            let (overshoot, settle) = step_response(g);
            assert!(overshoot < 0.10, "{overshoot}");
            assert!(settle < 8.0, "{settle}");
        }
    }
}
