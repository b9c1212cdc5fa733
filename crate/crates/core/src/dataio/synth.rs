//! Synthetic flights: a smooth analytic trajectory, IMU readings derived from
//! it, and frames rendered along it.
//!
//! The path is a Catmull-Rom style spline (degree 7, at rest in acceleration and jerk at knots) through the waypoints, timed so each
//! segment takes `chord / speed` seconds, optionally followed by a vertical
//! descent with smooth speed ramps, then a hover. Attitude follows the thrust
//! direction (body `z` along `a + g`) at a fixed yaw, which is what a
//! quadrotor must do to produce the commanded acceleration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{Pose, Quat, Vec3};
use nalgebra::Matrix3;

use super::render::{render_frame, WorldSpec};
use super::{assemble, ns_to_seconds, Dataset, DatasetMeta, ImuSample};

pub const GRAVITY: f64 = 9.81;

/// Accelerometer and gyro noise, in m/s² and rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuNoise {
    pub accel_sigma: f64,
    pub gyro_sigma: f64,
    /// Spread of the constant per-run bias.
    pub accel_bias_sigma: f64,
    pub gyro_bias_sigma: f64,
}

impl ImuNoise {
    pub const NONE: ImuNoise = ImuNoise {
        accel_sigma: 0.0,
        gyro_sigma: 0.0,
        accel_bias_sigma: 0.0,
        gyro_bias_sigma: 0.0,
    };
}

impl Default for ImuNoise {
    fn default() -> Self {
        ImuNoise {
            accel_sigma: 0.05,
            gyro_sigma: 0.005,
            accel_bias_sigma: 0.02,
            gyro_bias_sigma: 0.001,
        }
    }
}

/// Vertical descent appended after the last waypoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Descent {
    /// Cruise sink rate, m/s.
    pub rate: f64,
    /// Altitude at which the descent stops.
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlightSpec {
    pub waypoints: Vec<Vec3>,
    /// Nominal cruise speed along the spline, m/s.
    pub speed: f64,
    /// Start and end the spline at zero velocity. When false the end
    /// tangents continue the first and last chords, so two waypoints give a
    /// constant-velocity line.
    pub rest_at_ends: bool,
    pub descent: Option<Descent>,
    pub yaw: f64,
    pub duration_s: f64,
    pub imu_rate_hz: f64,
    pub camera_rate_hz: f64,
    pub image_shape: (usize, usize, usize),
    pub noise: ImuNoise,
}

impl FlightSpec {
    /// The standard desk-scale training flight: shuttles between a start
    /// point, a point above the default landing pillar, and a low hover over
    /// that pillar. 201 frames at 10 Hz, so 200 observations.
    pub fn standard() -> Self {
        let a = Vec3::new(0.0, 0.0, 2.0);
        let b = Vec3::new(2.0, 1.0, 2.0);
        let c = Vec3::new(2.0, 1.0, 0.6);
        let d = Vec3::new(1.0, 0.5, 1.4);
        FlightSpec {
            waypoints: vec![a, b, c, d, a, b, c, d, a, b, c],
            speed: 0.8,
            rest_at_ends: true,
            descent: None,
            yaw: 0.0,
            duration_s: 20.1,
            imu_rate_hz: 100.0,
            camera_rate_hz: 10.0,
            image_shape: (36, 64, 1),
            noise: ImuNoise::default(),
        }
    }

    /// Samples between consecutive frames.
    pub fn imu_per_frame(&self) -> Result<usize> {
        let ratio = self.imu_rate_hz / self.camera_rate_hz;
        if !(ratio.is_finite() && ratio >= 1.0 && (ratio - ratio.round()).abs() < 1e-9) {
            return Err(Error::InvalidSpec(format!(
                "camera rate {} Hz must divide IMU rate {} Hz",
                self.camera_rate_hz, self.imu_rate_hz
            )));
        }
        Ok(ratio.round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.imu_rate_hz > 0.0 && self.camera_rate_hz > 0.0) {
            return Err(Error::InvalidSpec("sensor rates must be positive".into()));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::InvalidSpec(format!("duration {} s", self.duration_s)));
        }
        if self.waypoints.is_empty() {
            return Err(Error::InvalidSpec("no waypoints".into()));
        }
        if self.waypoints.len() > 1 && !(self.speed > 0.0) {
            return Err(Error::InvalidSpec(format!("speed {} m/s", self.speed)));
        }
        if let Some(d) = self.descent {
            if !(d.rate > 0.0) {
                return Err(Error::InvalidSpec(format!("descent rate {}", d.rate)));
            }
        }
        let (h, w, c) = self.image_shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::InvalidSpec(format!("image shape {:?}", self.image_shape)));
        }
        self.imu_per_frame()?;
        Ok(())
    }
}

/// Degree-7 Hermite segment with tangents in m/s and zero acceleration and
/// jerk at both ends, so acceleration (and hence attitude) is smooth across
/// knots.
#[derive(Debug, Clone)]
struct Segment {
    t0: f64,
    span: f64,
    p0: Vec3,
    p1: Vec3,
    m0: Vec3,
    m1: Vec3,
}

impl Segment {
    fn eval(&self, t: f64) -> (Vec3, Vec3, Vec3) {
        let h = self.span;
        let u = ((t - self.t0) / h).clamp(0.0, 1.0);
        let p = |c: [f64; 8]| -> [f64; 3] {
            let mut out = [0.0; 3];
            // Horner for the value and first two derivatives
            for &ci in c.iter().rev() {
                out[2] = out[2] * u + 2.0 * out[1];
                out[1] = out[1] * u + out[0];
                out[0] = out[0] * u + ci;
            }
            out
        };
        let (m0, m1) = (self.m0 * h, self.m1 * h);
        let dp = self.p1 - self.p0;
        // p0 * B0 + p1 * B1 == p0 + dp * B1 since B0 + B1 == 1
        let h5 = p([0.0, 0.0, 0.0, 0.0, 35.0, -84.0, 70.0, -20.0]);
        let h1 = p([0.0, 1.0, 0.0, 0.0, -20.0, 45.0, -36.0, 10.0]);
        let h4 = p([0.0, 0.0, 0.0, 0.0, -15.0, 39.0, -34.0, 10.0]);
        let d = |k: usize| dp * h5[k] + m0 * h1[k] + m1 * h4[k];
        (self.p0 + d(0), d(1) / h, d(2) / (h * h))
    }
}

/// Vertical descent with smoothstep speed ramps.
#[derive(Debug, Clone)]
struct DescentProfile {
    t0: f64,
    rate: f64,
    ramp: f64,
    cruise: f64,
}

impl DescentProfile {
    fn new(t0: f64, z0: f64, d: Descent) -> Self {
        let dist = (z0 - d.floor).max(0.0);
        // ramps of length `ramp` cover rate * ramp / 2 each
        let ramp = (1.0f64).min(dist / d.rate);
        let cruise = (dist - d.rate * ramp) / d.rate;
        DescentProfile {
            t0,
            rate: d.rate,
            ramp,
            cruise,
        }
    }

    fn end(&self) -> f64 {
        self.t0 + 2.0 * self.ramp + self.cruise
    }

    /// Downward (distance, speed, acceleration) at time `t`.
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let (v, r) = (self.rate, self.ramp);
        if r <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let s = |x: f64| x * x * (3.0 - 2.0 * x);
        let ds = |x: f64| 6.0 * x * (1.0 - x);
        let big_s = |x: f64| x * x * x - 0.5 * x * x * x * x;
        let tau = (t - self.t0).clamp(0.0, 2.0 * r + self.cruise);
        if tau < r {
            let x = tau / r;
            (v * r * big_s(x), v * s(x), v * ds(x) / r)
        } else if tau < r + self.cruise {
            (0.5 * v * r + v * (tau - r), v, 0.0)
        } else {
            let x = (tau - r - self.cruise) / r;
            (
                0.5 * v * r + v * self.cruise + v * r * (x - big_s(x)),
                v * (1.0 - s(x)),
                -v * ds(x) / r,
            )
        }
    }
}

/// Analytic trajectory of a [`FlightSpec`].
#[derive(Debug, Clone)]
pub struct FlightPath {
    segments: Vec<Segment>,
    end_point: Vec3,
    spline_end: f64,
    descent: Option<DescentProfile>,
    yaw: f64,
}

impl FlightPath {
    pub fn new(spec: &FlightSpec) -> Result<Self> {
        if spec.waypoints.is_empty() {
            return Err(Error::InvalidSpec("no waypoints".into()));
        }
        let p = &spec.waypoints;
        let mut spans = Vec::with_capacity(p.len().saturating_sub(1));
        for w in p.windows(2) {
            let chord = (w[1] - w[0]).norm();
            if chord < 1e-9 {
                return Err(Error::InvalidSpec(format!(
                    "consecutive duplicate waypoints at {:?}",
                    w[0].as_slice()
                )));
            }
            spans.push(chord / spec.speed);
        }
        let n = p.len();
        let tangent = |i: usize| -> Vec3 {
            if n == 1 {
                return Vec3::zeros();
            }
            if i == 0 {
                return if spec.rest_at_ends { Vec3::zeros() } else { (p[1] - p[0]) / spans[0] };
            }
            if i == n - 1 {
                return if spec.rest_at_ends {
                    Vec3::zeros()
                } else {
                    (p[n - 1] - p[n - 2]) / spans[n - 2]
                };
            }
            (p[i + 1] - p[i - 1]) / (spans[i - 1] + spans[i])
        };
        let mut segments = Vec::with_capacity(spans.len());
        let mut t = 0.0;
        for (i, &span) in spans.iter().enumerate() {
            segments.push(Segment {
                t0: t,
                span,
                p0: p[i],
                p1: p[i + 1],
                m0: tangent(i),
                m1: tangent(i + 1),
            });
            t += span;
        }
        let end_point = p[n - 1];
        Ok(FlightPath {
            segments,
            end_point,
            spline_end: t,
            descent: spec.descent.map(|d| DescentProfile::new(t, end_point.z, d)),
            yaw: spec.yaw,
        })
    }

    /// Time at which the path comes to rest for good.
    pub fn end_time(&self) -> f64 {
        self.descent.as_ref().map_or(self.spline_end, |d| d.end())
    }

    /// Position, velocity and acceleration in the world frame.
    pub fn kinematics(&self, t: f64) -> (Vec3, Vec3, Vec3) {
        if t < self.spline_end {
            let i = self.segments.partition_point(|s| s.t0 + s.span <= t);
            if let Some(seg) = self.segments.get(i) {
                return seg.eval(t.max(0.0));
            }
        }
        match &self.descent {
            Some(d) => {
                let (dz, vz, az) = d.eval(t);
                (
                    self.end_point - Vec3::z() * dz,
                    -Vec3::z() * vz,
                    -Vec3::z() * az,
                )
            }
            None => (self.end_point, Vec3::zeros(), Vec3::zeros()),
        }
    }

    /// Thrust-aligned attitude for acceleration `a` at the path's yaw.
    pub fn attitude_for(&self, a: Vec3) -> Quat {
        let zb = (a + Vec3::z() * GRAVITY).normalize();
        let xc = Vec3::new(self.yaw.cos(), self.yaw.sin(), 0.0);
        let yb = zb.cross(&xc).normalize();
        let xb = yb.cross(&zb);
        Quat::from_rotation_matrix(&Matrix3::from_columns(&[xb, yb, zb]))
    }

    pub fn pose(&self, t: f64) -> Pose {
        let (p, _, a) = self.kinematics(t);
        Pose::new(p, self.attitude_for(a), t).expect("rotation matrix gives a unit quaternion")
    }

    /// Body-frame angular rate, from a central difference of the attitude.
    pub fn body_rate(&self, t: f64) -> Vec3 {
        const H: f64 = 1e-4;
        let q0 = self.pose(t - H).orientation();
        let q1 = self.pose(t + H).orientation();
        let q = self.pose(t).orientation();
        let mut dq = Quat::new(q1.w - q0.w, q1.x - q0.x, q1.y - q0.y, q1.z - q0.z);
        let s = 1.0 / (2.0 * H);
        dq = Quat::new(dq.w * s, dq.x * s, dq.y * s, dq.z * s);
        let w = q.conj().mul(dq);
        Vec3::new(2.0 * w.x, 2.0 * w.y, 2.0 * w.z)
    }

    /// Specific force (what an accelerometer reads) in the body frame.
    pub fn specific_force(&self, t: f64) -> Vec3 {
        let (_, _, a) = self.kinematics(t);
        let r = self.attitude_for(a).to_rotation_matrix();
        r.transpose() * (a + Vec3::z() * GRAVITY)
    }
}

/// IMU error source: a constant bias drawn once, plus white noise on every
/// reading.
#[derive(Debug, Clone)]
pub struct NoisyImu {
    noise: ImuNoise,
    accel_bias: Vec3,
    gyro_bias: Vec3,
    rng: ChaCha8Rng,
}

impl NoisyImu {
    pub fn new(noise: ImuNoise, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let accel_bias = gauss3(&mut rng, noise.accel_bias_sigma);
        let gyro_bias = gauss3(&mut rng, noise.gyro_bias_sigma);
        NoisyImu {
            noise,
            accel_bias,
            gyro_bias,
            rng,
        }
    }

    /// Corrupts exact specific force and body rate.
    pub fn read(&mut self, timestamp: f64, specific_force: Vec3, body_rate: Vec3) -> ImuSample {
        let accel = specific_force + self.accel_bias + gauss3(&mut self.rng, self.noise.accel_sigma);
        let gyro = body_rate + self.gyro_bias + gauss3(&mut self.rng, self.noise.gyro_sigma);
        ImuSample { timestamp, accel, gyro }
    }
}

fn gauss3(rng: &mut ChaCha8Rng, sigma: f64) -> Vec3 {
    let mut g = || sigma * rng.sample::<f64, _>(StandardNormal);
    Vec3::new(g(), g(), g())
}

/// Deterministic synthetic dataset: IMU with noise and constant bias, frames
/// rendered at camera rate (quantized to 8 bits), ground truth at every frame.
pub fn generate_synthetic(world: &WorldSpec, flight: &FlightSpec, seed: u64) -> Result<Dataset> {
    flight.validate()?;
    let path = FlightPath::new(flight)?;
    let ratio = flight.imu_per_frame()?;
    let n_frames = (flight.duration_s * flight.camera_rate_hz).round() as usize;
    let n_imu = (flight.duration_s * flight.imu_rate_hz).round() as usize;
    if n_frames == 0 {
        return Err(Error::InvalidSpec("duration shorter than one camera period".into()));
    }
    let ns_of = |i: usize| (i as f64 * 1e9 / flight.imu_rate_hz).round() as i64;

    let mut sensor = NoisyImu::new(flight.noise, seed);
    let mut imu = Vec::with_capacity(n_imu);
    for i in 0..n_imu {
        let ns = ns_of(i);
        let t = ns_to_seconds(ns);
        imu.push((ns, sensor.read(t, path.specific_force(t), path.body_rate(t))));
    }

    let mut frames = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let ns = ns_of(k * ratio);
        let mut frame = render_frame(world, &path.pose(ns_to_seconds(ns)), flight.image_shape)?;
        frame.quantize();
        frames.push((ns, frame));
    }
    let meta = DatasetMeta {
        imu_rate_hz: flight.imu_rate_hz,
        camera_rate_hz: flight.camera_rate_hz,
        image_shape: flight.image_shape,
        seed: Some(seed),
        world: Some(world.clone()),
    };
    assemble(meta, &imu, frames, |ns| Some(path.pose(ns_to_seconds(ns))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(waypoints: Vec<Vec3>, duration: f64) -> FlightSpec {
        FlightSpec {
            waypoints,
            speed: 1.0,
            rest_at_ends: false,
            descent: None,
            yaw: 0.3,
            duration_s: duration,
            imu_rate_hz: 100.0,
            camera_rate_hz: 10.0,
            image_shape: (9, 16, 1),
            noise: ImuNoise::NONE,
        }
    }

    #[test]
    fn hover_reads_gravity_and_no_rotation() {
        let ds = generate_synthetic(&WorldSpec::default(), &quiet(vec![Vec3::new(1.0, 2.0, 3.0)], 2.0), 1).unwrap();
        for s in ds.imu_samples() {
            assert!((s.accel - Vec3::new(0.0, 0.0, GRAVITY)).norm() < 1e-12, "{:?}", s.accel);
            assert_eq!(s.gyro, Vec3::zeros());
        }
    }

    #[test]
    fn constant_velocity_reads_gravity_only() {
        let spec = quiet(vec![Vec3::new(0.0, 0.0, 2.0), Vec3::new(10.0, 4.0, 2.0)], 5.0);
        let path = FlightPath::new(&spec).unwrap();
        let (_, v, _) = path.kinematics(2.5);
        assert!((v.norm() - 1.0).abs() < 1e-12);
        let ds = generate_synthetic(&WorldSpec::default(), &spec, 1).unwrap();
        for s in ds.imu_samples() {
            assert!((s.accel - Vec3::new(0.0, 0.0, GRAVITY)).norm() < 1e-9);
            assert!(s.gyro.norm() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_bits() {
        let mut spec = FlightSpec::standard();
        spec.duration_s = 3.0;
        let w = WorldSpec::default();
        let a = generate_synthetic(&w, &spec, 5).unwrap();
        assert_eq!(a, generate_synthetic(&w, &spec, 5).unwrap());
        assert_ne!(a, generate_synthetic(&w, &spec, 6).unwrap());
    }

    #[test]
    fn frame_count_follows_duration() {
        let spec = FlightSpec {
            duration_s: 60.0,
            image_shape: (2, 2, 1),
            ..quiet(vec![Vec3::new(0.0, 0.0, 2.0)], 60.0)
        };
        let ds = generate_synthetic(&WorldSpec::default(), &spec, 7).unwrap();
        assert_eq!(ds.len() + 1, 600);
        assert_eq!(generate_synthetic(&WorldSpec::default(), &FlightSpec::standard(), 0).unwrap().len(), 200);
    }

    #[test]
    fn invalid_specs_rejected() {
        let w = WorldSpec::default();
        let ok = quiet(vec![Vec3::new(0.0, 0.0, 2.0)], 1.0);
        for bad in [
            FlightSpec { waypoints: vec![], ..ok.clone() },
            FlightSpec { imu_rate_hz: 0.0, ..ok.clone() },
            FlightSpec { camera_rate_hz: 0.0, ..ok.clone() },
            FlightSpec { camera_rate_hz: 30.0, ..ok.clone() },
            FlightSpec { duration_s: 0.0, ..ok.clone() },
            FlightSpec {
                waypoints: vec![Vec3::z(), Vec3::z()],
                ..ok.clone()
            },
        ] {
            assert!(matches!(generate_synthetic(&w, &bad, 0), Err(Error::InvalidSpec(_))), "{bad:?}");
        }
    }

    #[test]
    fn descent_reaches_floor_smoothly() {
        let spec = FlightSpec {
            descent: Some(Descent { rate: 0.5, floor: 0.5 }),
            ..quiet(vec![Vec3::new(0.0, 0.0, 3.0)], 10.0)
        };
        let path = FlightPath::new(&spec).unwrap();
        // 2.5 m at 0.5 m/s with 1 s ramps: 5 s plus one ramp length
        assert!((path.end_time() - 6.0).abs() < 1e-12);
        let (p, v, a) = path.kinematics(path.end_time() + 1.0);
        assert!((p.z - 0.5).abs() < 1e-12 && v.norm() == 0.0 && a.norm() == 0.0);
        let (_, v, _) = path.kinematics(3.0);
        assert!((v.z + 0.5).abs() < 1e-12);
        // velocity is the derivative of position
        for t in [0.3, 0.9, 3.0, 5.4] {
            let h = 1e-6;
            let fd = (path.kinematics(t + h).0 - path.kinematics(t - h).0) / (2.0 * h);
            assert!((fd - path.kinematics(t).1).norm() < 1e-7);
        }
    }

    #[test]
    fn spline_derivatives_are_consistent() {
        let spec = FlightSpec::standard();
        let path = FlightPath::new(&spec).unwrap();
        let h = 1e-5;
        for i in 1..40 {
            let t = i as f64 * 0.47;
            let (_, v, a) = path.kinematics(t);
            let fd_v = (path.kinematics(t + h).0 - path.kinematics(t - h).0) / (2.0 * h);
            let fd_a = (path.kinematics(t + h).1 - path.kinematics(t - h).1) / (2.0 * h);
            assert!((fd_v - v).norm() < 1e-6);
            assert!((fd_a - a).norm() < 1e-4);
        }
    }

    #[test]
    fn gyro_matches_attitude_propagation() {
        // integrate body rates and compare with the analytic attitude
        let spec = FlightSpec::standard();
        let path = FlightPath::new(&spec).unwrap();
        let dt = 1e-3;
        let mut q = path.pose(0.0).orientation();
        for k in 0..5000 {
            let t = k as f64 * dt;
            let w = path.body_rate(t + 0.5 * dt);
            let angle = w.norm() * dt;
            if angle > 0.0 {
                q = q.mul(Quat::from_axis_angle(w / w.norm(), angle));
            }
        }
        let truth = path.pose(5.0).orientation();
        assert!(q.dot(truth).abs() > 1.0 - 1e-8);
    }

    /// Strapdown integration of noiseless accelerations in the world frame.
    #[test]
    fn accelerations_integrate_back_to_positions() {
        let spec = FlightSpec {
            noise: ImuNoise::NONE,
            image_shape: (2, 2, 1),
            ..FlightSpec::standard()
        };
        let path = FlightPath::new(&spec).unwrap();
        let ds = generate_synthetic(&WorldSpec::default(), &spec, 0).unwrap();
        let samples = ds.imu_samples();
        let dt = 1.0 / spec.imu_rate_hz;
        let world_accel = |s: &ImuSample| {
            path.pose(s.timestamp).orientation().rotate(s.accel) - Vec3::z() * GRAVITY
        };
        let a: Vec<Vec3> = samples.iter().map(world_accel).collect();
        // integrate the cubic through a[k-1..=k+2] over each step; the
        // weights are the exact integrals of its Lagrange basis
        let (mut p, mut v, _) = path.kinematics(0.0);
        for k in 0..a.len() - 1 {
            let (dv, dp) = if k == 0 || k + 2 >= a.len() {
                ((a[k] + a[k + 1]) * 0.5, a[k] / 3.0 + a[k + 1] / 6.0)
            } else {
                (
                    (a[k] * 13.0 + a[k + 1] * 13.0 - a[k - 1] - a[k + 2]) / 24.0,
                    a[k - 1] * (-1.0 / 45.0) + a[k] * (43.0 / 120.0) + a[k + 1] * (11.0 / 60.0)
                        + a[k + 2] * (-7.0 / 360.0),
                )
            };
            p += v * dt + dp * dt * dt;
            v += dv * dt;
        }
        let t_end = samples.last().unwrap().timestamp;
        let err = (p - path.kinematics(t_end).0).norm();
        let allowed = 1e-3 * (t_end / 10.0).ceil();
        assert!(err < allowed, "drift {err} m over {t_end} s");
    }
}
