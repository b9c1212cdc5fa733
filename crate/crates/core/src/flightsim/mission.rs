use std::path::Path;

use crate::dataio::ImuNoise;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::kv::{parse_reals, KvFile};

use super::control::{AxisGains, PidGains};
use super::guidance::FlightPlan;
use super::vehicle::VehicleParams;

/// Everything about a closed-loop run except the estimator, the world and
/// the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Mission {
    pub name: String,
    pub plan: FlightPlan,
    pub yaw: f64,
    pub timeout_s: f64,
    pub control_rate_hz: f64,
    pub camera_rate_hz: f64,
    pub image_shape: (usize, usize, usize),
    /// Probability that any given frame is dropped (zeroed).
    pub corrupt_fraction: f64,
    /// Altitude above the pad that counts as contact, m.
    pub touchdown_altitude: f64,
    /// Contact slower than this sink rate is a landing, faster a crash, m/s.
    pub touchdown_speed: f64,
    pub vehicle: VehicleParams,
    pub gains: PidGains,
    pub noise: ImuNoise,
}

impl Mission {
    /// Take off point, a transit at 2 m and a descent onto a pad, covering
    /// the opening leg of the standard synthetic flight.
    pub fn standard() -> Self {
        Mission {
            name: "standard-landing".into(),
            plan: FlightPlan {
                waypoints: vec![(0.0, Vec3::new(0.0, 0.0, 2.0)), (3.0, Vec3::new(2.0, 1.0, 2.0))],
                pad: (2.0, 1.0),
                descent_rate: 0.5,
            },
            yaw: 0.0,
            timeout_s: 15.0,
            control_rate_hz: 100.0,
            camera_rate_hz: 10.0,
            image_shape: (36, 64, 1),
            corrupt_fraction: 0.0,
            touchdown_altitude: 0.02,
            touchdown_speed: 1.0,
            vehicle: VehicleParams::default(),
            gains: PidGains::default(),
            noise: ImuNoise::default(),
        }
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.control_rate_hz
    }

    /// Control steps per camera frame.
    pub fn steps_per_frame(&self) -> Result<usize> {
        let r = self.control_rate_hz / self.camera_rate_hz;
        if !(r >= 1.0) || (r - r.round()).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "control rate {} Hz is not a multiple of camera rate {} Hz",
                self.control_rate_hz, self.camera_rate_hz
            )));
        }
        Ok(r.round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        self.vehicle.validate()?;
        self.gains.validate()?;
        self.steps_per_frame()?;
        let (h, w, c) = self.image_shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::InvalidSpec("image shape must be positive".into()));
        }
        if !(self.timeout_s > 0.0) || !(0.0..=1.0).contains(&self.corrupt_fraction) {
            return Err(Error::InvalidSpec(format!(
                "timeout {} s, corrupt fraction {}",
                self.timeout_s, self.corrupt_fraction
            )));
        }
        if !(self.touchdown_altitude >= 0.0 && self.touchdown_speed > 0.0) {
            return Err(Error::InvalidSpec("touchdown limits".into()));
        }
        if self.plan.waypoints[0].1.z <= self.touchdown_altitude {
            return Err(Error::InvalidSpec("the mission must start in the air".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("name", &self.name);
        for (t, p) in &self.plan.waypoints {
            kv.push("wp", format!("{t},{},{},{}", p.x, p.y, p.z));
        }
        kv.set("pad", format!("{},{}", self.plan.pad.0, self.plan.pad.1));
        kv.set("descent_rate", self.plan.descent_rate);
        kv.set("yaw", self.yaw);
        kv.set("timeout_s", self.timeout_s);
        kv.set("control_rate_hz", self.control_rate_hz);
        kv.set("camera_rate_hz", self.camera_rate_hz);
        let (h, w, c) = self.image_shape;
        kv.set("image_shape", format!("{h},{w},{c}"));
        kv.set("corrupt_fraction", self.corrupt_fraction);
        kv.set("touchdown_altitude", self.touchdown_altitude);
        kv.set("touchdown_speed", self.touchdown_speed);
        let v = &self.vehicle;
        kv.set("vehicle.mass", v.mass);
        kv.set("vehicle.drag", v.drag);
        kv.set("vehicle.attitude_lag", v.attitude_lag);
        kv.set("vehicle.max_tilt_rad", v.max_tilt);
        kv.set("vehicle.max_thrust_ratio", v.max_thrust_ratio);
        let g = |a: &AxisGains| format!("{},{},{},{}", a.kp, a.ki, a.kd, a.i_limit);
        kv.set("gains.horizontal", g(&self.gains.horizontal));
        kv.set("gains.vertical", g(&self.gains.vertical));
        let n = &self.noise;
        kv.set("noise.accel_sigma", n.accel_sigma);
        kv.set("noise.gyro_sigma", n.gyro_sigma);
        kv.set("noise.accel_bias_sigma", n.accel_bias_sigma);
        kv.set("noise.gyro_bias_sigma", n.gyro_bias_sigma);
        kv
    }

    /// Reads a mission; keys other than `wp` and `pad` fall back to the
    /// standard mission's values.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let d = Mission::standard();
        let mut waypoints = Vec::new();
        for w in kv.all("wp") {
            let v = parse_reals(w, "wp")?;
            if v.len() != 4 {
                return Err(Error::parse("wp", format!("`{w}` needs t,x,y,z")));
            }
            waypoints.push((v[0], Vec3::new(v[1], v[2], v[3])));
        }
        let pad = kv.get("pad").ok_or_else(|| Error::parse("mission", "missing `pad`"))?;
        let pad = parse_reals(pad, "pad")?;
        if pad.len() != 2 {
            return Err(Error::parse("pad", "needs x,y"));
        }
        let shape = match kv.get("image_shape") {
            Some(s) => {
                let v: Vec<usize> = s
                    .split(',')
                    .map(|p| p.trim().parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse("image_shape", s))?;
                if v.len() != 3 {
                    return Err(Error::parse("image_shape", "needs h,w,c"));
                }
                (v[0], v[1], v[2])
            }
            None => d.image_shape,
        };
        let gains = |key: &str, def: AxisGains| -> Result<AxisGains> {
            match kv.get(key) {
                None => Ok(def),
                Some(s) => {
                    let v = parse_reals(s, key)?;
                    if v.len() != 4 {
                        return Err(Error::parse(key, "needs kp,ki,kd,i_limit"));
                    }
                    Ok(AxisGains {
                        kp: v[0],
                        ki: v[1],
                        kd: v[2],
                        i_limit: v[3],
                    })
                }
            }
        };
        let m = Mission {
            name: kv.get("name").unwrap_or(&d.name).to_string(),
            plan: FlightPlan {
                waypoints,
                pad: (pad[0], pad[1]),
                descent_rate: kv.parsed_or("descent_rate", d.plan.descent_rate)?,
            },
            yaw: kv.parsed_or("yaw", d.yaw)?,
            timeout_s: kv.parsed_or("timeout_s", d.timeout_s)?,
            control_rate_hz: kv.parsed_or("control_rate_hz", d.control_rate_hz)?,
            camera_rate_hz: kv.parsed_or("camera_rate_hz", d.camera_rate_hz)?,
            image_shape: shape,
            corrupt_fraction: kv.parsed_or("corrupt_fraction", d.corrupt_fraction)?,
            touchdown_altitude: kv.parsed_or("touchdown_altitude", d.touchdown_altitude)?,
            touchdown_speed: kv.parsed_or("touchdown_speed", d.touchdown_speed)?,
            vehicle: VehicleParams {
                mass: kv.parsed_or("vehicle.mass", d.vehicle.mass)?,
                drag: kv.parsed_or("vehicle.drag", d.vehicle.drag)?,
                attitude_lag: kv.parsed_or("vehicle.attitude_lag", d.vehicle.attitude_lag)?,
                max_tilt: kv.parsed_or("vehicle.max_tilt_rad", d.vehicle.max_tilt)?,
                max_thrust_ratio: kv.parsed_or("vehicle.max_thrust_ratio", d.vehicle.max_thrust_ratio)?,
            },
            gains: PidGains {
                horizontal: gains("gains.horizontal", d.gains.horizontal)?,
                vertical: gains("gains.vertical", d.gains.vertical)?,
            },
            noise: ImuNoise {
                accel_sigma: kv.parsed_or("noise.accel_sigma", d.noise.accel_sigma)?,
                gyro_sigma: kv.parsed_or("noise.gyro_sigma", d.noise.gyro_sigma)?,
                accel_bias_sigma: kv.parsed_or("noise.accel_bias_sigma", d.noise.accel_bias_sigma)?,
                gyro_bias_sigma: kv.parsed_or("noise.gyro_bias_sigma", d.noise.gyro_bias_sigma)?,
            },
        };
        m.validate()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KvFile::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_kv().write(path)
    }
}
