use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Time-stamped position setpoints followed by a vertical descent onto a
/// pad at ground level.
#[derive(Debug, Clone, PartialEq)]
pub struct FlightPlan {
    /// `(t, position)` with strictly increasing `t`.
    pub waypoints: Vec<(f64, Vec3)>,
    /// Pad center `(x, y)` on the ground.
    pub pad: (f64, f64),
    /// m/s, > 0
    pub descent_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Transit,
    Descent,
    /// The descent schedule has reached the pad.
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceTarget {
    pub position: Vec3,
    pub velocity: Vec3,
    pub phase: Phase,
}

impl FlightPlan {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::EmptyInput("flight plan"));
        }
        for w in self.waypoints.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidSpec(format!("waypoint times {} and {} do not increase", w[0].0, w[1].0)));
            }
        }
        if !(self.descent_rate > 0.0 && self.descent_rate.is_finite()) {
            return Err(Error::InvalidSpec(format!("descent rate {}", self.descent_rate)));
        }
        let finite = self
            .waypoints
            .iter()
            .all(|(t, p)| t.is_finite() && p.iter().all(|v| v.is_finite()));
        if !finite || !(self.pad.0.is_finite() && self.pad.1.is_finite()) {
            return Err(Error::InvalidSpec("plan values must be finite".into()));
        }
        Ok(())
    }

    /// Time at which the descent begins: the last waypoint time.
    pub fn descent_start(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.0)
    }

    /// Scheduled time at which the descent reaches the pad.
    pub fn touchdown_time(&self) -> f64 {
        let (t, p) = self.waypoints.last().copied().unwrap_or((0.0, Vec3::zeros()));
        t + p.z.max(0.0) / self.descent_rate
    }
}

/// Setpoint of `plan` at time `t`.
///
/// Before the first waypoint the target holds it; between waypoints the
/// position is interpolated linearly and the velocity is the segment's slope.
/// After the last waypoint the target sits over the pad and sinks at the
/// descent rate from the last waypoint's altitude until it reaches the
/// ground. The target does not depend on the vehicle's estimate.
pub fn guidance(plan: &FlightPlan, t: f64) -> Result<GuidanceTarget> {
    let first = *plan.waypoints.first().ok_or(Error::EmptyInput("flight plan"))?;
    let transit = |position, velocity| GuidanceTarget {
        position,
        velocity,
        phase: Phase::Transit,
    };
    if t <= first.0 {
        return Ok(transit(first.1, Vec3::zeros()));
    }
    for w in plan.waypoints.windows(2) {
        let ((t0, p0), (t1, p1)) = (w[0], w[1]);
        if t <= t1 {
            let v = (p1 - p0) / (t1 - t0);
            return Ok(transit(p0 + v * (t - t0), v));
        }
    }
    let t_land = plan.touchdown_time();
    let start = plan.descent_start();
    let top = plan.waypoints.last().map_or(0.0, |w| w.1.z);
    let (px, py) = plan.pad;
    if t < t_land {
        Ok(GuidanceTarget {
            position: Vec3::new(px, py, top - plan.descent_rate * (t - start)),
            velocity: Vec3::new(0.0, 0.0, -plan.descent_rate),
            phase: Phase::Descent,
        })
    } else {
        Ok(GuidanceTarget {
            position: Vec3::new(px, py, 0.0),
            velocity: Vec3::zeros(),
            phase: Phase::Complete,
        })
    }
}
