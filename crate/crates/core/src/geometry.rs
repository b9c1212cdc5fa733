//! Poses, quaternion algebra, trajectories and error metrics.
//!
//! Quaternions are stored and exchanged in `(w, x, y, z)` order everywhere.
//! A [`Quat`] held by a [`Pose`] is always unit norm with a non-negative
//! scalar part, which picks one representative out of each `q` / `-q` pair.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const MIN_QUAT_NORM: f64 = 1e-12;

/// A quaternion in `(w, x, y, z)` order. Not necessarily unit norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    pub fn from_array(q: [f64; 4]) -> Self {
        Quat::new(q[0], q[1], q[2], q[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(self, other: Quat) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn conj(self) -> Quat {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    fn scale(self, s: f64) -> Quat {
        Quat::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    /// Hamilton product `self ⊗ rhs`.
    pub fn mul(self, rhs: Quat) -> Quat {
        let (a, b) = (self, rhs);
        Quat::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        let n = axis.norm();
        if n < MIN_QUAT_NORM {
            return Quat::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n;
        Quat::new(c, a.x * s, a.y * s, a.z * s)
    }

    /// Rotates `v` from the body frame into the world frame. Assumes unit norm.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        self.to_rotation_matrix() * v
    }

    /// Quaternion of a proper rotation matrix (body-to-world columns).
    pub fn from_rotation_matrix(m: &Matrix3<f64>) -> Quat {
        let r = nalgebra::Rotation3::from_matrix_unchecked(*m);
        let q = nalgebra::UnitQuaternion::from_rotation_matrix(&r);
        Quat::new(q.w, q.i, q.j, q.k)
    }

    pub fn to_rotation_matrix(self) -> Matrix3<f64> {
        let Quat { w, x, y, z } = self;
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }
}

/// Normalizes `q` to unit length and canonicalizes its sign.
///
/// The canonical representative has `w > 0`; when `w == 0` the first nonzero
/// vector component is made positive.
pub fn quat_normalize(q: Quat) -> Result<Quat> {
    let n = q.norm();
    if !(n > MIN_QUAT_NORM) || !n.is_finite() {
        return Err(Error::DegenerateQuaternion(n));
    }
    // already unit up to rounding: leave the bits alone so normalizing twice
    // is exactly idempotent
    let u = if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
        q
    } else {
        q.scale(1.0 / n)
    };
    let lead = [u.w, u.x, u.y, u.z]
        .into_iter()
        .find(|c| *c != 0.0)
        .unwrap_or(1.0);
    Ok(if lead < 0.0 { u.scale(-1.0) } else { u })
}

/// Spherical linear interpolation between unit quaternions, `t` in `[0, 1]`.
///
/// Takes the short arc. `t == 0` and `t == 1` reproduce the (canonical)
/// endpoints exactly.
pub fn slerp(a: Quat, b: Quat, t: f64) -> Quat {
    if t == 0.0 {
        return a;
    }
    if t == 1.0 {
        return b;
    }
    let mut d = a.dot(b);
    let b = if d < 0.0 {
        d = -d;
        b.scale(-1.0)
    } else {
        b
    };
    let (wa, wb) = if d > 1.0 - 1e-9 {
        (1.0 - t, t)
    } else {
        let theta = d.clamp(-1.0, 1.0).acos();
        let s = theta.sin();
        (((1.0 - t) * theta).sin() / s, (t * theta).sin() / s)
    };
    let q = Quat::new(
        wa * a.w + wb * b.w,
        wa * a.x + wb * b.x,
        wa * a.y + wb * b.y,
        wa * a.z + wb * b.z,
    );
    quat_normalize(q).unwrap_or(a)
}

/// Position, orientation and time of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    orientation: Quat,
    pub timestamp: f64,
}

impl Pose {
    pub fn new(position: Vec3, orientation: Quat, timestamp: f64) -> Result<Self> {
        Ok(Pose {
            position,
            orientation: quat_normalize(orientation)?,
            timestamp,
        })
    }

    /// A pose at `position` with identity orientation.
    pub fn at(position: Vec3, timestamp: f64) -> Self {
        Pose {
            position,
            orientation: Quat::IDENTITY,
            timestamp,
        }
    }

    pub fn orientation(&self) -> Quat {
        self.orientation
    }

    pub fn set_orientation(&mut self, q: Quat) -> Result<()> {
        self.orientation = quat_normalize(q)?;
        Ok(())
    }

    /// `[px, py, pz, qw, qx, qy, qz]`.
    pub fn to_vector(&self) -> [f64; 7] {
        let q = self.orientation;
        [
            self.position.x,
            self.position.y,
            self.position.z,
            q.w,
            q.x,
            q.y,
            q.z,
        ]
    }
}

/// Euclidean distance between the two positions, in meters.
pub fn translation_error(p1: &Pose, p2: &Pose) -> f64 {
    (p1.position - p2.position).norm()
}

/// Geodesic angle between the two orientations, in radians within `[0, π]`.
pub fn rotation_error(p1: &Pose, p2: &Pose) -> f64 {
    let d = p1.orientation.dot(p2.orientation).abs().min(1.0);
    (2.0 * d.acos()).clamp(0.0, std::f64::consts::PI)
}

/// Root mean square of per-sample residual norms.
///
/// Each sample contributes the squared Euclidean norm of its full residual
/// vector and the sum is divided by the number of samples, not elements.
pub fn rmse<P: AsRef<[f64]>>(predicted: &[P], actual: &[P]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::Dimension(format!(
            "rmse over {} predictions and {} references",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::EmptyInput("rmse needs at least one sample"));
    }
    let mut total = 0.0;
    for (p, a) in predicted.iter().zip(actual) {
        let (p, a) = (p.as_ref(), a.as_ref());
        if p.len() != a.len() {
            return Err(Error::Dimension(format!(
                "sample of length {} against reference of length {}",
                p.len(),
                a.len()
            )));
        }
        total += p.iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    Ok((total / predicted.len() as f64).sqrt())
}

/// RMS of a sequence of already computed scalar errors.
pub fn rms(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptyInput("rms needs at least one sample"));
    }
    Ok((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

/// Time-ordered sequence of poses with strictly increasing timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

pub const TRAJECTORY_HEADER: &str = "timestamp_s,px,py,pz,qw,qx,qy,qz";

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_poses(poses: Vec<Pose>) -> Result<Self> {
        let mut t = Trajectory::new();
        for p in poses {
            t.push(p)?;
        }
        Ok(t)
    }

    pub fn push(&mut self, pose: Pose) -> Result<()> {
        if let Some(last) = self.poses.last() {
            if !(pose.timestamp > last.timestamp) {
                return Err(Error::Misaligned(format!(
                    "trajectory timestamp {} does not follow {}",
                    pose.timestamp, last.timestamp
                )));
            }
        }
        self.poses.push(pose);
        Ok(())
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Diagonal of the axis-aligned bounding box of all positions.
    pub fn bounding_box_diagonal(&self) -> f64 {
        let Some(first) = self.poses.first() else {
            return 0.0;
        };
        let (mut lo, mut hi) = (first.position, first.position);
        for p in &self.poses {
            lo = lo.inf(&p.position);
            hi = hi.sup(&p.position);
        }
        (hi - lo).norm()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAJECTORY_HEADER);
        out.push('\n');
        for p in &self.poses {
            let v = p.to_vector();
            let _ = write!(out, "{}", p.timestamp);
            for c in v {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == TRAJECTORY_HEADER => {}
            _ => {
                return Err(Error::parse(
                    "trajectory csv",
                    format!("expected header `{TRAJECTORY_HEADER}`"),
                ))
            }
        }
        let mut traj = Trajectory::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let loc = format!("trajectory csv line {}", i + 1);
            let f: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(&loc, e.to_string()))?;
            if f.len() != 8 {
                return Err(Error::parse(&loc, format!("expected 8 fields, got {}", f.len())));
            }
            let pose = Pose::new(
                Vec3::new(f[1], f[2], f[3]),
                Quat::new(f[4], f[5], f[6], f[7]),
                f[0],
            )?;
            traj.push(pose)?;
        }
        Ok(traj)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    #[test]
    fn normalize_examples() {
        assert_eq!(quat_normalize(Quat::IDENTITY).unwrap(), Quat::IDENTITY);
        assert_eq!(
            quat_normalize(Quat::new(-2.0, 0.0, 0.0, 0.0)).unwrap(),
            Quat::IDENTITY
        );
        let q = quat_normalize(Quat::new(0.0, 3.0, 4.0, 0.0)).unwrap();
        assert!((q.x - 0.6).abs() < 1e-15 && (q.y - 0.8).abs() < 1e-15);
        assert_eq!((q.w, q.z), (0.0, 0.0));
        let q = quat_normalize(Quat::new(0.0, -3.0, 4.0, 0.0)).unwrap();
        assert!(q.x > 0.0 && q.y < 0.0);
    }

    #[test]
    fn normalize_rejects_degenerate() {
        assert!(matches!(
            quat_normalize(Quat::new(0.0, 0.0, 0.0, 1e-13)),
            Err(Error::DegenerateQuaternion(_))
        ));
        assert!(quat_normalize(Quat::new(f64::NAN, 0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn rmse_examples() {
        let a = vec![vec![1.0, 2.0], vec![-3.0, 0.5]];
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert_eq!(rmse(&[[1.0]], &[[3.0]]).unwrap(), 2.0);

        let p = [[0.0f64, 0.0], [0.0, 0.0]];
        let y = [[3.0, 4.0], [0.0, 0.0]];
        // brute-force summation of squared residual norms, per sample
        let mut acc = 0.0;
        for i in 0..2 {
            let mut sq = 0.0;
            for k in 0..2 {
                sq += (p[i][k] - y[i][k]).powi(2);
            }
            acc += sq;
        }
        let oracle = (acc / 2.0f64).sqrt();
        assert!((oracle - 3.5355339059327378).abs() < 1e-15);
        assert!((rmse(&p, &y).unwrap() - oracle).abs() < 1e-15);
    }

    #[test]
    fn rmse_errors() {
        let e: [[f64; 1]; 0] = [];
        assert!(matches!(rmse(&e, &e), Err(Error::EmptyInput(_))));
        assert!(matches!(
            rmse(&[[1.0]], &[[1.0], [2.0]]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            rmse(&[vec![1.0]], &[vec![1.0, 2.0]]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn pose_errors() {
        let a = Pose::at(Vec3::zeros(), 0.0);
        assert_eq!(translation_error(&a, &a), 0.0);
        assert_eq!(rotation_error(&a, &a), 0.0);
        let b = Pose::at(Vec3::new(1.0, 2.0, 2.0), 0.0);
        assert_eq!(translation_error(&a, &b), 3.0);
        assert_eq!(rotation_error(&a, &b), 0.0);
    }

    #[test]
    fn quarter_turn_rotation_error() {
        let a = Pose::at(Vec3::zeros(), 0.0);
        let q = Quat::new(SQRT_2 / 2.0, 0.0, 0.0, SQRT_2 / 2.0);
        let b = Pose::new(Vec3::zeros(), q, 0.0).unwrap();
        // oracle: angle of the relative rotation matrix, acos((tr R - 1) / 2)
        let r = a.orientation().to_rotation_matrix().transpose() * b.orientation().to_rotation_matrix();
        let oracle = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
        assert!((oracle - FRAC_PI_2).abs() < 1e-12);
        assert!((rotation_error(&a, &b) - oracle).abs() < 1e-12);
    }

    #[test]
    fn rotation_matrix_matches_quaternion_rotation() {
        let q = quat_normalize(Quat::new(0.3, -0.4, 0.5, 0.7)).unwrap();
        let v = Vec3::new(0.2, -1.0, 3.0);
        let p = Quat::new(0.0, v.x, v.y, v.z);
        let r = q.mul(p).mul(q.conj());
        let m = q.rotate(v);
        assert!((m - Vec3::new(r.x, r.y, r.z)).norm() < 1e-12);
    }

    #[test]
    fn slerp_endpoints_and_midpoint() {
        let a = Quat::IDENTITY;
        let b = Quat::from_axis_angle(Vec3::z(), 1.0);
        assert_eq!(slerp(a, b, 0.0), a);
        assert_eq!(slerp(a, b, 1.0), b);
        let m = slerp(a, b, 0.5);
        let expect = Quat::from_axis_angle(Vec3::z(), 0.5);
        assert!((m.dot(expect) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_rejects_unordered() {
        let mut t = Trajectory::new();
        t.push(Pose::at(Vec3::zeros(), 1.0)).unwrap();
        assert!(t.push(Pose::at(Vec3::zeros(), 1.0)).is_err());
        assert!(t.push(Pose::at(Vec3::zeros(), 0.5)).is_err());
    }

    #[test]
    fn trajectory_csv_reads_back() {
        let q = quat_normalize(Quat::new(0.9, 0.1, -0.2, 0.3)).unwrap();
        let t = Trajectory::from_poses(vec![
            Pose::new(Vec3::new(1.0, 2.0, 3.0), q, 0.1).unwrap(),
            Pose::at(Vec3::new(-1.5, 0.25, 1e-7), 0.2),
        ])
        .unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("timestamp_s,px,py,pz,qw,qx,qy,qz\n"));
        assert_eq!(Trajectory::from_csv(&csv).unwrap(), t);
    }

    fn arb_quat() -> impl Strategy<Value = Quat> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-4)
            .prop_map(|(w, x, y, z)| Quat::new(w, x, y, z))
    }

    fn arb_vec3() -> impl Strategy<Value = Vec3> {
        (-50.0..50.0f64, -50.0..50.0f64, -50.0..50.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent_unit_and_canonical(q in arb_quat()) {
            let n = quat_normalize(q).unwrap();
            prop_assert_eq!(quat_normalize(n).unwrap(), n);
            prop_assert!((n.norm() - 1.0).abs() < 1e-9);
            prop_assert!(n.w >= 0.0);
        }

        #[test]
        fn rotation_error_symmetric_and_sign_invariant(a in arb_quat(), b in arb_quat()) {
            let pa = Pose::new(Vec3::zeros(), a, 0.0).unwrap();
            let pb = Pose::new(Vec3::zeros(), b, 0.0).unwrap();
            let e = rotation_error(&pa, &pb);
            prop_assert_eq!(e, rotation_error(&pb, &pa));
            let flipped = Pose { orientation: pb.orientation().scale(-1.0), ..pb };
            prop_assert_eq!(e, rotation_error(&pa, &flipped));
            prop_assert!((0.0..=std::f64::consts::PI).contains(&e));
        }

        #[test]
        fn rmse_scales_linearly(
            vals in proptest::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 1..20),
            c in -5.0..5.0f64,
        ) {
            let p: Vec<[f64; 1]> = vals.iter().map(|v| [v.0]).collect();
            let y: Vec<[f64; 1]> = vals.iter().map(|v| [v.1]).collect();
            let cp: Vec<[f64; 1]> = p.iter().map(|v| [c * v[0]]).collect();
            let cy: Vec<[f64; 1]> = y.iter().map(|v| [c * v[0]]).collect();
            let base = rmse(&p, &y).unwrap();
            prop_assert!((rmse(&cp, &cy).unwrap() - c.abs() * base).abs() < 1e-9 * (1.0 + base));
            let zero = p.iter().zip(&y).all(|(a, b)| a == b);
            prop_assert_eq!(base == 0.0, zero);
        }

        #[test]
        fn translation_error_triangle(a in arb_vec3(), b in arb_vec3(), c in arb_vec3()) {
            let (pa, pb, pc) = (Pose::at(a, 0.0), Pose::at(b, 0.0), Pose::at(c, 0.0));
            prop_assert!(
                translation_error(&pa, &pc)
                    <= translation_error(&pa, &pb) + translation_error(&pb, &pc) + 1e-12
            );
        }
    }
}
