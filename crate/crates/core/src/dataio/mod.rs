//! Sensor streams: IMU windows, camera frames, datasets, corruption and splits.
//!
//! Observation `k` pairs the frame at `t_{k+1}` with the IMU samples in the
//! half-open interval `[t_k, t_{k+1})`. The frame at `t_0` opens the first
//! window and is kept as [`Dataset::start_frame`], together with the pose at
//! that instant, so an estimator can be seeded.

mod euroc;
mod pgm;
mod render;
mod synth;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{slerp, Pose, Trajectory, Vec3};
use crate::kv::KvFile;
use crate::nn::Tensor;

pub use euroc::{load_euroc_layout, write_euroc_layout};
pub use pgm::{read_pgm, write_pgm};
pub use render::{render_frame, Pillar, WorldSpec};
pub use synth::{generate_synthetic, Descent, FlightPath, FlightSpec, ImuNoise, NoisyImu, GRAVITY};

/// Pixel variance below which a frame is treated as a camera dropout.
pub const CORRUPTION_VARIANCE: f64 = 1e-6;

pub fn seconds_to_ns(t: f64) -> i64 {
    (t * 1e9).round() as i64
}

pub fn ns_to_seconds(ns: i64) -> f64 {
    ns as f64 / 1e9
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub timestamp: f64,
    pub accel: Vec3,
    pub gyro: Vec3,
}

impl ImuSample {
    pub fn is_finite(&self) -> bool {
        self.timestamp.is_finite()
            && self.accel.iter().all(|v| v.is_finite())
            && self.gyro.iter().all(|v| v.is_finite())
    }
}

/// IMU samples recorded between two consecutive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuWindow {
    samples: Vec<ImuSample>,
    t_start: f64,
    t_end: f64,
}

impl ImuWindow {
    pub fn new(samples: Vec<ImuSample>, t_start: f64, t_end: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::MalformedDataset(format!(
                "no IMU samples in [{t_start}, {t_end})"
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::MalformedDataset(format!(
                    "non-finite IMU sample at {}",
                    s.timestamp
                )));
            }
            if s.timestamp < t_start || s.timestamp >= t_end {
                return Err(Error::MalformedDataset(format!(
                    "IMU sample at {} outside [{t_start}, {t_end})",
                    s.timestamp
                )));
            }
            if i > 0 && s.timestamp < samples[i - 1].timestamp {
                return Err(Error::MalformedDataset(format!(
                    "IMU timestamps decrease at {}",
                    s.timestamp
                )));
            }
        }
        Ok(ImuWindow {
            samples,
            t_start,
            t_end,
        })
    }

    pub fn samples(&self) -> &[ImuSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }
}

/// One camera image, `[H, W, C]` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub pixels: Tensor,
    pub timestamp: f64,
    /// Ground-truth dropout label. Runtime code detects dropouts from the
    /// pixels instead, see [`Frame::looks_corrupted`].
    pub corrupted: bool,
}

impl Frame {
    pub fn shape(&self) -> (usize, usize, usize) {
        let s = self.pixels.shape();
        (s[0], s[1], s[2])
    }

    pub fn pixel_variance(&self) -> f64 {
        let d = self.pixels.data();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
    }

    pub fn looks_corrupted(&self) -> bool {
        self.pixel_variance() < CORRUPTION_VARIANCE
    }

    /// Zeroes the pixels and sets the flag.
    pub fn corrupt(&mut self) {
        self.pixels.fill(0.0);
        self.corrupted = true;
    }

    /// Rounds pixels to the nearest 8-bit level, as stored on disk.
    pub fn quantize(&mut self) {
        for v in self.pixels.data_mut() {
            *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub frame: Frame,
    pub imu: ImuWindow,
    pub ground_truth: Option<Pose>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub imu_rate_hz: f64,
    pub camera_rate_hz: f64,
    /// `(height, width, channels)`
    pub image_shape: (usize, usize, usize),
    pub seed: Option<u64>,
    pub world: Option<WorldSpec>,
}

impl DatasetMeta {
    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("imu_rate_hz", self.imu_rate_hz);
        kv.set("camera_rate_hz", self.camera_rate_hz);
        kv.set("image_height", self.image_shape.0);
        kv.set("image_width", self.image_shape.1);
        kv.set("image_channels", self.image_shape.2);
        if let Some(seed) = self.seed {
            kv.set("seed", seed);
        }
        if let Some(w) = &self.world {
            w.to_kv(&mut kv);
        }
        kv
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        Ok(DatasetMeta {
            imu_rate_hz: kv.require("imu_rate_hz")?,
            camera_rate_hz: kv.require("camera_rate_hz")?,
            image_shape: (
                kv.require("image_height")?,
                kv.require("image_width")?,
                kv.parsed_or("image_channels", 1)?,
            ),
            seed: kv.parsed("seed")?,
            world: WorldSpec::from_kv(kv)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    pub meta: DatasetMeta,
    start_frame: Option<Frame>,
    start_pose: Option<Pose>,
}

impl Dataset {
    pub fn new(
        meta: DatasetMeta,
        start_frame: Option<Frame>,
        start_pose: Option<Pose>,
        observations: Vec<Observation>,
    ) -> Result<Self> {
        let mut prev = start_frame.as_ref().map(|f| f.timestamp);
        for o in &observations {
            if prev.is_some_and(|p| o.frame.timestamp <= p) {
                return Err(Error::MalformedDataset(format!(
                    "frame timestamps not strictly increasing at {}",
                    o.frame.timestamp
                )));
            }
            if o.frame.shape() != meta.image_shape {
                return Err(Error::MalformedDataset(format!(
                    "frame at {} has shape {:?}, expected {:?}",
                    o.frame.timestamp,
                    o.frame.shape(),
                    meta.image_shape
                )));
            }
            prev = Some(o.frame.timestamp);
        }
        Ok(Dataset {
            observations,
            meta,
            start_frame,
            start_pose,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// The frame that opens the first IMU window.
    pub fn start_frame(&self) -> Option<&Frame> {
        self.start_frame.as_ref()
    }

    /// Pose at the start frame, when known.
    pub fn start_pose(&self) -> Option<&Pose> {
        self.start_pose.as_ref()
    }

    pub fn corrupted_count(&self) -> usize {
        self.observations.iter().filter(|o| o.frame.corrupted).count()
    }

    /// Every IMU sample, in order, across all windows.
    pub fn imu_samples(&self) -> Vec<ImuSample> {
        self.observations
            .iter()
            .flat_map(|o| o.imu.samples().iter().copied())
            .collect()
    }

    /// Ground-truth poses of all observations; `None` if any is missing.
    pub fn ground_truth(&self) -> Option<Vec<Pose>> {
        self.observations.iter().map(|o| o.ground_truth).collect()
    }

    /// Ground truth including the start pose, as a trajectory.
    pub fn ground_truth_trajectory(&self) -> Result<Trajectory> {
        let mut poses: Vec<Pose> = self.start_pose.into_iter().collect();
        poses.extend(self.ground_truth().ok_or_else(|| {
            Error::MalformedDataset("dataset lacks ground truth".into())
        })?);
        Trajectory::from_poses(poses)
    }
}

/// Groups IMU samples into windows between consecutive frames.
///
/// `imu` and `frames` carry integer nanosecond timestamps so window
/// membership is exact. Samples before the first frame or at/after the last
/// one belong to no window.
pub(crate) fn assemble(
    meta: DatasetMeta,
    imu: &[(i64, ImuSample)],
    frames: Vec<(i64, Frame)>,
    ground_truth: impl Fn(i64) -> Option<Pose>,
) -> Result<Dataset> {
    for w in imu.windows(2) {
        if w[1].0 < w[0].0 {
            return Err(Error::MalformedDataset(format!(
                "IMU timestamps out of order at {} ns",
                w[1].0
            )));
        }
    }
    for w in frames.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::MalformedDataset(format!(
                "frame timestamps out of order at {} ns",
                w[1].0
            )));
        }
    }
    let mut frames = frames.into_iter();
    let Some((first_ns, start_frame)) = frames.next() else {
        return Err(Error::EmptyInput("frames"));
    };
    let start_pose = ground_truth(first_ns);
    let mut cursor = imu.partition_point(|(t, _)| *t < first_ns);
    let mut prev_ns = first_ns;
    let mut observations = Vec::new();
    for (ns, frame) in frames {
        let begin = cursor;
        while cursor < imu.len() && imu[cursor].0 < ns {
            cursor += 1;
        }
        if cursor == begin {
            return Err(Error::MalformedDataset(format!(
                "frame at {ns} ns has no IMU samples since the previous frame"
            )));
        }
        let samples = imu[begin..cursor].iter().map(|(_, s)| *s).collect();
        let window = ImuWindow::new(samples, ns_to_seconds(prev_ns), ns_to_seconds(ns))?;
        observations.push(Observation {
            frame,
            imu: window,
            ground_truth: ground_truth(ns),
        });
        prev_ns = ns;
    }
    Dataset::new(meta, Some(start_frame), start_pose, observations)
}

/// Interpolates poses sorted by time: linear in position, slerp in
/// orientation. Exact at sample times; `None` outside the sampled range.
pub fn interpolate_pose(samples: &[(i64, Pose)], t_ns: i64) -> Option<Pose> {
    let i = samples.partition_point(|(t, _)| *t < t_ns);
    if i < samples.len() && samples[i].0 == t_ns {
        let mut p = samples[i].1;
        p.timestamp = ns_to_seconds(t_ns);
        return Some(p);
    }
    if i == 0 || i == samples.len() {
        return None;
    }
    let (t0, a) = samples[i - 1];
    let (t1, b) = samples[i];
    let u = (t_ns - t0) as f64 / (t1 - t0) as f64;
    let position = a.position + (b.position - a.position) * u;
    let q = slerp(a.orientation(), b.orientation(), u);
    Pose::new(position, q, ns_to_seconds(t_ns)).ok()
}

/// Seed of the standard dataset, used for rendering, IMU noise and the
/// choice of corrupted frames.
pub const STANDARD_SEED: u64 = 7;
pub const STANDARD_CORRUPTION: f64 = 0.2;
pub const STANDARD_TRAIN_FRACTION: f64 = 0.8;

/// The standard 200-observation dataset as `(train, test)`: the standard
/// flight over the default world, 20% of the frames corrupted, split 80/20.
pub fn standard_dataset() -> Result<(Dataset, Dataset)> {
    let ds = generate_synthetic(&WorldSpec::default(), &FlightSpec::standard(), STANDARD_SEED)?;
    let ds = corrupt_frames(&ds, STANDARD_CORRUPTION, STANDARD_SEED);
    split(&ds, STANDARD_TRAIN_FRACTION)
}

/// Flags `round(fraction * n)` seeded-random frames as corrupted and zeroes
/// their pixels. `fraction` is clamped to `[0, 1]`.
pub fn corrupt_frames(ds: &Dataset, fraction: f64, seed: u64) -> Dataset {
    let mut out = ds.clone();
    let f = if fraction.is_nan() { 0.0 } else { fraction.clamp(0.0, 1.0) };
    let n = out.observations.len();
    let count = (f * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for &i in &idx[..count] {
        out.observations[i].frame.corrupt();
    }
    out
}

/// Contiguous temporal split; the test half starts where training ends.
pub fn split(ds: &Dataset, train_fraction: f64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "train fraction {train_fraction} not in (0, 1)"
        )));
    }
    let n = ds.len();
    if n < 2 {
        return Err(Error::InvalidSpec(format!(
            "{n} observations cannot fill both halves of a split"
        )));
    }
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let (head, tail) = ds.observations.split_at(n_train);
    let last = &head[n_train - 1];
    let train = Dataset {
        observations: head.to_vec(),
        meta: ds.meta.clone(),
        start_frame: ds.start_frame.clone(),
        start_pose: ds.start_pose,
    };
    let test = Dataset {
        observations: tail.to_vec(),
        meta: ds.meta.clone(),
        start_frame: Some(last.frame.clone()),
        start_pose: last.ground_truth,
    };
    Ok((train, test))
}
