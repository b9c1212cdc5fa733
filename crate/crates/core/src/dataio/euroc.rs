//! Simplified EuRoC-style directory layout.
//!
//! ```text
//! <dir>/imu.csv          timestamp_ns,wx,wy,wz,ax,ay,az
//! <dir>/frames.csv       timestamp_ns,filename        (filename relative to <dir>)
//! <dir>/groundtruth.csv  timestamp_ns,px,py,pz,qw,qx,qy,qz[,...]
//! <dir>/images/*.pgm     8-bit binary PGM
//! <dir>/dataset.meta     optional key = value metadata
//! ```
//!
//! Header lines (anything starting with `#` or a letter) are skipped, and
//! columns past the ones listed are ignored, so the ground-truth file of a
//! real EuRoC sequence can be used as is.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Pose, Quat, Vec3};
use crate::kv::KvFile;

use super::pgm::{read_pgm, write_pgm};
use super::{assemble, interpolate_pose, ns_to_seconds, seconds_to_ns, Dataset, DatasetMeta, ImuSample};

const META_FILE: &str = "dataset.meta";
const CORRUPTED_KEY: &str = "corrupted_frames";

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Data rows of a CSV file as `(location, fields)`.
fn rows<'a>(text: &'a str, origin: &'a str) -> impl Iterator<Item = (String, Vec<&'a str>)> + 'a {
    text.lines().enumerate().filter_map(move |(i, line)| {
        let line = line.trim();
        let first = line.chars().next()?;
        if first == '#' || first.is_ascii_alphabetic() {
            return None;
        }
        Some((format!("{origin}:{}", i + 1), line.split(',').map(str::trim).collect()))
    })
}

fn field<T: std::str::FromStr>(fields: &[&str], i: usize, loc: &str) -> Result<T> {
    let s = fields
        .get(i)
        .ok_or_else(|| Error::parse(loc, format!("expected at least {} columns", i + 1)))?;
    s.parse()
        .map_err(|_| Error::parse(loc, format!("column {} `{s}` is not a number", i + 1)))
}

fn vec3(fields: &[&str], from: usize, loc: &str) -> Result<Vec3> {
    Ok(Vec3::new(
        field(fields, from, loc)?,
        field(fields, from + 1, loc)?,
        field(fields, from + 2, loc)?,
    ))
}

fn median_rate(ns: impl Iterator<Item = i64>) -> Option<f64> {
    let ts: Vec<i64> = ns.collect();
    let mut d: Vec<i64> = ts.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0).collect();
    if d.is_empty() {
        return None;
    }
    d.sort_unstable();
    Some(1e9 / d[d.len() / 2] as f64)
}

pub fn load_euroc_layout(dir: &Path) -> Result<Dataset> {
    let imu_path = dir.join("imu.csv");
    let imu_text = read_text(&imu_path)?;
    let origin = imu_path.display().to_string();
    let mut imu = Vec::new();
    for (loc, f) in rows(&imu_text, &origin) {
        let ns: i64 = field(&f, 0, &loc)?;
        let s = ImuSample {
            timestamp: ns_to_seconds(ns),
            gyro: vec3(&f, 1, &loc)?,
            accel: vec3(&f, 4, &loc)?,
        };
        if !s.is_finite() {
            return Err(Error::parse(loc, "non-finite IMU value"));
        }
        imu.push((ns, s));
    }

    let gt_path = dir.join("groundtruth.csv");
    let gt_text = read_text(&gt_path)?;
    let origin = gt_path.display().to_string();
    let mut gt = Vec::new();
    for (loc, f) in rows(&gt_text, &origin) {
        let ns: i64 = field(&f, 0, &loc)?;
        let q = Quat::new(field(&f, 4, &loc)?, field(&f, 5, &loc)?, field(&f, 6, &loc)?, field(&f, 7, &loc)?);
        let pose = Pose::new(vec3(&f, 1, &loc)?, q, ns_to_seconds(ns))
            .map_err(|e| Error::parse(loc.clone(), e.to_string()))?;
        if gt.last().is_some_and(|(t, _): &(i64, Pose)| *t >= ns) {
            return Err(Error::MalformedDataset(format!(
                "ground truth timestamps out of order at {ns} ns"
            )));
        }
        gt.push((ns, pose));
    }

    let meta_kv = match std::fs::metadata(dir.join(META_FILE)) {
        Ok(_) => Some(KvFile::read(&dir.join(META_FILE))?),
        Err(_) => None,
    };
    let corrupted: Vec<i64> = match meta_kv.as_ref().and_then(|kv| kv.get(CORRUPTED_KEY)) {
        Some(list) => list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::parse(META_FILE, format!("bad timestamp `{s}`")))
            })
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };

    let frames_path = dir.join("frames.csv");
    let frames_text = read_text(&frames_path)?;
    let origin = frames_path.display().to_string();
    let mut frames = Vec::new();
    for (loc, f) in rows(&frames_text, &origin) {
        let ns: i64 = field(&f, 0, &loc)?;
        let name = f
            .get(1)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::parse(loc.clone(), "missing image filename"))?;
        let pixels = read_pgm(&dir.join(name))?;
        frames.push((
            ns,
            super::Frame {
                pixels,
                timestamp: ns_to_seconds(ns),
                corrupted: corrupted.contains(&ns),
            },
        ));
    }
    let Some((_, first)) = frames.first() else {
        return Err(Error::MalformedDataset(format!("{origin} lists no frames")));
    };
    let shape = first.shape();

    let meta = match &meta_kv {
        Some(kv) => DatasetMeta::from_kv(kv)?,
        None => DatasetMeta {
            imu_rate_hz: median_rate(imu.iter().map(|(t, _)| *t)).unwrap_or(0.0),
            camera_rate_hz: median_rate(frames.iter().map(|(t, _)| *t)).unwrap_or(0.0),
            image_shape: shape,
            seed: None,
            world: None,
        },
    };
    assemble(meta, &imu, frames, |ns| interpolate_pose(&gt, ns))
}

/// Writes `ds` in the layout read by [`load_euroc_layout`].
///
/// Ground truth is written at frame times. Corruption flags go to
/// `dataset.meta` since zeroed pixels alone cannot distinguish a dropout from
/// a black scene.
pub fn write_euroc_layout(ds: &Dataset, dir: &Path) -> Result<()> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let frames: Vec<(&super::Frame, Option<&Pose>)> = ds
        .start_frame()
        .map(|f| (f, ds.start_pose()))
        .into_iter()
        .chain(ds.observations().iter().map(|o| (&o.frame, o.ground_truth.as_ref())))
        .collect();

    let mut frames_csv = String::from("timestamp_ns,filename\n");
    let mut gt_csv = String::from("timestamp_ns,px,py,pz,qw,qx,qy,qz\n");
    let mut corrupted = Vec::new();
    for (i, (frame, pose)) in frames.iter().enumerate() {
        let ns = seconds_to_ns(frame.timestamp);
        let name = format!("images/frame_{i:06}.pgm");
        write_pgm(&dir.join(&name), &frame.pixels)?;
        let _ = writeln!(frames_csv, "{ns},{name}");
        if let Some(p) = pose {
            let q = p.orientation();
            let _ = writeln!(
                gt_csv,
                "{ns},{},{},{},{},{},{},{}",
                p.position.x, p.position.y, p.position.z, q.w, q.x, q.y, q.z
            );
        }
        if frame.corrupted {
            corrupted.push(ns.to_string());
        }
    }

    let mut imu_csv = String::from("timestamp_ns,wx,wy,wz,ax,ay,az\n");
    for s in ds.imu_samples() {
        let _ = writeln!(
            imu_csv,
            "{},{},{},{},{},{},{}",
            seconds_to_ns(s.timestamp),
            s.gyro.x,
            s.gyro.y,
            s.gyro.z,
            s.accel.x,
            s.accel.y,
            s.accel.z
        );
    }

    let mut meta = ds.meta.to_kv();
    meta.set(CORRUPTED_KEY, corrupted.join(","));
    for (name, text) in [
        ("frames.csv", frames_csv),
        ("groundtruth.csv", gt_csv),
        ("imu.csv", imu_csv),
    ] {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    meta.write(&dir.join(META_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::corrupt_frames;
    use crate::dataio::tests::toy;

    fn quantized(ds: &Dataset) -> Dataset {
        // what survives an 8-bit round trip
        let mut q = ds.clone();
        let mut frames: Vec<&mut super::super::Frame> = Vec::new();
        if let Some(f) = q.start_frame.as_mut() {
            frames.push(f);
        }
        frames.extend(q.observations.iter_mut().map(|o| &mut o.frame));
        for f in frames {
            f.quantize();
        }
        q
    }

    #[test]
    fn write_then_load_round_trips() {
        let ds = corrupt_frames(&toy(200, 20, 9), 0.25, 1);
        let dir = tempfile::tempdir().unwrap();
        write_euroc_layout(&ds, dir.path()).unwrap();
        let back = load_euroc_layout(dir.path()).unwrap();
        assert_eq!(back, quantized(&ds));
        assert_eq!(back.corrupted_count(), 2);
    }

    #[test]
    fn loads_without_meta_and_estimates_rates() {
        let ds = toy(100, 10, 5);
        let dir = tempfile::tempdir().unwrap();
        write_euroc_layout(&ds, dir.path()).unwrap();
        std::fs::remove_file(dir.path().join(META_FILE)).unwrap();
        let back = load_euroc_layout(dir.path()).unwrap();
        assert!((back.meta.imu_rate_hz - 100.0).abs() < 1e-9);
        assert!((back.meta.camera_rate_hz - 10.0).abs() < 1e-9);
        assert_eq!(back.len(), 4);
    }

    #[test]
    fn ground_truth_is_interpolated_to_frames() {
        let ds = toy(100, 10, 3);
        let dir = tempfile::tempdir().unwrap();
        write_euroc_layout(&ds, dir.path()).unwrap();
        // keep only the first and last ground-truth rows
        let gt = "#timestamp,px,py,pz,qw,qx,qy,qz,vx\n0,0,0,1,1,0,0,0,9\n200000000,0.2,0,1,1,0,0,0,9\n";
        std::fs::write(dir.path().join("groundtruth.csv"), gt).unwrap();
        let back = load_euroc_layout(dir.path()).unwrap();
        let mid = back.observations()[0].ground_truth.unwrap();
        assert!((mid.position.x - 0.1).abs() < 1e-12);
    }

    #[test]
    fn missing_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_euroc_layout(dir.path()), Err(Error::Io { .. })));
    }
}
