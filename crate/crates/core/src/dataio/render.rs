//! Toy downward-looking camera over a textured ground plane.
//!
//! The ground is `z = 0`. Its texture is periodic value noise, so shifting the
//! camera by a whole texture period reproduces the same image when no marker
//! is in view. Pillar markers are bright squares with a dark rim.
//!
//! Camera convention: the optical axis is the body `-z` axis, image up is the
//! body `+x` axis and image right is the body `-y` axis.

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};
use crate::kv::{parse_reals, KvFile};
use crate::nn::Tensor;

use super::Frame;

/// A square landmark on the ground, centered at `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pillar {
    pub x: f64,
    pub y: f64,
    pub half_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub texture_seed: u64,
    /// Texture repeats every `texture_period` meters along x and y.
    pub texture_period: f64,
    /// Lattice spacing of the fine noise octave.
    pub texture_cell: f64,
    pub pillars: Vec<Pillar>,
    /// Horizontal field of view of the camera.
    pub hfov_deg: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            texture_seed: 17,
            texture_period: 16.0,
            texture_cell: 0.25,
            pillars: vec![
                Pillar {
                    x: 2.0,
                    y: 1.0,
                    half_size: 0.25,
                },
                Pillar {
                    x: -1.0,
                    y: 1.5,
                    half_size: 0.2,
                },
                Pillar {
                    x: 0.5,
                    y: -1.2,
                    half_size: 0.2,
                },
                Pillar {
                    x: 3.5,
                    y: -0.5,
                    half_size: 0.3,
                },
            ],
            hfov_deg: 90.0,
        }
    }
}

const RIM: f64 = 1.3;
const SKY: f64 = 0.5;

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        let cells = self.texture_period / self.texture_cell;
        if !(self.texture_cell > 0.0) || (cells - cells.round()).abs() > 1e-9 || cells.round() < 4.0 {
            return Err(Error::InvalidSpec(format!(
                "texture period {} must be a multiple (>= 4) of cell {}",
                self.texture_period, self.texture_cell
            )));
        }
        if (cells.round() as u64) % 4 != 0 {
            return Err(Error::InvalidSpec(
                "texture period must span a multiple of 4 cells".into(),
            ));
        }
        if !(self.hfov_deg > 0.0 && self.hfov_deg < 170.0) {
            return Err(Error::InvalidSpec(format!("field of view {}°", self.hfov_deg)));
        }
        Ok(())
    }

    /// Ground footprint width of a nadir view from `altitude`.
    pub fn footprint_width(&self, altitude: f64) -> f64 {
        2.0 * altitude * (0.5 * self.hfov_deg.to_radians()).tan()
    }

    /// Meters per pixel at `altitude` for an image `width` pixels wide.
    pub fn ground_sample_distance(&self, altitude: f64, width: usize) -> f64 {
        self.footprint_width(altitude) / width as f64
    }

    /// Ground intensity at a world point, in `[0, 1]`.
    pub fn intensity(&self, gx: f64, gy: f64) -> f64 {
        for p in &self.pillars {
            let d = (gx - p.x).abs().max((gy - p.y).abs());
            if d <= p.half_size {
                return 1.0;
            }
            if d <= RIM * p.half_size {
                return 0.0;
            }
        }
        let period = (self.texture_period / self.texture_cell).round() as i64;
        let fine = value_noise(gx / self.texture_cell, gy / self.texture_cell, period, self.texture_seed);
        let coarse = value_noise(
            gx / (4.0 * self.texture_cell),
            gy / (4.0 * self.texture_cell),
            period / 4,
            self.texture_seed ^ 0x9e37_79b9_7f4a_7c15,
        );
        0.2 + 0.6 * (0.55 * fine + 0.45 * coarse)
    }

    pub fn to_kv(&self, kv: &mut KvFile) {
        kv.set("world.texture_seed", self.texture_seed);
        kv.set("world.texture_period", self.texture_period);
        kv.set("world.texture_cell", self.texture_cell);
        kv.set("world.hfov_deg", self.hfov_deg);
        let pillars: Vec<String> = self
            .pillars
            .iter()
            .map(|p| format!("{},{},{}", p.x, p.y, p.half_size))
            .collect();
        kv.set("world.pillars", pillars.join(";"));
    }

    pub fn from_kv(kv: &KvFile) -> Result<Option<Self>> {
        let Some(seed) = kv.parsed::<u64>("world.texture_seed")? else {
            return Ok(None);
        };
        let d = WorldSpec::default();
        let mut pillars = Vec::new();
        if let Some(list) = kv.get("world.pillars") {
            for item in list.split(';').filter(|s| !s.trim().is_empty()) {
                let v = parse_reals(item, "world.pillars")?;
                if v.len() != 3 {
                    return Err(Error::parse("world.pillars", format!("`{item}` is not x,y,half")));
                }
                pillars.push(Pillar {
                    x: v[0],
                    y: v[1],
                    half_size: v[2],
                });
            }
        }
        let w = WorldSpec {
            texture_seed: seed,
            texture_period: kv.parsed_or("world.texture_period", d.texture_period)?,
            texture_cell: kv.parsed_or("world.texture_cell", d.texture_cell)?,
            hfov_deg: kv.parsed_or("world.hfov_deg", d.hfov_deg)?,
            pillars,
        };
        w.validate()?;
        Ok(Some(w))
    }
}

fn hash_lattice(ix: i64, iy: i64, seed: u64) -> f64 {
    // splitmix64 finalizer over the packed coordinates
    let mut z = seed
        .wrapping_add((ix as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add((iy as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Smoothly interpolated lattice noise that repeats every `period` cells.
fn value_noise(u: f64, v: f64, period: i64, seed: u64) -> f64 {
    let (fu, fv) = (u.floor(), v.floor());
    let (tu, tv) = (u - fu, v - fv);
    let (iu, iv) = (fu as i64, fv as i64);
    let at = |a: i64, b: i64| hash_lattice(a.rem_euclid(period), b.rem_euclid(period), seed);
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (su, sv) = (s(tu), s(tv));
    let top = at(iu, iv) * (1.0 - su) + at(iu + 1, iv) * su;
    let bottom = at(iu, iv + 1) * (1.0 - su) + at(iu + 1, iv + 1) * su;
    top * (1.0 - sv) + bottom * sv
}

/// Renders the camera view from `pose` as an `[H, W, C]` frame.
pub fn render_frame(world: &WorldSpec, pose: &Pose, shape: (usize, usize, usize)) -> Result<Frame> {
    let (h, w, c) = shape;
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::InvalidSpec(format!("image shape {shape:?}")));
    }
    let altitude = pose.position.z;
    if !(altitude > 0.0) {
        return Err(Error::DegenerateView(altitude));
    }
    let r = pose.orientation().to_rotation_matrix();
    let tan_half = (0.5 * world.hfov_deg.to_radians()).tan();
    let half_w = w as f64 / 2.0;
    let mut px = Vec::with_capacity(h * w * c);
    for row in 0..h {
        let ny = (row as f64 + 0.5 - h as f64 / 2.0) / half_w * tan_half;
        for col in 0..w {
            let nx = (col as f64 + 0.5 - half_w) / half_w * tan_half;
            let ray = r * Vec3::new(-ny, -nx, -1.0);
            let value = if ray.z < -1e-9 {
                let t = altitude / -ray.z;
                world.intensity(pose.position.x + t * ray.x, pose.position.y + t * ray.y)
            } else {
                SKY
            };
            px.extend(std::iter::repeat_n(value, c));
        }
    }
    Ok(Frame {
        pixels: Tensor::new(vec![h, w, c], px)?,
        timestamp: pose.timestamp,
        corrupted: false,
    })
}
