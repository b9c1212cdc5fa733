use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};

/// How the translation and rotation terms of the pose loss are balanced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossMode {
    /// `L_x + beta * L_q`
    FixedBeta(f64),
    /// `L_x exp(-s_x) + s_x + L_q exp(-s_q) + s_q` with learnable `s_x`, `s_q`.
    LearnedSigma,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    /// `(height, width, channels)`
    pub image_shape: (usize, usize, usize),
    pub visual_feature_dim: usize,
    pub inertial_hidden: usize,
    pub inertial_feature_dim: usize,
    pub core_hidden: usize,
    pub head_hidden: usize,
    /// Weight of the L1 norm next to the L2 norm in each loss term.
    pub gamma: f64,
    pub loss_mode: LossMode,
    pub s_x_init: f64,
    pub s_q_init: f64,
    /// Stem width followed by the widths of the three residual blocks.
    pub encoder_channels: [usize; 4],
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            image_shape: (36, 64, 1),
            visual_feature_dim: 64,
            inertial_hidden: 32,
            inertial_feature_dim: 32,
            core_hidden: 128,
            head_hidden: 1024,
            gamma: 0.5,
            loss_mode: LossMode::LearnedSigma,
            s_x_init: 0.0,
            s_q_init: -3.0,
            encoder_channels: [8, 16, 32, 32],
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        let (h, w, c) = self.image_shape;
        let dims = [
            h,
            w,
            c,
            self.visual_feature_dim,
            self.inertial_hidden,
            self.inertial_feature_dim,
            self.core_hidden,
            self.head_hidden,
        ];
        if dims.iter().chain(&self.encoder_channels).any(|d| *d == 0) {
            return Err(Error::InvalidSpec("model dimensions must be positive".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidSpec(format!("gamma {} must be >= 0", self.gamma)));
        }
        if let LossMode::FixedBeta(b) = self.loss_mode {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::InvalidSpec(format!("beta {b} must be >= 0")));
            }
        }
        if !(self.s_x_init.is_finite() && self.s_q_init.is_finite()) {
            return Err(Error::InvalidSpec("loss weights must be finite".into()));
        }
        Ok(())
    }

    pub fn fused_dim(&self) -> usize {
        self.visual_feature_dim + self.inertial_feature_dim
    }

    pub fn to_meta(&self, meta: &mut BTreeMap<String, String>) {
        let mut put = |k: &str, v: String| {
            meta.insert(format!("model.{k}"), v);
        };
        let (h, w, c) = self.image_shape;
        put("image_shape", format!("{h},{w},{c}"));
        put("visual_feature_dim", self.visual_feature_dim.to_string());
        put("inertial_hidden", self.inertial_hidden.to_string());
        put("inertial_feature_dim", self.inertial_feature_dim.to_string());
        put("core_hidden", self.core_hidden.to_string());
        put("head_hidden", self.head_hidden.to_string());
        put("gamma", self.gamma.to_string());
        put(
            "loss_mode",
            match self.loss_mode {
                LossMode::FixedBeta(b) => format!("fixed_beta:{b}"),
                LossMode::LearnedSigma => "learned_sigma".into(),
            },
        );
        put("s_x_init", self.s_x_init.to_string());
        put("s_q_init", self.s_q_init.to_string());
        let ch: Vec<String> = self.encoder_channels.iter().map(|c| c.to_string()).collect();
        put("encoder_channels", ch.join(","));
    }

    pub fn from_meta(meta: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| -> Result<&str> {
            meta.get(&format!("model.{k}"))
                .map(String::as_str)
                .ok_or_else(|| Error::Checkpoint(format!("manifest lacks model.{k}")))
        };
        let num = |k: &str| -> Result<usize> {
            let v = get(k)?;
            v.parse().map_err(|_| Error::Checkpoint(format!("model.{k} = `{v}`")))
        };
        let real = |k: &str| -> Result<f64> {
            let v = get(k)?;
            v.parse().map_err(|_| Error::Checkpoint(format!("model.{k} = `{v}`")))
        };
        let list = |k: &str, n: usize| -> Result<Vec<usize>> {
            let v = get(k)?;
            let out: Vec<usize> = v
                .split(',')
                .map(|p| p.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Checkpoint(format!("model.{k} = `{v}`")))?;
            if out.len() != n {
                return Err(Error::Checkpoint(format!("model.{k} needs {n} values")));
            }
            Ok(out)
        };
        let shape = list("image_shape", 3)?;
        let ch = list("encoder_channels", 4)?;
        let loss_mode = match get("loss_mode")? {
            "learned_sigma" => LossMode::LearnedSigma,
            s => match s.strip_prefix("fixed_beta:").map(str::parse::<f64>) {
                Some(Ok(b)) => LossMode::FixedBeta(b),
                _ => return Err(Error::Checkpoint(format!("model.loss_mode = `{s}`"))),
            },
        };
        let cfg = FusionConfig {
            image_shape: (shape[0], shape[1], shape[2]),
            visual_feature_dim: num("visual_feature_dim")?,
            inertial_hidden: num("inertial_hidden")?,
            inertial_feature_dim: num("inertial_feature_dim")?,
            core_hidden: num("core_hidden")?,
            head_hidden: num("head_hidden")?,
            gamma: real("gamma")?,
            loss_mode,
            s_x_init: real("s_x_init")?,
            s_q_init: real("s_q_init")?,
            encoder_channels: [ch[0], ch[1], ch[2], ch[3]],
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-axis position statistics of a training set, used to standardize the
/// previous-pose input and to scale the translation head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseNormalizer {
    pub mean: Vec3,
    pub std: Vec3,
}

/// Axes that barely move still get a usable scale.
const MIN_STD: f64 = 0.05;

impl PoseNormalizer {
    pub const IDENTITY: PoseNormalizer = PoseNormalizer {
        mean: Vec3::new(0.0, 0.0, 0.0),
        std: Vec3::new(1.0, 1.0, 1.0),
    };

    pub fn fit(poses: &[Pose]) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::EmptyInput("poses"));
        }
        let n = poses.len() as f64;
        let mean = poses.iter().map(|p| p.position).sum::<Vec3>() / n;
        let var = poses
            .iter()
            .map(|p| (p.position - mean).component_mul(&(p.position - mean)))
            .sum::<Vec3>()
            / n;
        Ok(PoseNormalizer {
            mean,
            std: var.map(|v| v.sqrt().max(MIN_STD)),
        })
    }

    /// `[standardized position, canonical quaternion]`
    pub fn encode(&self, pose: &Pose) -> [f64; 7] {
        let p = (pose.position - self.mean).component_div(&self.std);
        let q = pose.orientation();
        [p.x, p.y, p.z, q.w, q.x, q.y, q.z]
    }

    pub fn to_meta(&self, meta: &mut BTreeMap<String, String>) {
        let fmt = |v: &Vec3| format!("{},{},{}", v.x, v.y, v.z);
        meta.insert("norm.mean".into(), fmt(&self.mean));
        meta.insert("norm.std".into(), fmt(&self.std));
    }

    pub fn from_meta(meta: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| -> Result<Vec3> {
            let v = meta
                .get(k)
                .ok_or_else(|| Error::Checkpoint(format!("manifest lacks {k}")))?;
            let parts = crate::kv::parse_reals(v, k)?;
            if parts.len() != 3 {
                return Err(Error::Checkpoint(format!("{k} needs 3 values")));
            }
            Ok(Vec3::new(parts[0], parts[1], parts[2]))
        };
        Ok(PoseNormalizer {
            mean: get("norm.mean")?,
            std: get("norm.std")?,
        })
    }
}
