//! Multimodal pose regressor.
//!
//! A residual CNN turns each frame into a visual feature `z_V`; a small LSTM
//! summarizes the IMU window into `z_I`. Their concatenation, together with
//! the previous pose, drives a core LSTM whose hidden state feeds a dense
//! layer and two heads: translation (3) and a raw quaternion (4). When the
//! camera drops out, a learned placeholder stands in for `z_V`.

mod config;
mod loss;
mod train;

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::{Frame, ImuWindow, Observation};
use crate::error::{Error, Result};
use crate::geometry::{quat_normalize, Pose, Quat, Vec3};
use crate::nn::{
    checkpoint, fan_in_uniform, lstm_step, Graph, LstmParams, LstmState, LstmVars, ParamId,
    ParamStore, Tensor, Var,
};

pub use config::{FusionConfig, LossMode, PoseNormalizer};
pub use loss::{pose_loss, LossParts, LossWeights};
pub use train::{evaluate_open_loop, train, train_model, EpochStats, EvalReport, TrainConfig, TrainOutcome};

const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Visual,
    Inertial,
    Fused,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub kind: FeatureKind,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gain: ParamId,
    shift: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct ResBlock {
    conv1: ParamId,
    norm1: Norm,
    conv2: ParamId,
    norm2: Norm,
    /// 1x1 stride-2 projection on the skip path.
    proj: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct DenseIds {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Layout {
    stem: ParamId,
    stem_norm: Norm,
    blocks: Vec<ResBlock>,
    vis_fc1: DenseIds,
    vis_fc2: DenseIds,
    inertial: LstmParams,
    inertial_proj: DenseIds,
    placeholder: ParamId,
    core: LstmParams,
    head: DenseIds,
    translation: DenseIds,
    rotation: DenseIds,
    s_x: ParamId,
    s_q: ParamId,
}

/// Graph nodes of one forward step.
#[derive(Debug, Clone, Copy)]
pub struct StepVars {
    /// De-standardized translation, meters.
    pub translation: Var,
    pub quat_raw: Var,
    pub fused: Var,
    pub state: LstmVars,
}

/// A pose estimate and the recurrent state to carry forward.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub pose: Pose,
    pub state: LstmState,
    pub imu_only: bool,
}

#[derive(Debug, Clone)]
pub struct FusionModel {
    pub config: FusionConfig,
    pub params: ParamStore,
    pub normalizer: PoseNormalizer,
    layout: Layout,
}

fn conv_kernel(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: String, k: usize, cin: usize, cout: usize) -> Result<ParamId> {
    store.add(name, fan_in_uniform(rng, &[k, k, cin, cout], k * k * cin))
}

fn norm(store: &mut ParamStore, name: &str, c: usize) -> Result<Norm> {
    Ok(Norm {
        gain: store.add(format!("{name}.gain"), Tensor::full(&[c], 1.0))?,
        shift: store.add(format!("{name}.shift"), Tensor::zeros(&[c]))?,
    })
}

fn dense_ids(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, n: usize, m: usize) -> Result<DenseIds> {
    Ok(DenseIds {
        w: store.add(format!("{name}.w"), fan_in_uniform(rng, &[n, m], n))?,
        b: store.add(format!("{name}.b"), Tensor::zeros(&[m]))?,
    })
}

impl FusionModel {
    /// Freshly initialized model. Conv layers carry no bias, normalization
    /// shifts and dense biases start at zero, and the rotation head starts at
    /// the identity quaternion.
    pub fn new(config: FusionConfig, normalizer: PoseNormalizer, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let c = &config;
        let ch = c.encoder_channels;
        let stem = conv_kernel(&mut s, &mut rng, "visual.stem".into(), 3, c.image_shape.2, ch[0])?;
        let stem_norm = norm(&mut s, "visual.stem_norm", ch[0])?;
        let mut blocks = Vec::with_capacity(3);
        for i in 0..3 {
            let (cin, cout) = (ch[i], ch[i + 1]);
            let p = format!("visual.block{i}");
            blocks.push(ResBlock {
                conv1: conv_kernel(&mut s, &mut rng, format!("{p}.conv1"), 3, cin, cout)?,
                norm1: norm(&mut s, &format!("{p}.norm1"), cout)?,
                conv2: conv_kernel(&mut s, &mut rng, format!("{p}.conv2"), 3, cout, cout)?,
                norm2: norm(&mut s, &format!("{p}.norm2"), cout)?,
                proj: conv_kernel(&mut s, &mut rng, format!("{p}.proj"), 1, cin, cout)?,
            });
        }
        let vis_fc1 = dense_ids(&mut s, &mut rng, "visual.fc1", ch[3], c.visual_feature_dim)?;
        let vis_fc2 = dense_ids(&mut s, &mut rng, "visual.fc2", c.visual_feature_dim, c.visual_feature_dim)?;
        let inertial = LstmParams::init(&mut s, "inertial.lstm", 7, c.inertial_hidden, &mut rng)?;
        let inertial_proj = dense_ids(&mut s, &mut rng, "inertial.proj", c.inertial_hidden, c.inertial_feature_dim)?;
        let placeholder = s.add("visual.placeholder", Tensor::zeros(&[c.visual_feature_dim]))?;
        let core = LstmParams::init(&mut s, "core.lstm", c.fused_dim() + 7, c.core_hidden, &mut rng)?;
        let head = dense_ids(&mut s, &mut rng, "head.fc", c.core_hidden, c.head_hidden)?;
        let translation = dense_ids(&mut s, &mut rng, "head.translation", c.head_hidden, 3)?;
        let rotation = dense_ids(&mut s, &mut rng, "head.rotation", c.head_hidden, 4)?;
        s.value_mut(rotation.b).data_mut()[0] = 1.0;
        let s_x = s.add("loss.s_x", Tensor::scalar(c.s_x_init))?;
        let s_q = s.add("loss.s_q", Tensor::scalar(c.s_q_init))?;
        Ok(FusionModel {
            config,
            params: s,
            normalizer,
            layout: Layout {
                stem,
                stem_norm,
                blocks,
                vis_fc1,
                vis_fc2,
                inertial,
                inertial_proj,
                placeholder,
                core,
                head,
                translation,
                rotation,
                s_x,
                s_q,
            },
        })
    }

    /// Ids of every parameter tensor, in registration order.
    pub fn param_ids(&self) -> Vec<ParamId> {
        self.params.ids().collect()
    }

    pub fn loss_weight_ids(&self) -> (ParamId, ParamId) {
        (self.layout.s_x, self.layout.s_q)
    }

    pub fn loss_weights(&self, g: &mut Graph, store: &ParamStore) -> LossWeights {
        LossWeights {
            s_x: g.param(store, self.layout.s_x),
            s_q: g.param(store, self.layout.s_q),
        }
    }

    /// Current `(s_x, s_q)`.
    pub fn loss_weight_values(&self) -> (f64, f64) {
        (
            self.params.value(self.layout.s_x).item(),
            self.params.value(self.layout.s_q).item(),
        )
    }

    fn normed(&self, g: &mut Graph, store: &ParamStore, x: Var, n: Norm) -> Result<Var> {
        let gain = g.param(store, n.gain);
        let shift = g.param(store, n.shift);
        g.normalize(x, gain, shift)
    }

    fn dense(&self, g: &mut Graph, store: &ParamStore, x: Var, d: DenseIds) -> Result<Var> {
        let w = g.param(store, d.w);
        let b = g.param(store, d.b);
        g.dense(x, w, Some(b))
    }

    /// Visual feature `z_V` of `pixels` (an `[H, W, C]` graph node).
    pub fn visual_vars(&self, g: &mut Graph, store: &ParamStore, pixels: Var) -> Result<Var> {
        let shape = g.value(pixels).shape();
        let (h, w, c) = self.config.image_shape;
        if shape != [h, w, c] {
            return Err(Error::shape(
                "encode_visual",
                format!("frame {shape:?}, model expects [{h}, {w}, {c}]"),
            ));
        }
        let l = &self.layout;
        let k = g.param(store, l.stem);
        let x = g.conv2d(pixels, k, 1, 1)?;
        let x = self.normed(g, store, x, l.stem_norm)?;
        let mut x = g.relu(x)?;
        for b in &l.blocks {
            let k1 = g.param(store, b.conv1);
            let y = g.conv2d(x, k1, 2, 1)?;
            let y = self.normed(g, store, y, b.norm1)?;
            let y = g.relu(y)?;
            let k2 = g.param(store, b.conv2);
            let y = g.conv2d(y, k2, 1, 1)?;
            let y = self.normed(g, store, y, b.norm2)?;
            let kp = g.param(store, b.proj);
            let skip = g.conv2d(x, kp, 2, 0)?;
            let sum = g.add(y, skip)?;
            x = g.relu(sum)?;
        }
        let pooled = g.global_avg_pool(x)?;
        let f = self.dense(g, store, pooled, l.vis_fc1)?;
        let f = g.relu(f)?;
        self.dense(g, store, f, l.vis_fc2)
    }

    /// Inertial feature `z_I` of a window.
    pub fn inertial_vars(&self, g: &mut Graph, store: &ParamStore, window: &ImuWindow) -> Result<Var> {
        if window.is_empty() {
            return Err(Error::EmptyInput("IMU window"));
        }
        let h = self.config.inertial_hidden;
        let mut state = LstmVars::from_state(g, &LstmState::zeros(h));
        let span = window.t_end() - window.t_start();
        for s in window.samples() {
            let tau = if span > 0.0 { (s.timestamp - window.t_start()) / span } else { 0.0 };
            let a = s.accel / GRAVITY;
            let input = g.input(Tensor::vector(vec![a.x, a.y, a.z, s.gyro.x, s.gyro.y, s.gyro.z, tau]));
            state = lstm_step(g, store, &self.layout.inertial, input, state)?;
        }
        self.dense(g, store, state.hidden, self.layout.inertial_proj)
    }

    /// One recurrent step. `frame == None` takes the IMU-only path, which
    /// never touches pixels.
    pub fn step_vars(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        frame: Option<&Frame>,
        window: &ImuWindow,
        prev_pose: &Pose,
        state: LstmVars,
    ) -> Result<StepVars> {
        let z_v = match frame {
            Some(f) => {
                let px = g.input(f.pixels.clone());
                self.visual_vars(g, store, px)?
            }
            None => g.param(store, self.layout.placeholder),
        };
        let z_i = self.inertial_vars(g, store, window)?;
        let fused = g.concat(&[z_v, z_i])?;
        let prev = g.input(Tensor::vector(self.normalizer.encode(prev_pose).to_vec()));
        let core_in = g.concat(&[fused, prev])?;
        let state = lstm_step(g, store, &self.layout.core, core_in, state)?;
        let hidden = self.dense(g, store, state.hidden, self.layout.head)?;
        let hidden = g.relu(hidden)?;
        let raw_t = self.dense(g, store, hidden, self.layout.translation)?;
        let std = g.input(Tensor::vector(self.normalizer.std.as_slice().to_vec()));
        let mean = g.input(Tensor::vector(self.normalizer.mean.as_slice().to_vec()));
        let scaled = g.mul(raw_t, std)?;
        let translation = g.add(scaled, mean)?;
        let quat_raw = self.dense(g, store, hidden, self.layout.rotation)?;
        Ok(StepVars {
            translation,
            quat_raw,
            fused,
            state,
        })
    }

    /// `z_V` for an uncorrupted frame.
    pub fn encode_visual(&self, frame: &Frame) -> Result<FeatureVector> {
        if frame.corrupted {
            return Err(Error::CorruptedFrame(frame.timestamp));
        }
        let mut g = Graph::new();
        let px = g.input(frame.pixels.clone());
        let v = self.visual_vars(&mut g, &self.params, px)?;
        Ok(FeatureVector {
            values: g.value(v).data().to_vec(),
            kind: FeatureKind::Visual,
        })
    }

    pub fn encode_inertial(&self, window: &ImuWindow) -> Result<FeatureVector> {
        let mut g = Graph::new();
        let v = self.inertial_vars(&mut g, &self.params, window)?;
        Ok(FeatureVector {
            values: g.value(v).data().to_vec(),
            kind: FeatureKind::Inertial,
        })
    }

    fn run_step(&self, frame: Option<&Frame>, window: &ImuWindow, prev: &Pose, state: &LstmState) -> Result<(Prediction, FeatureVector)> {
        if state.hidden.len() != self.config.core_hidden || state.cell.len() != self.config.core_hidden {
            return Err(Error::shape(
                "predict",
                format!("core state of length {}, model uses {}", state.hidden.len(), self.config.core_hidden),
            ));
        }
        let mut g = Graph::new();
        let sv = LstmVars::from_state(&mut g, state);
        let out = self.step_vars(&mut g, &self.params, frame, window, prev, sv)?;
        let t = g.value(out.translation).data();
        let raw = g.value(out.quat_raw).data();
        // a degenerate rotation head keeps the previous attitude
        let q = quat_normalize(Quat::new(raw[0], raw[1], raw[2], raw[3])).unwrap_or_else(|_| prev.orientation());
        let pose = Pose::new(Vec3::new(t[0], t[1], t[2]), q, window.t_end())?;
        let fused = FeatureVector {
            values: g.value(out.fused).data().to_vec(),
            kind: FeatureKind::Fused,
        };
        Ok((
            Prediction {
                pose,
                state: out.state.to_state(&g),
                imu_only: frame.is_none(),
            },
            fused,
        ))
    }

    /// Pose estimate for one observation. Frames that look like dropouts
    /// (near-zero pixel variance) are routed to [`Self::predict_imu_only`].
    pub fn predict(&self, obs: &Observation, prev_pose: &Pose, state: &LstmState) -> Result<Prediction> {
        let frame = (!obs.frame.looks_corrupted()).then_some(&obs.frame);
        Ok(self.run_step(frame, &obs.imu, prev_pose, state)?.0)
    }

    pub fn predict_imu_only(&self, window: &ImuWindow, prev_pose: &Pose, state: &LstmState) -> Result<Prediction> {
        Ok(self.run_step(None, window, prev_pose, state)?.0)
    }

    /// The fused feature `z_t` the core LSTM would see.
    pub fn fused_features(&self, frame: Option<&Frame>, window: &ImuWindow, prev_pose: &Pose) -> Result<FeatureVector> {
        Ok(self
            .run_step(frame, window, prev_pose, &LstmState::zeros(self.config.core_hidden))?
            .1)
    }

    pub fn initial_state(&self) -> LstmState {
        LstmState::zeros(self.config.core_hidden)
    }

    /// Writes parameters plus a manifest with the config, the normalizer and
    /// `extra` entries.
    pub fn save(&self, path: &Path, extra: &BTreeMap<String, String>) -> Result<()> {
        let mut meta = extra.clone();
        self.config.to_meta(&mut meta);
        self.normalizer.to_meta(&mut meta);
        checkpoint::save(path, &self.params, &meta)
    }

    /// Loads a checkpoint written by [`Self::save`], returning the manifest.
    pub fn load(path: &Path) -> Result<(Self, BTreeMap<String, String>)> {
        let (store, meta) = checkpoint::load(path)?;
        let config = FusionConfig::from_meta(&meta)?;
        let normalizer = PoseNormalizer::from_meta(&meta)?;
        let mut model = FusionModel::new(config, normalizer, 0)?;
        if store.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model needs {}",
                store.len(),
                model.params.len()
            )));
        }
        model.params.load_from(&store)?;
        Ok((model, meta))
    }
}

#[cfg(test)]
pub(crate) mod tests;
