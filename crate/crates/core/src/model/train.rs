use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{rms, rotation_error, translation_error, Pose, Vec3};
use crate::nn::{adam_step, AdamState, Graph, LstmState, LstmVars};

use super::config::{FusionConfig, PoseNormalizer};
use super::loss::pose_loss;
use super::FusionModel;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Observations per truncated-backpropagation sequence.
    pub seq_len: usize,
    pub lr: f64,
    pub seed: u64,
    /// Standard deviation of the Gaussian noise added to each coordinate of
    /// the teacher-forced previous position, m.
    pub prev_noise: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            seq_len: 8,
            lr: 1e-4,
            seed: 0,
            prev_noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-observation loss as optimized.
    pub train_loss: f64,
    /// Mean of `L_x + L_q`, which unlike the learned-weight loss is never
    /// negative.
    pub data_loss: f64,
    /// NaN when no validation set was given.
    pub val_trans_rmse: f64,
    pub val_rot_rmse: f64,
    pub s_x: f64,
    pub s_q: f64,
}

impl EpochStats {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,data_loss,val_trans_rmse_m,val_rot_rmse_rad,s_x,s_q";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch, self.train_loss, self.data_loss, self.val_trans_rmse, self.val_rot_rmse, self.s_x, self.s_q
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last epoch.
    pub model: FusionModel,
    /// Parameters of the epoch with the lowest validation translation RMSE
    /// (lowest training loss without a validation set).
    pub best: FusionModel,
    pub best_epoch: usize,
    pub log: Vec<EpochStats>,
}

impl TrainOutcome {
    pub fn log_csv(&self) -> String {
        let mut out = format!("{}\n", EpochStats::CSV_HEADER);
        for e in &self.log {
            let _ = writeln!(out, "{}", e.csv_row());
        }
        out
    }
}

/// `(previous pose, observation index)` for every trainable observation.
fn teacher_steps(ds: &Dataset) -> Result<Vec<(Pose, usize)>> {
    let mut prev = ds.start_pose().copied();
    let mut steps = Vec::with_capacity(ds.len());
    for (i, o) in ds.observations().iter().enumerate() {
        let truth = o.ground_truth.ok_or_else(|| {
            Error::MalformedDataset(format!("observation at {} s lacks ground truth", o.frame.timestamp))
        })?;
        if let Some(p) = prev {
            steps.push((p, i));
        }
        prev = Some(truth);
    }
    Ok(steps)
}

/// Fits the pose normalizer on `train_ds`, initializes a model from
/// `tc.seed` and trains it.
pub fn train(
    train_ds: &Dataset,
    val_ds: Option<&Dataset>,
    config: &FusionConfig,
    tc: &TrainConfig,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    let truth = train_ds.ground_truth_trajectory()?;
    let normalizer = PoseNormalizer::fit(truth.poses())?;
    let model = FusionModel::new(config.clone(), normalizer, tc.seed)?;
    train_model(model, train_ds, val_ds, tc, on_epoch)
}

/// Teacher-forced truncated backpropagation through time: each sequence of
/// `tc.seq_len` observations starts from a zero core state, is fed the
/// ground-truth previous pose, and ends with one Adam step on its mean loss.
pub fn train_model(
    mut model: FusionModel,
    train_ds: &Dataset,
    val_ds: Option<&Dataset>,
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    if tc.seq_len == 0 || !(tc.lr >= 0.0) || !(tc.prev_noise >= 0.0) {
        return Err(Error::InvalidSpec(format!(
            "sequence length {} and learning rate {}",
            tc.seq_len, tc.lr
        )));
    }
    let steps = teacher_steps(train_ds)?;
    if steps.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    let mut sequences: Vec<&[(Pose, usize)]> = steps.chunks(tc.seq_len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed ^ 0x5eed_0f_5e9);
    let mut opt = AdamState::new(&model.params, tc.lr);
    let obs = train_ds.observations();
    let hidden = model.config.core_hidden;
    let mut log = Vec::with_capacity(tc.epochs);
    let mut best: Option<(f64, usize, FusionModel)> = None;
    let mut global_step = 0;

    for epoch in 1..=tc.epochs {
        sequences.shuffle(&mut rng);
        let (mut total, mut data, mut count) = (0.0, 0.0, 0usize);
        for seq in &sequences {
            let mut run = || -> Result<(f64, f64)> {
                model.params.zero_grad();
                let mut g = Graph::new();
                let weights = model.loss_weights(&mut g, &model.params);
                let mut state = LstmVars::from_state(&mut g, &LstmState::zeros(hidden));
                let mut losses = Vec::with_capacity(seq.len());
                let mut data_sum = 0.0;
                for (prev, i) in seq.iter() {
                    let o = &obs[*i];
                    let mut prev = *prev;
                    if tc.prev_noise > 0.0 {
                        prev.position += Vec3::from_fn(|_, _| tc.prev_noise * rng.sample::<f64, _>(StandardNormal));
                    }
                    let prev = &prev;
                    let frame = (!o.frame.looks_corrupted()).then_some(&o.frame);
                    let out = model.step_vars(&mut g, &model.params, frame, &o.imu, prev, state)?;
                    let truth = o.ground_truth.expect("checked by teacher_steps");
                    let parts = pose_loss(
                        &mut g,
                        out.translation,
                        out.quat_raw,
                        truth.position,
                        truth.orientation(),
                        weights,
                        &model.config,
                    )?;
                    data_sum += g.value(parts.l_x).item() + g.value(parts.l_q).item();
                    losses.push(parts.total);
                    state = out.state;
                }
                let sum = g.concat(&losses)?;
                let sum = g.sum(sum)?;
                let mean = g.scale(sum, 1.0 / seq.len() as f64)?;
                g.backward(mean, &mut model.params)?;
                adam_step(&mut model.params, &mut opt)?;
                Ok((g.value(mean).item(), data_sum))
            };
            let (loss, data_sum) = run().map_err(|e| Error::TrainingFault {
                step: global_step,
                source: Box::new(e),
            })?;
            global_step += 1;
            total += loss * seq.len() as f64;
            data += data_sum;
            count += seq.len();
        }
        let (s_x, s_q) = model.loss_weight_values();
        let (val_t, val_r) = match val_ds {
            Some(v) => {
                let r = evaluate_open_loop(&model, v)?;
                (r.trans_rmse, r.rot_rmse)
            }
            None => (f64::NAN, f64::NAN),
        };
        let stats = EpochStats {
            epoch,
            train_loss: total / count as f64,
            data_loss: data / count as f64,
            val_trans_rmse: val_t,
            val_rot_rmse: val_r,
            s_x,
            s_q,
        };
        let score = if val_ds.is_some() { val_t } else { stats.train_loss };
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, model.clone()));
        }
        on_epoch(&stats);
        log.push(stats);
    }
    let (best_epoch, best) = match best {
        Some((_, e, m)) => (e, m),
        None => (0, model.clone()),
    };
    Ok(TrainOutcome {
        model,
        best,
        best_epoch,
        log,
    })
}

/// Self-fed predictions over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub predictions: Vec<Pose>,
    pub truth: Vec<Pose>,
    /// Whether the IMU-only branch produced each prediction.
    pub imu_only: Vec<bool>,
    /// Ground-truth dropout labels of the frames.
    pub corrupted: Vec<bool>,
    pub trans_rmse: f64,
    pub rot_rmse: f64,
}

impl EvalReport {
    pub fn translation_errors(&self) -> Vec<f64> {
        self.predictions
            .iter()
            .zip(&self.truth)
            .map(|(p, t)| translation_error(p, t))
            .collect()
    }

    pub fn imu_only_count(&self) -> usize {
        self.imu_only.iter().filter(|b| **b).count()
    }

    /// Translation RMSE over frames with the given corruption label.
    pub fn subset_trans_rmse(&self, corrupted: bool) -> Option<f64> {
        let errs: Vec<f64> = self
            .translation_errors()
            .into_iter()
            .zip(&self.corrupted)
            .filter(|(_, c)| **c == corrupted)
            .map(|(e, _)| e)
            .collect();
        rms(&errs).ok()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "timestamp_s,px,py,pz,qw,qx,qy,qz,true_px,true_py,true_pz,trans_err_m,rot_err_rad,imu_only,corrupted\n",
        );
        for (i, (p, t)) in self.predictions.iter().zip(&self.truth).enumerate() {
            let q = p.orientation();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                p.timestamp,
                p.position.x,
                p.position.y,
                p.position.z,
                q.w,
                q.x,
                q.y,
                q.z,
                t.position.x,
                t.position.y,
                t.position.z,
                translation_error(p, t),
                rotation_error(p, t),
                self.imu_only[i] as u8,
                self.corrupted[i] as u8
            );
        }
        out
    }
}

/// Runs the model over `ds` from its start pose, feeding back its own
/// estimates, with the core state zeroed at the start.
pub fn evaluate_open_loop(model: &FusionModel, ds: &Dataset) -> Result<EvalReport> {
    let start = ds
        .start_pose()
        .ok_or_else(|| Error::MalformedDataset("evaluation needs a start pose".into()))?;
    let truth = ds
        .ground_truth()
        .ok_or_else(|| Error::MalformedDataset("evaluation needs ground truth".into()))?;
    if truth.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    let mut prev = *start;
    let mut state = model.initial_state();
    let mut predictions = Vec::with_capacity(ds.len());
    let mut imu_only = Vec::with_capacity(ds.len());
    for o in ds.observations() {
        let p = model.predict(o, &prev, &state)?;
        prev = p.pose;
        state = p.state;
        predictions.push(p.pose);
        imu_only.push(p.imu_only);
    }
    let t_err: Vec<f64> = predictions.iter().zip(&truth).map(|(p, t)| translation_error(p, t)).collect();
    let r_err: Vec<f64> = predictions.iter().zip(&truth).map(|(p, t)| rotation_error(p, t)).collect();
    Ok(EvalReport {
        trans_rmse: rms(&t_err)?,
        rot_rmse: rms(&r_err)?,
        corrupted: ds.observations().iter().map(|o| o.frame.corrupted).collect(),
        predictions,
        truth,
        imu_only,
    })
}
