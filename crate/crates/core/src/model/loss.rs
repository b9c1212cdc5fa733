//! Pose regression loss: an L2 + gamma * L1 distance per term, balanced either
//! by a fixed factor or by learned log-variances.

use crate::error::Result;
use crate::geometry::{quat_normalize, Quat, Vec3};
use crate::nn::{Graph, Tensor, Var};

use super::config::{FusionConfig, LossMode};

/// Learnable log-variances `s = log sigma^2` as graph nodes.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub s_x: Var,
    pub s_q: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Var,
    /// Translation distance, always >= 0.
    pub l_x: Var,
    /// Rotation distance on the raw quaternion head, always >= 0.
    pub l_q: Var,
}

fn distance(g: &mut Graph, pred: Var, target: Var, gamma: f64) -> Result<Var> {
    let d = g.sub(pred, target)?;
    let l2 = g.l2_norm(d)?;
    if gamma == 0.0 {
        return Ok(l2);
    }
    let l1 = g.l1_norm(d)?;
    let l1 = g.scale(l1, gamma)?;
    g.add(l2, l1)
}

/// Loss of one prediction.
///
/// `quat_raw` is the unnormalized rotation head; it is compared with the
/// normalized target quaternion. `weights` is only read in
/// [`LossMode::LearnedSigma`].
pub fn pose_loss(
    g: &mut Graph,
    translation: Var,
    quat_raw: Var,
    truth_translation: Vec3,
    truth_rotation: Quat,
    weights: LossWeights,
    config: &FusionConfig,
) -> Result<LossParts> {
    let q = quat_normalize(truth_rotation)?;
    let tx = g.input(Tensor::vector(truth_translation.as_slice().to_vec()));
    let tq = g.input(Tensor::vector(q.to_array().to_vec()));
    let l_x = distance(g, translation, tx, config.gamma)?;
    let l_q = distance(g, quat_raw, tq, config.gamma)?;
    let total = match config.loss_mode {
        LossMode::FixedBeta(beta) => {
            let wq = g.scale(l_q, beta)?;
            g.add(l_x, wq)?
        }
        LossMode::LearnedSigma => {
            let tx = weighted(g, l_x, weights.s_x)?;
            let tq = weighted(g, l_q, weights.s_q)?;
            g.add(tx, tq)?
        }
    };
    Ok(LossParts { total, l_x, l_q })
}

/// `l * exp(-s) + s`
fn weighted(g: &mut Graph, l: Var, s: Var) -> Result<Var> {
    let neg = g.scale(s, -1.0)?;
    let precision = g.exp(neg)?;
    let scaled = g.mul(l, precision)?;
    g.add(scaled, s)
}
