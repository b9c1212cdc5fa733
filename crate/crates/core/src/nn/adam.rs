use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Bias-corrected Adam (Kingma & Ba) over every tensor in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Tensor> = store
            .ids()
            .map(|id| Tensor::zeros(store.value(id).shape()))
            .collect();
        AdamState {
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Applies one update from the gradients currently held in `store`.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    if state.first_moment.len() != store.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "optimizer tracks {} tensors, store has {}",
                state.first_moment.len(),
                store.len()
            ),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.epsilon);
    for (((value, grad), m), v) in store
        .values_and_grads_mut()
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        if m.shape() != value.shape() || grad.shape() != value.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("moment {:?} for parameter {:?}", m.shape(), value.shape()),
            ));
        }
        let it = value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
        for ((p, g), (m, v)) in it {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
