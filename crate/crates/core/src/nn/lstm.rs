use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{fan_in_uniform, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Hidden and cell vectors carried between LSTM steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_size: usize) -> Self {
        LstmState {
            hidden: vec![0.0; hidden_size],
            cell: vec![0.0; hidden_size],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.hidden.iter().chain(&self.cell).all(|v| v.is_finite())
    }
}

/// The state as graph nodes.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub hidden: Var,
    pub cell: Var,
}

impl LstmVars {
    pub fn from_state(g: &mut Graph, s: &LstmState) -> Self {
        LstmVars {
            hidden: g.input(Tensor::vector(s.hidden.clone())),
            cell: g.input(Tensor::vector(s.cell.clone())),
        }
    }

    pub fn to_state(self, g: &Graph) -> LstmState {
        LstmState {
            hidden: g.value(self.hidden).data().to_vec(),
            cell: g.value(self.cell).data().to_vec(),
        }
    }
}

/// Weights of one LSTM cell. Gate blocks are laid out input, forget,
/// candidate, output along the `4 * hidden` axis.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
}

impl LstmParams {
    /// Fan-in scaled uniform weights, zero bias except the forget gate at 1.
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let h4 = 4 * hidden_size;
        let w_input = store.add(
            format!("{prefix}.w_input"),
            fan_in_uniform(rng, &[input_size, h4], input_size),
        )?;
        let w_hidden = store.add(
            format!("{prefix}.w_hidden"),
            fan_in_uniform(rng, &[hidden_size, h4], hidden_size),
        )?;
        let mut b = Tensor::zeros(&[h4]);
        b.data_mut()[hidden_size..2 * hidden_size].fill(1.0);
        let bias = store.add(format!("{prefix}.bias"), b)?;
        Ok(LstmParams {
            input_size,
            hidden_size,
            w_input,
            w_hidden,
            bias,
        })
    }
}

/// One LSTM step; the output is the new hidden vector.
pub fn lstm_step(
    g: &mut Graph,
    store: &ParamStore,
    p: &LstmParams,
    input: Var,
    state: LstmVars,
) -> Result<LstmVars> {
    let n = g.value(input).len();
    if n != p.input_size {
        return Err(Error::shape(
            "lstm_step",
            format!("input of length {n}, cell expects {}", p.input_size),
        ));
    }
    let h = p.hidden_size;
    if g.value(state.hidden).len() != h || g.value(state.cell).len() != h {
        return Err(Error::shape("lstm_step", format!("state must have length {h}")));
    }
    let wx = g.param(store, p.w_input);
    let wh = g.param(store, p.w_hidden);
    let b = g.param(store, p.bias);
    let from_x = g.dense(input, wx, Some(b))?;
    let from_h = g.dense(state.hidden, wh, None)?;
    let pre = g.add(from_x, from_h)?;
    let i = g.slice(pre, 0, h)?;
    let f = g.slice(pre, h, h)?;
    let c = g.slice(pre, 2 * h, h)?;
    let o = g.slice(pre, 3 * h, h)?;
    let i = g.sigmoid(i)?;
    let f = g.sigmoid(f)?;
    let c = g.tanh(c)?;
    let o = g.sigmoid(o)?;
    let keep = g.mul(f, state.cell)?;
    let write = g.mul(i, c)?;
    let cell = g.add(keep, write)?;
    let squashed = g.tanh(cell)?;
    let hidden = g.mul(o, squashed)?;
    Ok(LstmVars { hidden, cell })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ops::sigmoid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run(store: &ParamStore, p: &LstmParams, x: &[f64], s: &LstmState) -> LstmState {
        let mut g = Graph::new();
        let xin = g.input(Tensor::vector(x.to_vec()));
        let sv = LstmVars::from_state(&mut g, s);
        lstm_step(&mut g, store, p, xin, sv).unwrap().to_state(&g)
    }

    #[test]
    fn all_zero_fixed_point() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = LstmParams::init(&mut store, "l", 3, 4, &mut rng).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.value_mut(id).fill(0.0);
        }
        let s = run(&store, &p, &[0.0; 3], &LstmState::zeros(4));
        assert_eq!(s, LstmState::zeros(4));
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LstmParams::init(&mut store, "l", 2, 3, &mut rng).unwrap();
        store.value_mut(p.w_input).fill(0.0);
        store.value_mut(p.w_hidden).fill(0.0);
        let b = store.value_mut(p.bias).data_mut();
        b.fill(0.0);
        b[3..6].fill(20.0); // forget gate
        b[0..3].fill(-20.0); // input gate closed
        let s0 = LstmState {
            hidden: vec![0.1, -0.2, 0.3],
            cell: vec![0.7, -1.3, 2.1],
        };
        let s1 = run(&store, &p, &[0.4, -0.9], &s0);
        for (a, b) in s1.cell.iter().zip(&s0.cell) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    // Gate equations written out one scalar at a time.
    fn reference_step(
        wx: &[f64],
        wh: &[f64],
        b: &[f64],
        x: &[f64],
        s: &LstmState,
    ) -> LstmState {
        let h = s.hidden.len();
        let pre = |gate: usize, j: usize| {
            let col = gate * h + j;
            let mut z = b[col];
            for (k, xv) in x.iter().enumerate() {
                z += xv * wx[k * 4 * h + col];
            }
            for (k, hv) in s.hidden.iter().enumerate() {
                z += hv * wh[k * 4 * h + col];
            }
            z
        };
        let mut out = LstmState::zeros(h);
        for j in 0..h {
            let i = sigmoid(pre(0, j));
            let f = sigmoid(pre(1, j));
            let c = pre(2, j).tanh();
            let o = sigmoid(pre(3, j));
            out.cell[j] = f * s.cell[j] + i * c;
            out.hidden[j] = o * out.cell[j].tanh();
        }
        out
    }

    #[test]
    fn matches_scalar_reference() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = LstmParams::init(&mut store, "l", 5, 6, &mut rng).unwrap();
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s0 = LstmState {
            hidden: (0..6).map(|_| rng.random_range(-1.0..1.0)).collect(),
            cell: (0..6).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let got = run(&store, &p, &x, &s0);
        let want = reference_step(
            store.value(p.w_input).data(),
            store.value(p.w_hidden).data(),
            store.value(p.bias).data(),
            &x,
            &s0,
        );
        for (a, b) in got.hidden.iter().chain(&got.cell).zip(want.hidden.iter().chain(&want.cell)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_input_size() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = LstmParams::init(&mut store, "l", 2, 2, &mut rng).unwrap();
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![0.0; 3]));
        let s = LstmVars::from_state(&mut g, &LstmState::zeros(2));
        assert!(lstm_step(&mut g, &store, &p, x, s).is_err());
    }
}
