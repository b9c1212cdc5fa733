//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as it is evaluated. Nodes are
//! addressed by [`Var`] handles, which are only meaningful for the graph that
//! issued them. Parameter leaves refer back into a [`ParamStore`]; running
//! [`Graph::backward`] adds their gradients into the store, so gradients
//! accumulate across calls until [`ParamStore::zero_grad`].

use super::ops::{self, sigmoid};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Dense {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv2d {
        x: Var,
        k: Var,
        stride: usize,
        pad: usize,
    },
    GlobalAvgPool(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        shift: Var,
        normed: Vec<f64>,
        inv_std: f64,
    },
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    Sum(Var),
    L1Norm(Var),
    L2Norm(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of one backward pass, indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros when `v` does not
    /// influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NumericFault { op: name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A constant leaf. Inputs are not checked for finiteness; the first
    /// operation that consumes a non-finite input reports the fault.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Input,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: store.value(id).clone(),
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.zip(a, b, |x, y| x + y);
        self.push(v, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.zip(a, b, |x, y| x - y);
        self.push(v, Op::Sub(a, b), "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.zip(a, b, |x, y| x * y);
        self.push(v, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.value(a).map(|x| c * x);
        self.push(v, Op::Scale(a, c), "scale")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| if x > 0.0 || x.is_nan() { x } else { 0.0 });
        self.push(v, Op::Relu(a), "relu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a), "sigmoid")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a), "tanh")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a), "exp")
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let v = ops::dense(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        self.push(v, Op::Dense { x, w, b }, "dense")
    }

    pub fn conv2d(&mut self, x: Var, k: Var, stride: usize, pad: usize) -> Result<Var> {
        let v = ops::conv2d(self.value(x), self.value(k), stride, pad)?;
        self.push(v, Op::Conv2d { x, k, stride, pad }, "conv2d")
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let v = ops::global_avg_pool(self.value(x))?;
        self.push(v, Op::GlobalAvgPool(x), "global_avg_pool")
    }

    /// See [`ops::normalize_layer`].
    pub fn normalize(&mut self, x: Var, gain: Var, shift: Var) -> Result<Var> {
        let (v, normed, inv_std) =
            ops::layer_norm_parts(self.value(x), self.value(gain), self.value(shift))?;
        self.push(
            v,
            Op::LayerNorm {
                x,
                gain,
                shift,
                normed,
                inv_std,
            },
            "normalize",
        )
    }

    /// Concatenates flattened operands into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat", "no operands"));
        }
        let data: Vec<f64> = parts
            .iter()
            .flat_map(|p| self.value(*p).data().iter().copied())
            .collect();
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), "concat")
    }

    /// Contiguous sub-vector `[start, start + len)` of a flattened operand.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let src = self.value(x);
        if len == 0 || start + len > src.len() {
            return Err(Error::shape(
                "slice",
                format!("[{start}, {}) out of {} values", start + len, src.len()),
            ));
        }
        let v = Tensor::vector(src.data()[start..start + len].to_vec());
        self.push(v, Op::Slice { x, start }, "slice")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(x).data().iter().sum());
        self.push(v, Op::Sum(x), "sum")
    }

    pub fn l1_norm(&mut self, x: Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(x).data().iter().map(|v| v.abs()).sum());
        self.push(v, Op::L1Norm(x), "l1_norm")
    }

    pub fn l2_norm(&mut self, x: Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(x).data().iter().map(|v| v * v).sum::<f64>().sqrt());
        self.push(v, Op::L2Norm(x), "l2_norm")
    }

    /// Runs reverse-mode differentiation from the scalar `loss`.
    ///
    /// Parameter gradients are added to `store`. The per-node gradients are
    /// returned for inspection.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads, store);
            grads[idx] = Some(g);
        }
        for g in grads.iter().flatten() {
            if !g.is_finite() {
                return Err(Error::NumericFault { op: "backward" });
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>], store: &mut ParamStore) {
        let gd = g.data();
        match &node.op {
            Op::Input => {}
            Op::Param(id) => store.grad_mut(*id).add_assign(g),
            Op::Add(a, b) => {
                accumulate(grads, self, *a, |d| add_into(d, gd));
                accumulate(grads, self, *b, |d| add_into(d, gd));
            }
            Op::Sub(a, b) => {
                accumulate(grads, self, *a, |d| add_into(d, gd));
                accumulate(grads, self, *b, |d| {
                    d.iter_mut().zip(gd).for_each(|(o, g)| *o -= g)
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                accumulate(grads, self, *a, |d| {
                    for ((o, g), y) in d.iter_mut().zip(gd).zip(vb) {
                        *o += g * y;
                    }
                });
                accumulate(grads, self, *b, |d| {
                    for ((o, g), x) in d.iter_mut().zip(gd).zip(va) {
                        *o += g * x;
                    }
                });
            }
            Op::Scale(a, c) => accumulate(grads, self, *a, |d| {
                d.iter_mut().zip(gd).for_each(|(o, g)| *o += c * g)
            }),
            Op::Relu(a) => {
                let x = self.value(*a).data();
                accumulate(grads, self, *a, |d| {
                    for ((o, g), x) in d.iter_mut().zip(gd).zip(x) {
                        if *x > 0.0 {
                            *o += g;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                accumulate(grads, self, *a, |d| {
                    for ((o, g), y) in d.iter_mut().zip(gd).zip(y) {
                        *o += g * y * (1.0 - y);
                    }
                });
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                accumulate(grads, self, *a, |d| {
                    for ((o, g), y) in d.iter_mut().zip(gd).zip(y) {
                        *o += g * (1.0 - y * y);
                    }
                });
            }
            Op::Exp(a) => {
                let y = node.value.data();
                accumulate(grads, self, *a, |d| {
                    for ((o, g), y) in d.iter_mut().zip(gd).zip(y) {
                        *o += g * y;
                    }
                });
            }
            Op::Dense { x, w, b } => {
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                let m = gd.len();
                accumulate(grads, self, *x, |d| {
                    for (i, o) in d.iter_mut().enumerate() {
                        *o += wv[i * m..(i + 1) * m].iter().zip(gd).map(|(w, g)| w * g).sum::<f64>();
                    }
                });
                accumulate(grads, self, *w, |d| {
                    for (i, &xi) in xv.iter().enumerate() {
                        if xi == 0.0 {
                            continue;
                        }
                        for (o, g) in d[i * m..(i + 1) * m].iter_mut().zip(gd) {
                            *o += xi * g;
                        }
                    }
                });
                if let Some(b) = b {
                    accumulate(grads, self, *b, |d| add_into(d, gd));
                }
            }
            Op::Conv2d { x, k, stride, pad } => {
                let xt = self.value(*x);
                let kt = self.value(*k);
                let (h, w, cin) = (xt.shape()[0], xt.shape()[1], xt.shape()[2]);
                let (ks, cout) = (kt.shape()[0], kt.shape()[3]);
                let (oh, ow) = (node.value.shape()[0], node.value.shape()[1]);
                let (xd, kd) = (xt.data(), kt.data());
                let taps = |oy: usize, ox: usize, f: &mut dyn FnMut(usize, usize)| {
                    for ky in 0..ks {
                        let iy = (oy * stride + ky) as isize - *pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..ks {
                            let ix = (ox * stride + kx) as isize - *pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            f((iy as usize * w + ix as usize) * cin, (ky * ks + kx) * cin * cout);
                        }
                    }
                };
                accumulate(grads, self, *x, |d| {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let go = &gd[(oy * ow + ox) * cout..][..cout];
                            taps(oy, ox, &mut |xb, kb| {
                                for ci in 0..cin {
                                    let krow = &kd[kb + ci * cout..][..cout];
                                    d[xb + ci] += krow.iter().zip(go).map(|(k, g)| k * g).sum::<f64>();
                                }
                            });
                        }
                    }
                });
                accumulate(grads, self, *k, |d| {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let go = &gd[(oy * ow + ox) * cout..][..cout];
                            taps(oy, ox, &mut |xb, kb| {
                                for ci in 0..cin {
                                    let xv = xd[xb + ci];
                                    if xv == 0.0 {
                                        continue;
                                    }
                                    for (o, g) in d[kb + ci * cout..][..cout].iter_mut().zip(go) {
                                        *o += xv * g;
                                    }
                                }
                            });
                        }
                    }
                });
            }
            Op::GlobalAvgPool(x) => {
                let c = gd.len();
                let pixels = self.value(*x).len() / c;
                accumulate(grads, self, *x, |d| {
                    for px in d.chunks_exact_mut(c) {
                        for (o, g) in px.iter_mut().zip(gd) {
                            *o += g / pixels as f64;
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                shift,
                normed,
                inv_std,
            } => {
                let gv = self.value(*gain).data();
                let c = gv.len();
                accumulate(grads, self, *shift, |d| {
                    for row in gd.chunks_exact(c) {
                        add_into(d, row);
                    }
                });
                accumulate(grads, self, *gain, |d| {
                    for (row, nrow) in gd.chunks_exact(c).zip(normed.chunks_exact(c)) {
                        for ((o, g), n) in d.iter_mut().zip(row).zip(nrow) {
                            *o += g * n;
                        }
                    }
                });
                let n = normed.len() as f64;
                let gn: Vec<f64> = gd
                    .iter()
                    .enumerate()
                    .map(|(i, g)| g * gv[i % c])
                    .collect();
                let mean_gn = gn.iter().sum::<f64>() / n;
                let mean_gn_n = gn.iter().zip(normed).map(|(a, b)| a * b).sum::<f64>() / n;
                accumulate(grads, self, *x, |d| {
                    for ((o, g), nv) in d.iter_mut().zip(&gn).zip(normed) {
                        *o += inv_std * (g - mean_gn - nv * mean_gn_n);
                    }
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    let seg = &gd[offset..offset + len];
                    accumulate(grads, self, *p, |d| add_into(d, seg));
                    offset += len;
                }
            }
            Op::Slice { x, start } => accumulate(grads, self, *x, |d| {
                add_into(&mut d[*start..*start + gd.len()], gd)
            }),
            Op::Sum(x) => {
                let g0 = gd[0];
                accumulate(grads, self, *x, |d| d.iter_mut().for_each(|o| *o += g0));
            }
            Op::L1Norm(x) => {
                let g0 = gd[0];
                let xv = self.value(*x).data();
                accumulate(grads, self, *x, |d| {
                    for (o, v) in d.iter_mut().zip(xv) {
                        // sign(0) = 0 picks the zero subgradient
                        *o += g0 * if *v > 0.0 { 1.0 } else if *v < 0.0 { -1.0 } else { 0.0 };
                    }
                });
            }
            Op::L2Norm(x) => {
                let norm = node.value.item();
                if norm > 0.0 {
                    let g0 = gd[0] / norm;
                    let xv = self.value(*x).data();
                    accumulate(grads, self, *x, |d| {
                        for (o, v) in d.iter_mut().zip(xv) {
                            *o += g0 * v;
                        }
                    });
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn accumulate(grads: &mut [Option<Tensor>], graph: &Graph, v: Var, f: impl FnOnce(&mut [f64])) {
    let slot = &mut grads[v.0];
    let t = slot.get_or_insert_with(|| Tensor::zeros(graph.value(v).shape()));
    f(t.data_mut());
}
