//! Flat-parameter dense layers with hand-written backprop, plus Adam.

use rand::Rng;

use crate::error::{Error, Result};
use crate::io::{Checkpoint, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
}

impl Layout {
    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> usize {
        let offset = self.total;
        self.tensors.push(TensorSpec {
            name: name.into(),
            rows,
            cols,
            offset,
        });
        self.total += rows * cols;
        offset
    }

    pub fn to_checkpoint(&self, kind: &str, params: &[f64]) -> Checkpoint {
        Checkpoint {
            kind: kind.to_string(),
            tensors: self
                .tensors
                .iter()
                .map(|s| Tensor {
                    name: s.name.clone(),
                    rows: s.rows,
                    cols: s.cols,
                    values: params[s.offset..s.offset + s.rows * s.cols]
                        .iter()
                        .map(|&v| v as f32)
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn load_checkpoint(&self, kind: &str, ckpt: &Checkpoint) -> Result<Vec<f64>> {
        if ckpt.kind != kind {
            return Err(Error::format(
                "JDMP",
                format!("expected {kind} model, found {}", ckpt.kind),
            ));
        }
        if ckpt.tensors.len() != self.tensors.len() {
            return Err(Error::format(
                "JDMP",
                "tensor count does not match architecture",
            ));
        }
        let mut params = vec![0.0; self.total];
        for spec in &self.tensors {
            let t = ckpt.tensor(&spec.name)?;
            if (t.rows, t.cols) != (spec.rows, spec.cols) {
                return Err(Error::format(
                    "JDMP",
                    format!("tensor {} has wrong shape", spec.name),
                ));
            }
            for (dst, &v) in params[spec.offset..].iter_mut().zip(&t.values) {
                *dst = v as f64;
            }
        }
        Ok(params)
    }
}

/// `y = W x + b` with `W` stored row-major at `w`, `b` at `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dense {
    pub w: usize,
    pub b: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new(layout: &mut Layout, name: &str, inputs: usize, outputs: usize) -> Self {
        let w = layout.push(format!("{name}.w"), outputs, inputs);
        let b = layout.push(format!("{name}.b"), 1, outputs);
        Self {
            w,
            b,
            inputs,
            outputs,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        let bound = 1.0 / (self.inputs as f64).sqrt();
        for p in &mut params[self.w..self.w + self.inputs * self.outputs] {
            *p = rng.random_range(-bound..bound);
        }
        params[self.b..self.b + self.outputs].fill(0.0);
    }

    pub fn forward(&self, params: &[f64], input: &[f64], out: &mut [f64]) {
        debug_assert_eq!(input.len(), self.inputs);
        for (o, y) in out.iter_mut().enumerate().take(self.outputs) {
            let row = &params[self.w + o * self.inputs..self.w + (o + 1) * self.inputs];
            *y = params[self.b + o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients; adds the input gradient to `dinput` when given.
    pub fn backward(
        &self,
        params: &[f64],
        grad: &mut [f64],
        input: &[f64],
        dout: &[f64],
        mut dinput: Option<&mut [f64]>,
    ) {
        for (o, &g) in dout.iter().enumerate().take(self.outputs) {
            if g == 0.0 {
                continue;
            }
            grad[self.b + o] += g;
            let base = self.w + o * self.inputs;
            for (i, &x) in input.iter().enumerate() {
                grad[base + i] += g * x;
            }
            if let Some(di) = dinput.as_deref_mut() {
                for (i, d) in di.iter_mut().enumerate() {
                    *d += g * params[base + i];
                }
            }
        }
    }
}

/// Tanh hidden layers followed by a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Mlp {
    pub layers: Vec<Dense>,
}

/// Layer activations kept for the backward pass (`acts[0]` is the input).
pub(crate) struct MlpTrace {
    pub acts: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty trace")
    }
}

impl Mlp {
    pub fn new(
        layout: &mut Layout,
        name: &str,
        inputs: usize,
        hidden: usize,
        depth: usize,
        outputs: usize,
    ) -> Self {
        let mut layers = Vec::with_capacity(depth + 1);
        let mut width = inputs;
        for i in 0..depth {
            layers.push(Dense::new(layout, &format!("{name}.{i}"), width, hidden));
            width = hidden;
        }
        layers.push(Dense::new(
            layout,
            &format!("{name}.{depth}"),
            width,
            outputs,
        ));
        Self { layers }
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        for l in &self.layers {
            l.init(params, rng);
        }
    }

    pub fn forward(&self, params: &[f64], input: Vec<f64>) -> MlpTrace {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input);
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; l.outputs];
            l.forward(params, acts.last().unwrap(), &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        MlpTrace { acts }
    }

    /// Returns the gradient with respect to the MLP input.
    pub fn backward(
        &self,
        params: &[f64],
        grad: &mut [f64],
        trace: &MlpTrace,
        dout: &[f64],
    ) -> Vec<f64> {
        let mut delta = dout.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let input = &trace.acts[i];
            let mut dinput = vec![0.0; l.inputs];
            l.backward(params, grad, input, &delta, Some(&mut dinput));
            if i > 0 {
                // input to this layer is tanh output of the previous one
                for (d, &a) in dinput.iter_mut().zip(input) {
                    *d *= 1.0 - a * a;
                }
            }
            delta = dinput;
        }
        delta
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}
