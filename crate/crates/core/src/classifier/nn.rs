//! Minimal dense layers with hand-written backpropagation, sized for
//! desk-scale training on CPU.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Sparse input vector with sorted, unique indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn from_dense(values: &[f64]) -> Self {
        Self {
            indices: (0..values.len() as u32).collect(),
            values: values.to_vec(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

/// Affine map `y = W x + b` with `W` stored input-major: the weights
/// feeding from input `i` are contiguous, which suits sparse inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform weights in `[-limit, limit]`, zero bias.
    pub fn uniform<R: Rng>(inputs: usize, outputs: usize, limit: f64, rng: &mut R) -> Self {
        let mut layer = Self::zeros(inputs, outputs);
        for w in &mut layer.weights {
            *w = rng.gen_range(-limit..=limit);
        }
        layer
    }

    /// Glorot/Xavier uniform initialisation.
    pub fn xavier<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        Self::uniform(inputs, outputs, limit, rng)
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn column(&self, i: usize) -> &[f64] {
        &self.weights[i * self.outputs..(i + 1) * self.outputs]
    }

    pub fn forward_sparse(&self, x: &SparseVec) -> Vec<f64> {
        let mut y = self.bias.clone();
        for (i, v) in x.iter() {
            for (yo, w) in y.iter_mut().zip(self.column(i)) {
                *yo += w * v;
            }
        }
        y
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        let mut y = self.bias.clone();
        for (i, &v) in x.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for (yo, w) in y.iter_mut().zip(self.column(i)) {
                *yo += w * v;
            }
        }
        y
    }

    /// `W^T dy`: gradient with respect to the layer input.
    pub fn backward_input(&self, dy: &[f64]) -> Vec<f64> {
        (0..self.inputs)
            .map(|i| self.column(i).iter().zip(dy).map(|(w, d)| w * d).sum())
            .collect()
    }
}

/// Accumulated gradients for one [`Dense`] layer.
#[derive(Debug, Clone)]
pub struct DenseGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    outputs: usize,
}

impl DenseGrad {
    pub fn for_layer(layer: &Dense) -> Self {
        Self {
            weights: vec![0.0; layer.weights.len()],
            bias: vec![0.0; layer.bias.len()],
            outputs: layer.outputs,
        }
    }

    pub fn clear(&mut self) {
        self.weights.iter_mut().for_each(|g| *g = 0.0);
        self.bias.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn accumulate(&mut self, x: &[f64], dy: &[f64]) {
        for (i, &v) in x.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let col = &mut self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (g, d) in col.iter_mut().zip(dy) {
                *g += v * d;
            }
        }
        for (g, d) in self.bias.iter_mut().zip(dy) {
            *g += d;
        }
    }

    pub fn accumulate_sparse(&mut self, x: &SparseVec, dy: &[f64]) {
        for (i, v) in x.iter() {
            let col = &mut self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (g, d) in col.iter_mut().zip(dy) {
                *g += v * d;
            }
        }
        for (g, d) in self.bias.iter_mut().zip(dy) {
            *g += d;
        }
    }
}

/// Bottleneck adapter: `h + up(relu(down(h)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adapter {
    pub down: Dense,
    pub up: Dense,
}

impl Adapter {
    /// Down projection is random, up projection starts at zero so a fresh
    /// adapter is the identity.
    pub fn new<R: Rng>(dim: usize, bottleneck: usize, rng: &mut R) -> Self {
        Self {
            down: Dense::xavier(dim, bottleneck, rng),
            up: Dense::zeros(bottleneck, dim),
        }
    }

    pub fn param_count(&self) -> usize {
        self.down.param_count() + self.up.param_count()
    }

    pub fn forward(&self, h: &[f64]) -> Vec<f64> {
        let hidden = relu(self.down.forward(h));
        let delta = self.up.forward(&hidden);
        h.iter().zip(delta).map(|(a, b)| a + b).collect()
    }
}

pub fn relu(mut v: Vec<f64>) -> Vec<f64> {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    v
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// An encoder projection (optional), adapter (optional) and output head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tower {
    pub encoder: Option<Dense>,
    pub adapter: Option<Adapter>,
    pub head: Dense,
}

struct Activations {
    hidden: Vec<f64>,
    bottleneck_pre: Vec<f64>,
    adapted: Vec<f64>,
    logits: Vec<f64>,
}

pub struct TowerGrad {
    encoder: Option<DenseGrad>,
    down: Option<DenseGrad>,
    up: Option<DenseGrad>,
    head: DenseGrad,
}

impl TowerGrad {
    pub fn clear(&mut self) {
        for g in [&mut self.encoder, &mut self.down, &mut self.up]
            .into_iter()
            .flatten()
        {
            g.clear();
        }
        self.head.clear();
    }
}

impl Tower {
    pub fn param_count(&self) -> usize {
        self.encoder.as_ref().map_or(0, Dense::param_count)
            + self.adapter.as_ref().map_or(0, Adapter::param_count)
            + self.head.param_count()
    }

    pub fn grad(&self) -> TowerGrad {
        TowerGrad {
            encoder: self.encoder.as_ref().map(DenseGrad::for_layer),
            down: self.adapter.as_ref().map(|a| DenseGrad::for_layer(&a.down)),
            up: self.adapter.as_ref().map(|a| DenseGrad::for_layer(&a.up)),
            head: DenseGrad::for_layer(&self.head),
        }
    }

    fn activations(&self, x: &SparseVec) -> Activations {
        let hidden = match &self.encoder {
            Some(enc) => enc.forward_sparse(x),
            None => x.to_dense(
                self.adapter
                    .as_ref()
                    .map_or(self.head.inputs, |a| a.down.inputs),
            ),
        };
        let (bottleneck_pre, adapted) = match &self.adapter {
            Some(a) => {
                let pre = a.down.forward(&hidden);
                let delta = a.up.forward(&relu(pre.clone()));
                let adapted = hidden.iter().zip(delta).map(|(h, d)| h + d).collect();
                (pre, adapted)
            }
            None => (Vec::new(), hidden.clone()),
        };
        let logits = self.head.forward(&adapted);
        Activations {
            hidden,
            bottleneck_pre,
            adapted,
            logits,
        }
    }

    pub fn logits(&self, x: &SparseVec) -> Vec<f64> {
        self.activations(x).logits
    }

    /// Forward and backward pass for one example under softmax
    /// cross-entropy. Returns the loss.
    pub fn accumulate(&self, x: &SparseVec, label: usize, grad: &mut TowerGrad) -> f64 {
        let act = self.activations(x);
        let mut dz = softmax(&act.logits);
        let loss = -dz[label].max(f64::MIN_POSITIVE).ln();
        dz[label] -= 1.0;

        grad.head.accumulate(&act.adapted, &dz);
        let da = self.head.backward_input(&dz);

        let dh = match &self.adapter {
            Some(a) => {
                let r = relu(act.bottleneck_pre.clone());
                grad.up.as_mut().expect("adapter grad").accumulate(&r, &da);
                let dr = a.up.backward_input(&da);
                let dpre: Vec<f64> = dr
                    .iter()
                    .zip(&act.bottleneck_pre)
                    .map(|(d, p)| if *p > 0.0 { *d } else { 0.0 })
                    .collect();
                grad.down
                    .as_mut()
                    .expect("adapter grad")
                    .accumulate(&act.hidden, &dpre);
                if self.encoder.is_some() {
                    let back = a.down.backward_input(&dpre);
                    da.iter().zip(back).map(|(x, y)| x + y).collect()
                } else {
                    Vec::new()
                }
            }
            None => da,
        };
        if let Some(g) = grad.encoder.as_mut() {
            g.accumulate_sparse(x, &dh);
        }
        loss
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense> {
        let mut out = Vec::with_capacity(4);
        if let Some(e) = self.encoder.as_mut() {
            out.push(e);
        }
        if let Some(a) = self.adapter.as_mut() {
            out.push(&mut a.down);
            out.push(&mut a.up);
        }
        out.push(&mut self.head);
        out
    }
}

fn grads(grad: &TowerGrad) -> Vec<&DenseGrad> {
    let mut out = Vec::with_capacity(4);
    if let Some(e) = grad.encoder.as_ref() {
        out.push(e);
    }
    if let (Some(d), Some(u)) = (grad.down.as_ref(), grad.up.as_ref()) {
        out.push(d);
        out.push(u);
    }
    out.push(&grad.head);
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Applies averaged batch gradients to a tower.
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    step: i32,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, tower: &Tower) -> Self {
        let moments = match kind {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::Adam { .. } => {
                let mut t = tower.clone();
                t.layers_mut()
                    .into_iter()
                    .flat_map(|l| {
                        [
                            (vec![0.0; l.weights.len()], vec![0.0; l.weights.len()]),
                            (vec![0.0; l.bias.len()], vec![0.0; l.bias.len()]),
                        ]
                    })
                    .collect()
            }
        };
        Self {
            kind,
            learning_rate,
            step: 0,
            moments,
        }
    }

    pub fn apply(&mut self, tower: &mut Tower, grad: &TowerGrad, batch_len: usize) {
        self.step += 1;
        let scale = 1.0 / batch_len as f64;
        let lr = self.learning_rate;
        let step = self.step;
        let kind = self.kind;
        let pairs = tower.layers_mut().into_iter().zip(grads(grad));
        let mut slot = 0;
        for (layer, g) in pairs {
            for (params, grads) in [(&mut layer.weights, &g.weights), (&mut layer.bias, &g.bias)] {
                match kind {
                    OptimizerKind::Sgd => {
                        for (p, g) in params.iter_mut().zip(grads) {
                            *p -= lr * g * scale;
                        }
                    }
                    OptimizerKind::Adam {
                        beta1,
                        beta2,
                        epsilon,
                    } => {
                        let (m, v) = &mut self.moments[slot];
                        let c1 = 1.0 - beta1.powi(step);
                        let c2 = 1.0 - beta2.powi(step);
                        for i in 0..params.len() {
                            let g = grads[i] * scale;
                            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                            params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + epsilon);
                        }
                    }
                }
                slot += 1;
            }
        }
    }
}
