//! Fully connected network with ReLU hidden layers, inverted dropout and one
//! sigmoid output per label, trained on mean element-wise binary
//! cross-entropy.
//!
//! All parameters live in one flat vector; layer `k` stores its weights
//! row-major as `fan_in × fan_out`, followed by its biases.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, FeatureMatrix, LabelMatrix};
use crate::rng;

pub const WEIGHT_DECAY: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Adamw,
    Rmsprop,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden_layers: Vec<usize>,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden_layers: vec![256],
            dropout: 0.2,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 20,
            optimizer: Optimizer::Adamw,
            seed: 0,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.len() > 3 {
            return Err(Error::invalid("at most 3 hidden layers are supported"));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must lie in [0, 1)"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub params: MlpParams,
    /// Layer widths from input to output.
    pub sizes: Vec<usize>,
    #[serde(with = "weights_blob")]
    pub weights: Vec<f64>,
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
}

/// Weights persist as base64 of little-endian IEEE-754 doubles.
mod weights_blob {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(w: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let bytes: Vec<u8> = w.iter().flat_map(|v| v.to_le_bytes()).collect();
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = STANDARD.decode(text).map_err(serde::de::Error::custom)?;
        if bytes.len() % 8 != 0 {
            return Err(serde::de::Error::custom("weight blob length is not a multiple of 8"));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn bce(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Activations kept for the backward pass.
struct Trace {
    /// Post-activation (after dropout) outputs of each hidden layer.
    hidden: Vec<DenseMatrix>,
    /// Dropout masks scaled by `1 / (1 - p)`; empty when dropout is off.
    masks: Vec<Vec<f64>>,
    logits: DenseMatrix,
}

impl Mlp {
    pub fn new(n_inputs: usize, n_outputs: usize, params: &MlpParams) -> Result<Self> {
        params.validate()?;
        let mut sizes = vec![n_inputs];
        sizes.extend(&params.hidden_layers);
        sizes.push(n_outputs);
        let mut r = rng::seeded(rng::derive(params.seed, 0));
        let mut weights = Vec::new();
        for k in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[k], sizes[k + 1]);
            let last = k == sizes.len() - 2;
            // He-uniform before ReLU, Glorot-uniform before the sigmoid
            let bound = if last {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            } else {
                (6.0 / fan_in.max(1) as f64).sqrt()
            };
            weights.extend((0..fan_in * fan_out).map(|_| r.gen_range(-bound..=bound)));
            weights.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self {
            params: params.clone(),
            sizes,
            weights,
            epoch_loss: Vec::new(),
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.len()
    }

    fn offsets(&self, k: usize) -> (usize, usize, usize) {
        let mut o = 0;
        for j in 0..k {
            o += (self.sizes[j] + 1) * self.sizes[j + 1];
        }
        let w_len = self.sizes[k] * self.sizes[k + 1];
        (o, o + w_len, o + w_len + self.sizes[k + 1])
    }

    fn forward(&self, x: &FeatureMatrix, rows: &[usize], dropout: Option<&mut rng::Rng>) -> Trace {
        let n_layers = self.sizes.len() - 1;
        let mut hidden = Vec::with_capacity(n_layers - 1);
        let mut masks = Vec::new();
        let mut dropout = dropout;
        let mut input: Option<DenseMatrix> = None;
        for k in 0..n_layers {
            let (w0, b0, _) = self.offsets(k);
            let out_w = self.sizes[k + 1];
            let w = &self.weights[w0..b0];
            let b = &self.weights[b0..b0 + out_w];
            let mut z = DenseMatrix::zeros(rows.len(), out_w);
            for (bi, &row) in rows.iter().enumerate() {
                let zr = z.row_mut(bi);
                zr.copy_from_slice(b);
                let mut acc = |j: usize, v: f64| {
                    if v != 0.0 {
                        for (o, &wv) in zr.iter_mut().zip(&w[j * out_w..(j + 1) * out_w]) {
                            *o += v * wv;
                        }
                    }
                };
                match &input {
                    None => x.for_each_in_row(row, &mut acc),
                    Some(a) => a.row(bi).iter().enumerate().for_each(|(j, &v)| acc(j, v)),
                }
            }
            if k + 1 == n_layers {
                return Trace { hidden, masks, logits: z };
            }
            for v in z.as_mut_slice() {
                *v = v.max(0.0);
            }
            if let Some(r) = dropout.as_deref_mut() {
                if self.params.dropout > 0.0 {
                    let keep = 1.0 / (1.0 - self.params.dropout);
                    let mask: Vec<f64> = (0..z.as_slice().len())
                        .map(|_| if r.gen::<f64>() < self.params.dropout { 0.0 } else { keep })
                        .collect();
                    for (v, m) in z.as_mut_slice().iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    masks.push(mask);
                }
            }
            hidden.push(z.clone());
            input = Some(z);
        }
        unreachable!("the output layer returns")
    }

    /// Mean BCE over `rows` and its gradient with respect to the flat
    /// parameter vector; dropout is not applied.
    pub fn loss_and_gradient(&self, x: &FeatureMatrix, y: &LabelMatrix, rows: &[usize]) -> (f64, Vec<f64>) {
        let trace = self.forward(x, rows, None);
        self.backward(x, y, rows, &trace)
    }

    fn backward(&self, x: &FeatureMatrix, y: &LabelMatrix, rows: &[usize], trace: &Trace) -> (f64, Vec<f64>) {
        let n_layers = self.sizes.len() - 1;
        let n_out = self.n_outputs();
        let scale = 1.0 / (rows.len() * n_out) as f64;
        let mut grad = vec![0.0; self.weights.len()];
        let mut loss = 0.0;
        let mut delta = DenseMatrix::zeros(rows.len(), n_out);
        for (bi, &row) in rows.iter().enumerate() {
            let yr = y.row(row);
            for l in 0..n_out {
                let z = trace.logits.get(bi, l);
                let t = f64::from(yr[l]);
                loss += bce(z, t);
                delta.set(bi, l, (sigmoid(z) - t) * scale);
            }
        }
        loss *= scale;
        for k in (0..n_layers).rev() {
            let (w0, b0, _) = self.offsets(k);
            let out_w = self.sizes[k + 1];
            let in_w = self.sizes[k];
            {
                let (gw, gb) = grad[w0..b0 + out_w].split_at_mut(b0 - w0);
                for bi in 0..rows.len() {
                    let d = delta.row(bi);
                    for (g, &dv) in gb.iter_mut().zip(d) {
                        *g += dv;
                    }
                    let mut acc = |j: usize, v: f64| {
                        if v != 0.0 {
                            for (g, &dv) in gw[j * out_w..(j + 1) * out_w].iter_mut().zip(d) {
                                *g += v * dv;
                            }
                        }
                    };
                    if k == 0 {
                        x.for_each_in_row(rows[bi], &mut acc);
                    } else {
                        trace.hidden[k - 1].row(bi).iter().enumerate().for_each(|(j, &v)| acc(j, v));
                    }
                }
            }
            if k == 0 {
                break;
            }
            let w = &self.weights[w0..b0];
            let a = &trace.hidden[k - 1];
            let mask = trace.masks.get(k - 1);
            let mut prev = DenseMatrix::zeros(rows.len(), in_w);
            for bi in 0..rows.len() {
                let d = delta.row(bi);
                let pr = prev.row_mut(bi);
                for j in 0..in_w {
                    // ReLU passes gradient only where the unit fired
                    if a.get(bi, j) <= 0.0 {
                        continue;
                    }
                    let s: f64 = w[j * out_w..(j + 1) * out_w].iter().zip(d).map(|(wv, dv)| wv * dv).sum();
                    pr[j] = match mask {
                        Some(m) => s * m[bi * in_w + j],
                        None => s,
                    };
                }
            }
            delta = prev;
        }
        (loss, grad)
    }

    pub fn predict_scores(&self, x: &FeatureMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(x.rows(), self.n_outputs());
        let chunk = 256;
        let mut start = 0;
        while start < x.rows() {
            let rows: Vec<usize> = (start..(start + chunk).min(x.rows())).collect();
            let t = self.forward(x, &rows, None);
            for (bi, &row) in rows.iter().enumerate() {
                for (o, &z) in out.row_mut(row).iter_mut().zip(t.logits.row(bi)) {
                    *o = sigmoid(z);
                }
            }
            start += chunk;
        }
        out
    }
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptimizerState {
    fn new(kind: Optimizer, lr: f64, n: usize) -> Self {
        let moments = if kind == Optimizer::Sgd { 0 } else { n };
        Self {
            kind,
            lr,
            m: vec![0.0; if kind == Optimizer::Adamw { n } else { 0 }],
            v: vec![0.0; moments],
            t: 0,
        }
    }

    fn step(&mut self, w: &mut [f64], g: &[f64]) {
        self.t += 1;
        let lr = self.lr;
        match self.kind {
            Optimizer::Sgd => {
                for (wi, gi) in w.iter_mut().zip(g) {
                    *wi -= lr * gi;
                }
            }
            Optimizer::Rmsprop => {
                const RHO: f64 = 0.99;
                for ((wi, gi), vi) in w.iter_mut().zip(g).zip(self.v.iter_mut()) {
                    *vi = RHO * *vi + (1.0 - RHO) * gi * gi;
                    *wi -= lr * gi / (vi.sqrt() + 1e-8);
                }
            }
            Optimizer::Adamw => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                let c1 = 1.0 - B1.powi(self.t);
                let c2 = 1.0 - B2.powi(self.t);
                for (((wi, gi), mi), vi) in w.iter_mut().zip(g).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
                    *wi -= lr * WEIGHT_DECAY * *wi;
                    *mi = B1 * *mi + (1.0 - B1) * gi;
                    *vi = B2 * *vi + (1.0 - B2) * gi * gi;
                    *wi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + 1e-8);
                }
            }
        }
    }
}

pub fn fit_mlp(x: &FeatureMatrix, y: &LabelMatrix, params: &MlpParams) -> Result<Mlp> {
    if x.rows() != y.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            actual: y.rows(),
        });
    }
    if x.rows() == 0 {
        return Err(Error::invalid("cannot fit an MLP on zero rows"));
    }
    if !x.all_finite() {
        return Err(Error::invalid("feature matrix contains non-finite values"));
    }
    let mut net = Mlp::new(x.cols(), y.cols(), params)?;
    let mut shuffle = rng::seeded(rng::derive(params.seed, 1));
    let mut drop = rng::seeded(rng::derive(params.seed, 2));
    let mut opt = OptimizerState::new(params.optimizer, params.learning_rate, net.weights.len());
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut batch_index = 0;
    for _ in 0..params.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for batch in order.chunks(params.batch_size) {
            let trace = net.forward(x, batch, Some(&mut drop));
            let (loss, grad) = net.backward(x, y, batch, &trace);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { batch: batch_index });
            }
            total += loss * batch.len() as f64;
            opt.step(&mut net.weights, &grad);
            batch_index += 1;
        }
        net.epoch_loss.push(total / x.rows() as f64);
    }
    Ok(net)
}
