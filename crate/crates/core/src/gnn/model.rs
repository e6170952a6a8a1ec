use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mat::Mat;
use crate::error::{Error, Result};
use crate::graph::{CanonicalOrder, Graph};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    /// Self term plus mean-of-neighbors term.
    #[default]
    Gcn,
    /// Self term only.
    Mlp,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalize {
    #[default]
    None,
    BatchNorm,
}

/// Graph structure in the form the layers consume.
pub struct GraphCtx {
    canon: CanonicalOrder,
    degree: Vec<usize>,
}

impl GraphCtx {
    pub fn new(g: &Graph) -> Self {
        GraphCtx {
            canon: CanonicalOrder::new(g),
            degree: (0..g.num_nodes()).map(|v| g.degree(v)).collect(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.degree.len()
    }

    /// Node indices in canonical order.
    pub fn order(&self) -> &[usize] {
        &self.canon.order
    }

    /// Row i becomes the mean of the rows of i's neighbors; zero when i is
    /// isolated.
    pub fn mean_neighbors(&self, p: &Mat) -> Mat {
        let mut out = Mat::zeros(p.rows, p.cols);
        for i in 0..p.rows {
            let nbrs = self.canon.neighbors(i);
            if nbrs.is_empty() {
                continue;
            }
            let o = out.row_mut(i);
            for &j in nbrs {
                for (x, &y) in o.iter_mut().zip(p.row(j)) {
                    *x += y;
                }
            }
            let d = nbrs.len() as f64;
            o.iter_mut().for_each(|x| *x /= d);
        }
        out
    }

    /// Adjoint of [`mean_neighbors`](Self::mean_neighbors).
    pub fn mean_neighbors_t(&self, dz: &Mat) -> Mat {
        let mut out = Mat::zeros(dz.rows, dz.cols);
        for j in 0..dz.rows {
            let o = out.row_mut(j);
            for &i in self.canon.neighbors(j) {
                let d = self.degree[i] as f64;
                for (x, &y) in o.iter_mut().zip(dz.row(i)) {
                    *x += y / d;
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn new(dim: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// d_in × d_out, applied to the node's own state.
    pub w1: Mat,
    /// d_in × d_out, applied to the neighbor mean. Absent for MLPs.
    pub w2: Option<Mat>,
    pub bias: Vec<f64>,
    pub bn: Option<BatchNorm>,
}

impl Layer {
    pub fn d_in(&self) -> usize {
        self.w1.rows
    }

    pub fn d_out(&self) -> usize {
        self.w1.cols
    }
}

fn glorot(d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Mat {
    let limit = (6.0 / (d_in + d_out) as f64).sqrt();
    Mat::from_vec(d_in, d_out, (0..d_in * d_out).map(|_| rng.random_range(-limit..limit)).collect())
}

/// ReLU on hidden layers, identity on the output layer, dropout on every
/// layer's input in training mode, optional batchnorm after each hidden
/// layer's affine map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnModel {
    pub backbone: Backbone,
    pub layers: Vec<Layer>,
    pub dropout: f64,
}

pub enum Mode<'a> {
    /// Dropout masks are drawn from the generator and batchnorm uses batch
    /// statistics.
    Train(&'a mut ChaCha8Rng),
    Eval,
}

struct BnCache {
    xhat: Mat,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    from_batch: bool,
}

struct LayerCache {
    input: Mat,
    mask: Option<Vec<f64>>,
    bn: Option<BnCache>,
    /// Pre-activation of hidden layers (after batchnorm).
    pre: Mat,
}

pub struct ForwardPass {
    pub logits: Mat,
    caches: Vec<LayerCache>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub w1: Mat,
    pub w2: Option<Mat>,
    pub bias: Vec<f64>,
    pub gamma: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub layers: Vec<LayerGrads>,
}

impl Grads {
    /// Flattened in the same order as [`GnnModel::params_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.push(&l.w1.data);
            if let Some(w2) = &l.w2 {
                out.push(&w2.data);
            }
            out.push(&l.bias);
            if let (Some(g), Some(b)) = (&l.gamma, &l.beta) {
                out.push(g);
                out.push(b);
            }
        }
        out
    }
}

impl GnnModel {
    /// `dims` is `[d_in, hidden.., num_classes]`; one layer per consecutive pair.
    pub fn new(backbone: Backbone, dims: &[usize], normalize: Normalize, dropout: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer dims {dims:?}")));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidArgument(format!("dropout {dropout} outside [0, 1)")));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| Layer {
                w1: glorot(w[0], w[1], rng),
                w2: (backbone == Backbone::Gcn).then(|| glorot(w[0], w[1], rng)),
                bias: vec![0.0; w[1]],
                bn: (normalize == Normalize::BatchNorm && l < last).then(|| BatchNorm::new(w[1])),
            })
            .collect();
        Ok(GnnModel {
            backbone,
            layers,
            dropout,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].d_in()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().expect("model has layers").d_out()
    }

    /// Replaces the output layer with a freshly initialized one.
    pub fn reinit_head(&mut self, num_classes: usize, rng: &mut ChaCha8Rng) {
        let head = self.layers.last_mut().expect("model has layers");
        let d_in = head.d_in();
        head.w1 = glorot(d_in, num_classes, rng);
        if head.w2.is_some() {
            head.w2 = Some(glorot(d_in, num_classes, rng));
        }
        head.bias = vec![0.0; num_classes];
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.push(&l.w1.data);
            if let Some(w2) = &l.w2 {
                out.push(&w2.data);
            }
            out.push(&l.bias);
            if let Some(bn) = &l.bn {
                out.push(&bn.gamma);
                out.push(&bn.beta);
            }
        }
        out
    }

    /// Trainable tensors: per layer W1, W2 (GCN), bias, then batchnorm scale
    /// and shift when present.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.w1.data);
            if let Some(w2) = &mut l.w2 {
                out.push(&mut w2.data);
            }
            out.push(&mut l.bias);
            if let Some(bn) = &mut l.bn {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out
    }

    /// ½ Σ‖W‖² over the weight matrices; biases and batchnorm are exempt.
    pub fn weight_norm_sq_half(&self) -> f64 {
        0.5 * self
            .layers
            .iter()
            .map(|l| l.w1.sum_squares() + l.w2.as_ref().map_or(0.0, Mat::sum_squares))
            .sum::<f64>()
    }

    pub fn forward(&self, ctx: &GraphCtx, x: &Mat, mut mode: Mode) -> Result<ForwardPass> {
        if x.rows != ctx.num_nodes() {
            return Err(Error::DimensionMismatch(format!("{} feature rows for {} nodes", x.rows, ctx.num_nodes())));
        }
        if x.cols != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "features have {} dims, model expects {}",
                x.cols,
                self.input_dim()
            )));
        }
        let n = x.rows;
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut input = h;
            let mask = match &mut mode {
                Mode::Train(rng) if self.dropout > 0.0 => {
                    let keep = 1.0 / (1.0 - self.dropout);
                    let mut mask = vec![0.0; input.data.len()];
                    for &v in ctx.order() {
                        for m in &mut mask[v * input.cols..(v + 1) * input.cols] {
                            *m = if rng.random::<f64>() >= self.dropout { keep } else { 0.0 };
                        }
                    }
                    input.data.iter_mut().zip(&mask).for_each(|(x, m)| *x *= m);
                    Some(mask)
                }
                _ => None,
            };

            let mut z = input.matmul(&layer.w1);
            if let Some(w2) = &layer.w2 {
                let agg = ctx.mean_neighbors(&input.matmul(w2));
                z.data.iter_mut().zip(&agg.data).for_each(|(a, b)| *a += b);
            }
            for i in 0..n {
                z.row_mut(i).iter_mut().zip(&layer.bias).for_each(|(a, b)| *a += b);
            }

            if l == last {
                caches.push(LayerCache {
                    input,
                    mask,
                    bn: None,
                    pre: Mat::zeros(0, 0),
                });
                h = z;
                break;
            }

            let bn = layer.bn.as_ref().map(|bn| {
                let d = z.cols;
                let (mean, var, from_batch) = match mode {
                    Mode::Train(_) => {
                        let mean: Vec<f64> = z.col_sums_ordered(ctx.order()).into_iter().map(|s| s / n as f64).collect();
                        let mut var = vec![0.0; d];
                        for &v in ctx.order() {
                            for ((acc, &x), &m) in var.iter_mut().zip(z.row(v)).zip(&mean) {
                                *acc += (x - m) * (x - m);
                            }
                        }
                        var.iter_mut().for_each(|s| *s /= n as f64);
                        (mean, var, true)
                    }
                    Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone(), false),
                };
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                let mut xhat = Mat::zeros(n, d);
                for i in 0..n {
                    for j in 0..d {
                        let xh = (z.get(i, j) - mean[j]) * inv_std[j];
                        xhat.set(i, j, xh);
                        z.set(i, j, bn.gamma[j] * xh + bn.beta[j]);
                    }
                }
                BnCache {
                    xhat,
                    inv_std,
                    batch_mean: mean,
                    batch_var: var,
                    from_batch,
                }
            });
            let mut out = z.clone();
            out.data.iter_mut().for_each(|x| *x = x.max(0.0));
            caches.push(LayerCache {
                input,
                mask,
                bn,
                pre: z,
            });
            h = out;
        }
        Ok(ForwardPass { logits: h, caches })
    }

    /// Folds the batch statistics of a training pass into the running ones.
    pub fn update_running_stats(&mut self, pass: &ForwardPass) {
        let n = pass.logits.rows as f64;
        for (layer, cache) in self.layers.iter_mut().zip(&pass.caches) {
            if let (Some(bn), Some(c)) = (&mut layer.bn, &cache.bn) {
                if !c.from_batch {
                    continue;
                }
                for j in 0..bn.running_mean.len() {
                    bn.running_mean[j] = (1.0 - BN_MOMENTUM) * bn.running_mean[j] + BN_MOMENTUM * c.batch_mean[j];
                    let unbiased = if n > 1.0 { c.batch_var[j] * n / (n - 1.0) } else { c.batch_var[j] };
                    bn.running_var[j] = (1.0 - BN_MOMENTUM) * bn.running_var[j] + BN_MOMENTUM * unbiased;
                }
            }
        }
    }

    /// Gradients of a scalar loss given its gradient with respect to the logits.
    pub fn backward(&self, ctx: &GraphCtx, pass: &ForwardPass, dlogits: Mat) -> Grads {
        let order = ctx.order();
        let last = self.layers.len() - 1;
        let mut grads: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        let mut d_out = dlogits;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let cache = &pass.caches[l];
            let mut gamma_grad = None;
            let mut beta_grad = None;
            let dz = if l == last {
                d_out
            } else {
                let mut dpre = d_out;
                dpre.data.iter_mut().zip(&cache.pre.data).for_each(|(g, &p)| {
                    if p <= 0.0 {
                        *g = 0.0;
                    }
                });
                match (&layer.bn, &cache.bn) {
                    (Some(bn), Some(c)) => {
                        let (dz, dg, db) = bn_backward(&dpre, bn, c, order);
                        gamma_grad = Some(dg);
                        beta_grad = Some(db);
                        dz
                    }
                    _ => dpre,
                }
            };
            let bias = dz.col_sums_ordered(order);
            let w1 = cache.input.t_matmul_ordered(&dz, order);
            let dp = layer.w2.as_ref().map(|_| ctx.mean_neighbors_t(&dz));
            let w2 = dp.as_ref().map(|dp| cache.input.t_matmul_ordered(dp, order));
            if l > 0 {
                let mut d_in = dz.matmul_t(&layer.w1);
                if let (Some(dp), Some(w2m)) = (&dp, &layer.w2) {
                    let extra = dp.matmul_t(w2m);
                    d_in.data.iter_mut().zip(&extra.data).for_each(|(a, b)| *a += b);
                }
                if let Some(mask) = &cache.mask {
                    d_in.data.iter_mut().zip(mask).for_each(|(a, m)| *a *= m);
                }
                d_out = d_in;
            } else {
                d_out = Mat::zeros(0, 0);
            }
            grads.push(LayerGrads {
                w1,
                w2,
                bias,
                gamma: gamma_grad,
                beta: beta_grad,
            });
        }
        grads.reverse();
        Grads { layers: grads }
    }
}

fn bn_backward(dy: &Mat, bn: &BatchNorm, c: &BnCache, order: &[usize]) -> (Mat, Vec<f64>, Vec<f64>) {
    let (n, d) = (dy.rows, dy.cols);
    let dbeta = dy.col_sums_ordered(order);
    let mut dgamma = vec![0.0; d];
    for &i in order {
        for ((acc, &g), &xh) in dgamma.iter_mut().zip(dy.row(i)).zip(c.xhat.row(i)) {
            *acc += g * xh;
        }
    }
    let mut dz = Mat::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            let dxhat = dy.get(i, j) * bn.gamma[j];
            let v = if c.from_batch {
                c.inv_std[j] / n as f64
                    * (n as f64 * dxhat - bn.gamma[j] * dbeta[j] - c.xhat.get(i, j) * bn.gamma[j] * dgamma[j])
            } else {
                dxhat * c.inv_std[j]
            };
            dz.set(i, j, v);
        }
    }
    (dz, dgamma, dbeta)
}

/// Mean softmax cross-entropy over `nodes` and its gradient with respect to
/// the logits. `nodes` is visited in canonical order.
pub fn cross_entropy(logits: &Mat, labels: &[usize], nodes: &[bool], order: &[usize]) -> Result<(f64, Mat)> {
    let count = nodes.iter().filter(|&&b| b).count();
    if count == 0 {
        return Err(Error::InvalidArgument("loss mask is empty".into()));
    }
    let c = logits.cols;
    let mut loss = 0.0;
    let mut grad = Mat::zeros(logits.rows, c);
    for &i in order {
        if !nodes[i] {
            continue;
        }
        let y = labels[i];
        if y >= c {
            return Err(Error::LabelOutOfRange {
                node: i,
                label: y,
                num_classes: c,
            });
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        loss += sum.ln() + max - row[y];
        let g = grad.row_mut(i);
        for j in 0..c {
            g[j] = (row[j] - max).exp() / sum / count as f64;
        }
        g[y] -= 1.0 / count as f64;
    }
    Ok((loss / count as f64, grad))
}

/// Forward pass, cross-entropy over `nodes`, L2 penalty and full gradients.
pub fn loss_and_grads(
    model: &GnnModel,
    ctx: &GraphCtx,
    x: &Mat,
    labels: &[usize],
    nodes: &[bool],
    weight_decay: f64,
    mode: Mode,
) -> Result<(f64, Grads, ForwardPass)> {
    let pass = model.forward(ctx, x, mode)?;
    let (ce, dlogits) = cross_entropy(&pass.logits, labels, nodes, ctx.order())?;
    let mut grads = model.backward(ctx, &pass, dlogits);
    if weight_decay != 0.0 {
        for (g, l) in grads.layers.iter_mut().zip(&model.layers) {
            g.w1.data.iter_mut().zip(&l.w1.data).for_each(|(a, w)| *a += weight_decay * w);
            if let (Some(gw2), Some(w2)) = (&mut g.w2, &l.w2) {
                gw2.data.iter_mut().zip(&w2.data).for_each(|(a, w)| *a += weight_decay * w);
            }
        }
    }
    Ok((ce + weight_decay * model.weight_norm_sq_half(), grads, pass))
}

/// Index of the largest logit per row, first one on ties.
pub fn predict(logits: &Mat) -> Vec<usize> {
    (0..logits.rows)
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(pred: &[usize], labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    nodes.iter().filter(|&&v| pred[v] == labels[v]).count() as f64 / nodes.len() as f64
}
