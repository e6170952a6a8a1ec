//! Full-batch node classification with a message-passing network written
//! from scratch.
//!
//! Each layer computes `z_i = σ(z_i W1 + mean_{j∈N(i)} z_j W2 + b)`; the MLP
//! backbone is the same layer without the neighbor term. Gradients are
//! derived by hand and checked against finite differences in the tests.
//! Every floating-point sum over nodes runs in [`CanonicalOrder`], so
//! relabeling a graph and its features leaves accuracies bit-identical.
//!
//! [`CanonicalOrder`]: crate::graph::CanonicalOrder

mod checkpoint;
pub mod mat;
mod model;
mod optim;
pub mod presets;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use mat::Mat;
pub use model::{
    accuracy, cross_entropy, loss_and_grads, predict, Backbone, BatchNorm, ForwardPass, GnnModel, GraphCtx, Grads, Layer,
    LayerGrads, Mode, Normalize,
};
pub use optim::Adam;
pub use train::{
    evaluate_seeds, run_domain_adaptation, run_pretrain_finetune, train, TrainOutcome, TransferOutcome,
    PRETRAIN_EPOCHS, PRETRAIN_LR,
};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub backbone: Backbone,
    pub hidden_dim: usize,
    /// Number of message-passing layers, output layer included.
    pub num_layers: usize,
    pub normalize: Normalize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            backbone: Backbone::Gcn,
            hidden_dim: 64,
            num_layers: 2,
            normalize: Normalize::None,
            learning_rate: 1e-2,
            weight_decay: 5e-4,
            dropout: 0.5,
            max_epochs: 1000,
            patience: 100,
            seed: 0,
        }
    }
}

pub const SEARCH_HIDDEN: [usize; 6] = [8, 16, 32, 64, 128, 256];
pub const SEARCH_LAYERS: [usize; 3] = [1, 2, 3];
pub const SEARCH_LR: [f64; 4] = [5e-2, 1e-2, 5e-3, 1e-3];
pub const SEARCH_WEIGHT_DECAY: [f64; 4] = [0.0, 5e-5, 1e-4, 5e-4];
pub const SEARCH_DROPOUT: [f64; 4] = [0.0, 0.1, 0.5, 0.8];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.num_layers == 0 || self.hidden_dim == 0 {
            return bad("num_layers and hidden_dim must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight decay {} must be non-negative", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive".into());
        }
        Ok(())
    }

    /// Whether every tuned value is one of the grid values searched over.
    pub fn in_search_space(&self) -> bool {
        SEARCH_HIDDEN.contains(&self.hidden_dim)
            && SEARCH_LAYERS.contains(&self.num_layers)
            && SEARCH_LR.contains(&self.learning_rate)
            && SEARCH_WEIGHT_DECAY.contains(&self.weight_decay)
            && SEARCH_DROPOUT.contains(&self.dropout)
    }

    /// `[d_in, hidden.., num_classes]`.
    pub fn layer_dims(&self, d_in: usize, num_classes: usize) -> Vec<usize> {
        let mut dims = vec![d_in];
        dims.extend(std::iter::repeat_n(self.hidden_dim, self.num_layers - 1));
        dims.push(num_classes);
        dims
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig { seed, ..self.clone() }
    }
}

/// Accuracies over a seed list. `std` is the population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl Metrics {
    pub fn from_runs(seeds: Vec<u64>, accuracies: Vec<f64>) -> Result<Self> {
        if accuracies.is_empty() || seeds.len() != accuracies.len() {
            return Err(Error::InvalidArgument(format!(
                "{} seeds for {} accuracies",
                seeds.len(),
                accuracies.len()
            )));
        }
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let std = (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        Ok(Metrics {
            accuracy: mean,
            seeds,
            accuracies,
            mean,
            std,
        })
    }

    /// Percentages to two decimals, e.g. `71.82 ± 12.28`.
    pub fn summary(&self) -> String {
        format!("{:.2} ± {:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub protocol: String,
    pub dataset: String,
    pub backbone: Backbone,
    pub feature_kind: String,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl MetricsReport {
    pub fn new(protocol: &str, dataset: &str, backbone: Backbone, feature_kind: &str, m: &Metrics) -> Self {
        MetricsReport {
            protocol: protocol.into(),
            dataset: dataset.into(),
            backbone,
            feature_kind: feature_kind.into(),
            seeds: m.seeds.clone(),
            accuracies: m.accuracies.clone(),
            mean: m.mean,
            std: m.std,
        }
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            accuracy: self.mean,
            seeds: self.seeds.clone(),
            accuracies: self.accuracies.clone(),
            mean: self.mean,
            std: self.std,
        }
    }
}
