//! Tuned training configurations per dataset and protocol. Dataset names
//! are matched case-insensitively.

use super::{Normalize, TrainConfig};
use crate::graph::TextRegime;

fn cfg(hidden_dim: usize, num_layers: usize, normalize: Normalize, learning_rate: f64, weight_decay: f64, dropout: f64) -> TrainConfig {
    TrainConfig {
        hidden_dim,
        num_layers,
        normalize,
        learning_rate,
        weight_decay,
        dropout,
        ..Default::default()
    }
}

use Normalize::{BatchNorm as Batch, None as Plain};

/// Training from scratch.
pub fn basic(dataset: &str, regime: TextRegime) -> Option<TrainConfig> {
    use TextRegime::*;
    Some(match (dataset.to_ascii_lowercase().as_str(), regime) {
        ("cora", TextRich) => cfg(128, 2, Plain, 1e-3, 1e-4, 0.8),
        ("pubmed", TextRich) => cfg(256, 2, Plain, 5e-3, 5e-4, 0.1),
        ("cora", TextLimited) => cfg(256, 3, Plain, 1e-3, 5e-5, 0.8),
        ("pubmed", TextLimited) => cfg(128, 2, Plain, 1e-3, 5e-5, 0.5),
        ("usa", TextFree) => cfg(128, 3, Plain, 5e-2, 1e-4, 0.1),
        ("brazil", TextFree) => cfg(8, 3, Plain, 5e-3, 1e-4, 0.5),
        ("europe", TextFree) => cfg(256, 2, Plain, 1e-3, 5e-5, 0.5),
        _ => return None,
    })
}

/// Source-trained, target-selected transfer between the airport graphs.
pub fn domain_adaptation(source: &str, target: &str) -> Option<TrainConfig> {
    Some(
        match (source.to_ascii_lowercase().as_str(), target.to_ascii_lowercase().as_str()) {
            ("usa", "brazil") => cfg(64, 3, Plain, 1e-2, 5e-5, 0.0),
            ("usa", "europe") => cfg(64, 2, Batch, 5e-3, 1e-4, 0.5),
            ("brazil", "usa") => cfg(8, 3, Batch, 1e-2, 0.0, 0.5),
            ("brazil", "europe") => cfg(16, 3, Plain, 5e-2, 1e-4, 0.0),
            ("europe", "usa") => cfg(16, 2, Batch, 5e-3, 1e-4, 0.5),
            ("europe", "brazil") => cfg(32, 2, Batch, 5e-3, 0.0, 0.8),
            _ => return None,
        },
    )
}

/// Finetuning after source pretraining.
pub fn pretrain_finetune(source: &str, target: &str, regime: TextRegime) -> Option<TrainConfig> {
    use TextRegime::*;
    let pair = (source.to_ascii_lowercase(), target.to_ascii_lowercase());
    Some(match (pair.0.as_str(), pair.1.as_str(), regime) {
        ("cora", "pubmed", TextRich) => cfg(64, 2, Plain, 5e-2, 1e-4, 0.5),
        ("pubmed", "cora", TextRich) => cfg(32, 2, Plain, 1e-2, 1e-4, 0.1),
        ("cora", "pubmed", TextLimited) => cfg(32, 2, Plain, 5e-3, 0.0, 0.5),
        ("pubmed", "cora", TextLimited) => cfg(32, 2, Plain, 5e-3, 0.0, 0.1),
        _ => return None,
    })
}
