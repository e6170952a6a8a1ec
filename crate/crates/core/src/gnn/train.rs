use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mat::Mat;
use super::model::{accuracy, loss_and_grads, predict, GnnModel, GraphCtx, Mode};
use super::optim::Adam;
use super::{Metrics, TrainConfig};
use crate::encoder::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::par::{self, Execution};
use crate::split::SplitSpec;

/// Source pretraining budget for pretrain-then-finetune transfer.
pub const PRETRAIN_EPOCHS: usize = 100;
pub const PRETRAIN_LR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Weights at the epoch with the best validation accuracy.
    pub model: GnnModel,
    /// Test accuracy of `model`.
    pub accuracy: f64,
    pub best_val: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub optimizer_steps: u64,
}

#[derive(Clone, Debug)]
pub struct TransferOutcome {
    pub finetune: TrainOutcome,
    pub head_reinitialized: bool,
    pub pretrain_steps: u64,
}

struct Data<'a> {
    ctx: GraphCtx,
    x: Mat,
    labels: &'a [usize],
}

impl<'a> Data<'a> {
    fn new(g: &'a Graph, x: &EmbeddingMatrix) -> Result<Self> {
        if x.rows != g.num_nodes() {
            return Err(Error::DimensionMismatch(format!("{} feature rows for {} nodes", x.rows, g.num_nodes())));
        }
        Ok(Data {
            ctx: GraphCtx::new(g),
            x: Mat::from_vec(x.rows, x.dim, x.data.clone()),
            labels: g.labels().ok_or(Error::Unlabeled)?,
        })
    }

    fn accuracy(&self, model: &GnnModel, nodes: &[usize]) -> Result<f64> {
        let logits = model.forward(&self.ctx, &self.x, Mode::Eval)?.logits;
        Ok(accuracy(&predict(&logits), self.labels, nodes))
    }
}

/// Where checkpoints are selected. May be a different graph from the one
/// being trained on.
struct Selection<'a, 'b> {
    data: &'b Data<'a>,
    val: &'b [usize],
    test: &'b [usize],
    patience: usize,
}

struct Fit {
    model: GnnModel,
    best_val: f64,
    test: f64,
    best_epoch: usize,
    epochs_run: usize,
    steps: u64,
}

#[allow(clippy::too_many_arguments)]
fn fit(
    mut model: GnnModel,
    data: &Data,
    mask: &[bool],
    lr: f64,
    weight_decay: f64,
    epochs: usize,
    selection: Option<Selection>,
    rng: &mut ChaCha8Rng,
) -> Result<Fit> {
    let mut opt = Adam::new(lr);
    let mut best: Option<(GnnModel, f64, f64, usize)> = None;
    let mut epochs_run = 0;
    for epoch in 0..epochs {
        let (loss, grads, pass) = loss_and_grads(&model, &data.ctx, &data.x, data.labels, mask, weight_decay, Mode::Train(rng))?;
        if !loss.is_finite() {
            log::warn!("non-finite training loss at epoch {epoch}");
        }
        model.update_running_stats(&pass);
        opt.step(model.params_mut(), grads.tensors());
        epochs_run = epoch + 1;

        let Some(sel) = &selection else { continue };
        let val = sel.data.accuracy(&model, sel.val)?;
        match &best {
            Some((_, best_val, _, best_epoch)) if val <= *best_val => {
                if epoch - best_epoch >= sel.patience {
                    break;
                }
            }
            _ => {
                let test = sel.data.accuracy(&model, sel.test)?;
                best = Some((model.clone(), val, test, epoch));
            }
        }
    }
    let steps = opt.steps();
    Ok(match best {
        Some((model, best_val, test, best_epoch)) => Fit {
            model,
            best_val,
            test,
            best_epoch,
            epochs_run,
            steps,
        },
        None => Fit {
            model,
            best_val: f64::NAN,
            test: f64::NAN,
            best_epoch: epochs_run.saturating_sub(1),
            epochs_run,
            steps,
        },
    })
}

fn node_mask(n: usize, nodes: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; n];
    nodes.iter().for_each(|&v| mask[v] = true);
    mask
}

fn outcome(f: Fit) -> TrainOutcome {
    TrainOutcome {
        model: f.model,
        accuracy: f.test,
        best_val: f.best_val,
        best_epoch: f.best_epoch,
        epochs_run: f.epochs_run,
        optimizer_steps: f.steps,
    }
}

/// Trains on `split.train` with early stopping on validation accuracy and
/// reports the test accuracy of the best-validation checkpoint. Ties keep
/// the earliest epoch.
pub fn train(g: &Graph, x: &EmbeddingMatrix, split: &SplitSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = GnnModel::new(
        cfg.backbone,
        &cfg.layer_dims(x.dim, g.num_classes()),
        cfg.normalize,
        cfg.dropout,
        &mut rng,
    )?;
    train_from(model, g, x, split, cfg, &mut rng)
}

fn train_from(
    model: GnnModel,
    g: &Graph,
    x: &EmbeddingMatrix,
    split: &SplitSpec,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    split.validate(g.num_nodes())?;
    if split.train.is_empty() {
        return Err(Error::InvalidArgument("empty train set".into()));
    }
    let data = Data::new(g, x)?;
    let selection = Selection {
        data: &data,
        val: &split.val,
        test: &split.test,
        patience: cfg.patience,
    };
    let mask = node_mask(g.num_nodes(), &split.train);
    let f = fit(model, &data, &mask, cfg.learning_rate, cfg.weight_decay, cfg.max_epochs, Some(selection), rng)?;
    Ok(outcome(f))
}

/// Runs `run(seed)` for every seed, in parallel when `exec` allows, and
/// aggregates the accuracies in seed-list order.
pub fn evaluate_seeds<F>(seeds: &[u64], exec: Execution, run: F) -> Result<Metrics>
where
    F: Fn(u64) -> Result<f64> + Sync + Send,
{
    let results = par::map_range(seeds.len(), exec, |i| run(seeds[i]));
    let accuracies = results.into_iter().collect::<Result<Vec<f64>>>()?;
    Metrics::from_runs(seeds.to_vec(), accuracies)
}

fn check_aligned(src: &EmbeddingMatrix, tgt: &EmbeddingMatrix) -> Result<()> {
    if src.dim != tgt.dim {
        return Err(Error::FeatureSpacesNotAligned {
            source_dim: src.dim,
            target_dim: tgt.dim,
        });
    }
    Ok(())
}

/// Pretrains on every labeled source node for [`PRETRAIN_EPOCHS`] epochs
/// at [`PRETRAIN_LR`], then finetunes on the target split with `cfg`. The
/// output layer is reinitialized when the class counts differ.
pub fn run_pretrain_finetune(
    src: &Graph,
    x_src: &EmbeddingMatrix,
    tgt: &Graph,
    x_tgt: &EmbeddingMatrix,
    split_tgt: &SplitSpec,
    cfg: &TrainConfig,
) -> Result<TransferOutcome> {
    check_aligned(x_src, x_tgt)?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = GnnModel::new(
        cfg.backbone,
        &cfg.layer_dims(x_src.dim, src.num_classes()),
        cfg.normalize,
        cfg.dropout,
        &mut rng,
    )?;
    let data = Data::new(src, x_src)?;
    let pre = fit(
        model,
        &data,
        &vec![true; src.num_nodes()],
        PRETRAIN_LR,
        cfg.weight_decay,
        PRETRAIN_EPOCHS,
        None,
        &mut rng,
    )?;
    let mut model = pre.model;
    let head_reinitialized = model.num_classes() != tgt.num_classes();
    if head_reinitialized {
        model.reinit_head(tgt.num_classes(), &mut rng);
    }
    let finetune = train_from(model, tgt, x_tgt, split_tgt, cfg, &mut rng)?;
    Ok(TransferOutcome {
        finetune,
        head_reinitialized,
        pretrain_steps: pre.steps,
    })
}

/// Trains on every labeled source node, selects the checkpoint by target
/// validation accuracy and reports target test accuracy. Batchnorm runs
/// with frozen source statistics on the target. The target graph is only
/// ever evaluated, so every optimizer step comes from the source loss.
pub fn run_domain_adaptation(
    src: &Graph,
    x_src: &EmbeddingMatrix,
    tgt: &Graph,
    x_tgt: &EmbeddingMatrix,
    split_tgt: &SplitSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    check_aligned(x_src, x_tgt)?;
    if src.meta.class_names != tgt.meta.class_names || src.num_classes() != tgt.num_classes() {
        return Err(Error::LabelSpaceMismatch {
            source_classes: src.meta.class_names.clone(),
            target_classes: tgt.meta.class_names.clone(),
        });
    }
    cfg.validate()?;
    split_tgt.validate(tgt.num_nodes())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = GnnModel::new(
        cfg.backbone,
        &cfg.layer_dims(x_src.dim, src.num_classes()),
        cfg.normalize,
        cfg.dropout,
        &mut rng,
    )?;
    let source = Data::new(src, x_src)?;
    let target = Data::new(tgt, x_tgt)?;
    let selection = Selection {
        data: &target,
        val: &split_tgt.val,
        test: &split_tgt.test,
        patience: cfg.patience,
    };
    let f = fit(
        model,
        &source,
        &vec![true; src.num_nodes()],
        cfg.learning_rate,
        cfg.weight_decay,
        cfg.max_epochs,
        Some(selection),
        &mut rng,
    )?;
    Ok(outcome(f))
}
