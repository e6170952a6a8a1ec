mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tans_core::encoder::{EmbeddingMatrix, FeatureSource};
use tans_core::features::degree_onehot;
use tans_core::gnn::{
    self, run_domain_adaptation, run_pretrain_finetune, train, Backbone, GnnModel, GraphCtx, Layer, Mat, Mode,
    Normalize, TrainConfig,
};
use tans_core::split::{make_da_split, make_low_label_split, SplitProtocol, SplitSpec};
use tans_core::{Error, Execution, Graph, GraphMeta};

fn labeled_gnp(n: usize, p: f64, classes: usize, seed: u64) -> Graph {
    let mut g = common::gnp(n, p, seed);
    g.meta.class_names = (0..classes).map(|c| format!("c{c}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    g.set_labels((0..n).map(|_| rng.random_range(0..classes)).collect()).unwrap();
    g
}

fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.rows).map(|i| m.row(i).to_vec()).collect()
}

fn features(m: &Mat) -> EmbeddingMatrix {
    EmbeddingMatrix::from_rows(to_rows(m), m.cols, FeatureSource::Baseline, "test").unwrap()
}

#[test]
fn layer_matches_loop_oracle() {
    for seed in 0..5 {
        let g = common::gnp(12, 0.25, seed);
        let x = random_mat(12, 5, seed + 10);
        let (w1, w2) = (random_mat(5, 3, seed + 20), random_mat(5, 3, seed + 30));
        let b = vec![0.1, -0.2, 0.3];
        let model = GnnModel {
            backbone: Backbone::Gcn,
            layers: vec![Layer {
                w1: w1.clone(),
                w2: Some(w2.clone()),
                bias: b.clone(),
                bn: None,
            }],
            dropout: 0.0,
        };
        let got = model.forward(&GraphCtx::new(&g), &x, Mode::Eval).unwrap().logits;
        let want = common::layer_oracle(&g, &to_rows(&x), &to_rows(&w1), &to_rows(&w2), &b);
        for i in 0..12 {
            for o in 0..3 {
                assert!((got.get(i, o) - want[i][o]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let g = labeled_gnp(12, 0.3, 3, 7);
    let x = random_mat(12, 4, 1);
    let mut nodes = vec![true; 12];
    nodes[3] = false;
    nodes[8] = false;
    for backbone in [Backbone::Gcn, Backbone::Mlp] {
        for (normalize, dropout) in [(Normalize::None, 0.0), (Normalize::None, 0.3), (Normalize::BatchNorm, 0.0)] {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let model = GnnModel::new(backbone, &[4, 6, 3], normalize, dropout, &mut rng).unwrap();
            let err = common::gradient_check(&model, &g, &x, &nodes, 1e-3, 11, 1e-4);
            assert!(err < 1e-5, "{backbone:?} {normalize:?} dropout {dropout}: rel err {err:e}");
        }
    }
}

fn two_class_toy() -> (Graph, EmbeddingMatrix, SplitSpec) {
    // Two 6-cliques joined by one edge; features separate the halves.
    let mut edges = vec![];
    for base in [0, 6] {
        for i in 0..6 {
            for j in i + 1..6 {
                edges.push((base + i, base + j));
            }
        }
    }
    edges.push((5, 6));
    let meta = GraphMeta {
        class_names: vec!["a".into(), "b".into()],
        ..Default::default()
    };
    let mut g = Graph::from_edges(12, &edges, meta).unwrap();
    g.set_labels((0..12).map(|v| v / 6).collect()).unwrap();
    let x = Mat::from_vec(12, 2, (0..12).flat_map(|v| if v < 6 { [1.0, 0.2] } else { [0.2, 1.0] }).collect());
    let split = SplitSpec {
        train: vec![0, 1, 2, 6, 7, 8],
        val: vec![3, 9],
        test: vec![4, 5, 10, 11],
        protocol: SplitProtocol::LowLabel,
        seed: 0,
    };
    (g, features(&x), split)
}

#[test]
fn overfits_separable_toy() {
    let (g, x, split) = two_class_toy();
    let cfg = TrainConfig {
        hidden_dim: 8,
        dropout: 0.0,
        weight_decay: 0.0,
        max_epochs: 200,
        patience: 200,
        ..Default::default()
    };
    let out = train(&g, &x, &split, &cfg).unwrap();
    let ctx = GraphCtx::new(&g);
    let xm = Mat::from_vec(12, 2, x.data.clone());
    let pred = gnn::predict(&out.model.forward(&ctx, &xm, Mode::Eval).unwrap().logits);
    assert_eq!(gnn::accuracy(&pred, g.labels().unwrap(), &split.train), 1.0);
    assert_eq!(out.accuracy, 1.0);
}

fn airport_setup(seed: u64) -> (Graph, EmbeddingMatrix) {
    let g = common::synthetic_airports(131, 1038, 0.3, seed);
    let x = degree_onehot(&g, 32).unwrap();
    (g, x)
}

#[test]
fn training_is_deterministic() {
    let (g, x) = airport_setup(1);
    let split = make_low_label_split(&g, 10, 20, 3).unwrap();
    let cfg = TrainConfig {
        max_epochs: 150,
        seed: 4,
        ..gnn::presets::basic("brazil", tans_core::TextRegime::TextFree).unwrap()
    };
    let a = train(&g, &x, &split, &cfg).unwrap();
    let b = train(&g, &x, &split, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.accuracy.to_bits(), b.accuracy.to_bits());
}

#[test]
fn relabeling_leaves_accuracy_bit_identical() {
    let (g, x) = airport_setup(2);
    let split = make_low_label_split(&g, 10, 20, 5).unwrap();
    let n = g.num_nodes();
    let mut perm: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(99));
    let pg = g.permute(&perm).unwrap();
    let mut px = x.clone();
    for v in 0..n {
        px.row_mut(perm[v]).copy_from_slice(x.row(v));
    }
    let psplit = split.permute(&perm);
    for normalize in [Normalize::None, Normalize::BatchNorm] {
        let cfg = TrainConfig {
            hidden_dim: 16,
            normalize,
            dropout: 0.5,
            max_epochs: 120,
            seed: 8,
            ..Default::default()
        };
        let a = train(&g, &x, &split, &cfg).unwrap();
        let b = train(&pg, &px, &psplit, &cfg).unwrap();
        assert_eq!(a.accuracy.to_bits(), b.accuracy.to_bits());
        assert_eq!(a.best_val.to_bits(), b.best_val.to_bits());
        assert_eq!(a.best_epoch, b.best_epoch);
        assert_eq!(a.model.layers[0].w1, b.model.layers[0].w1);
    }
}

#[test]
fn seeds_parallel_matches_sequential() {
    let (g, x) = airport_setup(3);
    let cfg = TrainConfig {
        max_epochs: 60,
        ..gnn::presets::basic("brazil", tans_core::TextRegime::TextFree).unwrap()
    };
    let run = |seed: u64| {
        let split = make_low_label_split(&g, 10, 20, seed)?;
        Ok(train(&g, &x, &split, &cfg.with_seed(seed))?.accuracy)
    };
    let seeds: Vec<u64> = (0..6).collect();
    let seq = gnn::evaluate_seeds(&seeds, Execution::Sequential, run).unwrap();
    let par = gnn::evaluate_seeds(&seeds, Execution::Parallel, run).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn pretrain_finetune_requires_aligned_features() {
    let (src, _) = airport_setup(4);
    let (tgt, _) = airport_setup(5);
    let x_src = EmbeddingMatrix::zeros(src.num_nodes(), 1433, FeatureSource::Baseline, "raw-a");
    let x_tgt = EmbeddingMatrix::zeros(tgt.num_nodes(), 500, FeatureSource::Baseline, "raw-b");
    let split = make_low_label_split(&tgt, 10, 20, 0).unwrap();
    let err = run_pretrain_finetune(&src, &x_src, &tgt, &x_tgt, &split, &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::FeatureSpacesNotAligned { source_dim: 1433, target_dim: 500 }));
    assert!(err.to_string().contains("feature spaces not aligned"));
}

#[test]
fn pretrain_finetune_reinitializes_head_when_classes_differ() {
    let src = labeled_gnp(60, 0.1, 7, 1);
    let tgt = labeled_gnp(50, 0.1, 3, 2);
    let x_src = degree_onehot(&src, 16).unwrap();
    let x_tgt = degree_onehot(&tgt, 16).unwrap();
    let split = make_low_label_split(&tgt, 4, 4, 0).unwrap();
    let cfg = TrainConfig {
        max_epochs: 30,
        ..Default::default()
    };
    let out = run_pretrain_finetune(&src, &x_src, &tgt, &x_tgt, &split, &cfg).unwrap();
    assert!(out.head_reinitialized);
    assert_eq!(out.pretrain_steps, gnn::PRETRAIN_EPOCHS as u64);
    assert_eq!(out.finetune.model.num_classes(), 3);

    let same = run_pretrain_finetune(&tgt, &x_tgt, &tgt, &x_tgt, &split, &cfg).unwrap();
    assert!(!same.head_reinitialized);
}

#[test]
fn domain_adaptation_checks_label_space() {
    let (src, x_src) = airport_setup(6);
    let tgt = labeled_gnp(40, 0.2, 4, 3);
    let x_tgt = degree_onehot(&tgt, 32).unwrap();
    let split = make_da_split(&tgt, 0.2, 0).unwrap();
    assert!(matches!(
        run_domain_adaptation(&src, &x_src, &tgt, &x_tgt, &split, &TrainConfig::default()),
        Err(Error::LabelSpaceMismatch { .. })
    ));
}

#[test]
fn domain_adaptation_never_updates_on_target() {
    let (src, x_src) = airport_setup(7);
    let (tgt, x_tgt) = airport_setup(8);
    let split = make_da_split(&tgt, 0.2, 1).unwrap();
    let cfg = TrainConfig {
        max_epochs: 80,
        patience: 20,
        seed: 2,
        ..gnn::presets::domain_adaptation("usa", "brazil").unwrap()
    };
    let out = run_domain_adaptation(&src, &x_src, &tgt, &x_tgt, &split, &cfg).unwrap();
    assert_eq!(out.optimizer_steps, out.epochs_run as u64);

    // Replaying source-only training up to the selected epoch reproduces
    // the selected weights: the target only chose the epoch.
    let replay_cfg = TrainConfig {
        max_epochs: out.best_epoch + 1,
        ..cfg.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(replay_cfg.seed);
    let mut model = GnnModel::new(cfg.backbone, &cfg.layer_dims(32, 4), cfg.normalize, cfg.dropout, &mut rng).unwrap();
    let ctx = GraphCtx::new(&src);
    let xm = Mat::from_vec(x_src.rows, x_src.dim, x_src.data.clone());
    let mut opt = gnn::Adam::new(cfg.learning_rate);
    let mask = vec![true; src.num_nodes()];
    for _ in 0..replay_cfg.max_epochs {
        let (_, grads, pass) =
            gnn::loss_and_grads(&model, &ctx, &xm, src.labels().unwrap(), &mask, cfg.weight_decay, Mode::Train(&mut rng))
                .unwrap();
        model.update_running_stats(&pass);
        opt.step(model.params_mut(), grads.tensors());
    }
    assert_eq!(model, out.model);
}

#[test]
fn domain_adaptation_on_itself_learns() {
    let (g, x) = airport_setup(9);
    let split = make_da_split(&g, 0.2, 0).unwrap();
    let cfg = TrainConfig {
        max_epochs: 200,
        ..gnn::presets::basic("brazil", tans_core::TextRegime::TextFree).unwrap()
    };
    let out = run_domain_adaptation(&g, &x, &g, &x, &split, &cfg).unwrap();
    assert!(out.accuracy > 0.4, "accuracy {}", out.accuracy);
}
