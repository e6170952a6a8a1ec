//! Train/validation/test node splits for the three evaluation protocols.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CanonicalOrder, Graph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitProtocol {
    LowLabel,
    HighLabel,
    DomainAdaptation,
}

/// Disjoint node index sets. Each set is stored sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub protocol: SplitProtocol,
    pub seed: u64,
}

impl SplitSpec {
    /// Checks disjointness, range and non-emptiness. The training set of a
    /// domain-adaptation split is empty by construction.
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (name, set) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            let may_be_empty = name == "train" && self.protocol == SplitProtocol::DomainAdaptation;
            if set.is_empty() && !may_be_empty {
                return Err(Error::InvalidArgument(format!("{name} set is empty")));
            }
            for &v in set {
                if v >= num_nodes {
                    return Err(Error::InvalidArgument(format!("{name} node {v} out of range")));
                }
                if !seen.insert(v) {
                    return Err(Error::InvalidArgument(format!("node {v} appears in more than one set")));
                }
            }
        }
        Ok(())
    }

    /// Maps every node through `perm` (old index → new index).
    pub fn permute(&self, perm: &[usize]) -> SplitSpec {
        let map = |set: &[usize]| {
            let mut out: Vec<usize> = set.iter().map(|&v| perm[v]).collect();
            out.sort_unstable();
            out
        };
        SplitSpec {
            train: map(&self.train),
            val: map(&self.val),
            test: map(&self.test),
            ..self.clone()
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// Fixed number of training and validation nodes per class; every other
/// node is a test node. Class members are shuffled in external-id order, so
/// the split does not depend on the order of the input files.
pub fn make_low_label_split(g: &Graph, train_per_class: usize, val_per_class: usize, seed: u64) -> Result<SplitSpec> {
    let labels = g.labels().ok_or(Error::Unlabeled)?;
    let canonical = CanonicalOrder::new(g);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); g.num_classes()];
    for &v in &canonical.order {
        by_class[labels[v]].push(v);
    }
    let required = train_per_class + val_per_class;
    let mut rng = rng(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    let mut in_train_or_val = vec![false; g.num_nodes()];
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.len() < required {
            return Err(Error::ClassTooSmall {
                class: g.meta.class_names[class].clone(),
                available: members.len(),
                required,
            });
        }
        members.shuffle(&mut rng);
        for &v in &members[..required] {
            in_train_or_val[v] = true;
        }
        train.extend_from_slice(&members[..train_per_class]);
        val.extend_from_slice(&members[train_per_class..required]);
    }
    let test = (0..g.num_nodes()).filter(|&v| !in_train_or_val[v]).collect();
    let split = SplitSpec {
        train: sorted(train),
        val: sorted(val),
        test,
        protocol: SplitProtocol::LowLabel,
        seed,
    };
    split.validate(g.num_nodes())?;
    Ok(split)
}

/// Global shuffle into train/val/test. Train and validation sizes are the
/// rounded fractions of N; the remainder goes to test.
pub fn make_high_label_split(g: &Graph, ratios: (f64, f64, f64), seed: u64) -> Result<SplitSpec> {
    let (tr, va, te) = ratios;
    if (tr + va + te - 1.0).abs() > 1e-9 || [tr, va, te].iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::InvalidArgument(format!("split ratios {ratios:?} must be in [0,1] and sum to 1")));
    }
    let n = g.num_nodes();
    if n < 5 {
        return Err(Error::InvalidArgument(format!("high-label split needs at least 5 nodes, got {n}")));
    }
    let n_train = (tr * n as f64).round() as usize;
    let n_val = (va * n as f64).round() as usize;
    if n_train + n_val >= n {
        return Err(Error::InvalidArgument("ratios leave no test nodes".into()));
    }
    let mut nodes = CanonicalOrder::new(g).order;
    nodes.shuffle(&mut rng(seed));
    let split = SplitSpec {
        train: sorted(nodes[..n_train].to_vec()),
        val: sorted(nodes[n_train..n_train + n_val].to_vec()),
        test: sorted(nodes[n_train + n_val..].to_vec()),
        protocol: SplitProtocol::HighLabel,
        seed,
    };
    split.validate(n)?;
    Ok(split)
}

/// Target-graph split for domain adaptation: no training nodes, a random
/// `val_frac` of nodes for checkpoint selection, the rest for testing.
pub fn make_da_split(target: &Graph, val_frac: f64, seed: u64) -> Result<SplitSpec> {
    if target.labels().is_none() {
        return Err(Error::Unlabeled);
    }
    if !(0.0..1.0).contains(&val_frac) {
        return Err(Error::InvalidArgument(format!("val_frac {val_frac} outside [0,1)")));
    }
    let n = target.num_nodes();
    let n_val = (val_frac * n as f64).round() as usize;
    let mut nodes = CanonicalOrder::new(target).order;
    nodes.shuffle(&mut rng(seed));
    let split = SplitSpec {
        train: Vec::new(),
        val: sorted(nodes[..n_val].to_vec()),
        test: sorted(nodes[n_val..].to_vec()),
        protocol: SplitProtocol::DomainAdaptation,
        seed,
    };
    split.validate(n)?;
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphMeta;

    /// Path graph whose labels cycle through `classes`.
    fn labeled_path(n: usize, classes: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        let meta = GraphMeta {
            class_names: (0..classes).map(|c| format!("c{c}")).collect(),
            ..Default::default()
        };
        let mut g = Graph::from_edges(n, &edges, meta).unwrap();
        g.set_labels((0..n).map(|i| i % classes).collect()).unwrap();
        g
    }

    #[test]
    fn low_label_cardinalities() {
        // Same class structure as Cora: 7 classes, 2708 nodes.
        let g = labeled_path(2708, 7);
        let s = make_low_label_split(&g, 20, 30, 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (140, 210, 2358));
        let labels = g.labels().unwrap();
        for c in 0..7 {
            assert_eq!(s.train.iter().filter(|&&v| labels[v] == c).count(), 20);
            assert_eq!(s.val.iter().filter(|&&v| labels[v] == c).count(), 30);
        }
        let b = labeled_path(131, 4);
        let s = make_low_label_split(&b, 10, 20, 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (40, 80, 11));
    }

    #[test]
    fn low_label_is_deterministic() {
        let g = labeled_path(300, 3);
        assert_eq!(make_low_label_split(&g, 20, 30, 7).unwrap(), make_low_label_split(&g, 20, 30, 7).unwrap());
        assert_ne!(make_low_label_split(&g, 20, 30, 7).unwrap(), make_low_label_split(&g, 20, 30, 8).unwrap());
    }

    #[test]
    fn low_label_small_class_names_it() {
        let g = labeled_path(20, 2);
        match make_low_label_split(&g, 5, 6, 0) {
            Err(Error::ClassTooSmall { class, available, required }) => {
                assert_eq!(class, "c0");
                assert_eq!((available, required), (10, 11));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn high_label_rounding() {
        let s = make_high_label_split(&labeled_path(100, 2), (0.6, 0.2, 0.2), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (60, 20, 20));
        // round(78.6) = 79, round(26.2) = 26, remainder 26.
        let s = make_high_label_split(&labeled_path(131, 2), (0.6, 0.2, 0.2), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (79, 26, 26));
    }

    #[test]
    fn high_label_errors() {
        let g = labeled_path(10, 2);
        assert!(make_high_label_split(&g, (0.6, 0.3, 0.2), 0).is_err());
        assert!(make_high_label_split(&labeled_path(4, 2), (0.6, 0.2, 0.2), 0).is_err());
    }

    #[test]
    fn da_split_sizes() {
        let g = labeled_path(399, 4);
        let s = make_da_split(&g, 0.2, 0).unwrap();
        assert!(s.train.is_empty());
        assert_eq!((s.val.len(), s.test.len()), (80, 319));
        assert_ne!(s.val, make_da_split(&g, 0.2, 1).unwrap().val);
    }

    #[test]
    fn da_split_requires_labels() {
        let g = Graph::from_edges(10, &[(0, 1)], GraphMeta::default()).unwrap();
        assert!(matches!(make_da_split(&g, 0.2, 0), Err(Error::Unlabeled)));
    }

    #[test]
    fn splits_ignore_input_order() {
        // Relabeling the nodes permutes the split and nothing else.
        let g = labeled_path(120, 3);
        let perm: Vec<usize> = (0..120).map(|i| (i * 7) % 120).collect();
        let p = g.permute(&perm).unwrap();
        let a = make_low_label_split(&g, 5, 5, 11).unwrap();
        let b = make_low_label_split(&p, 5, 5, 11).unwrap();
        assert_eq!(a.permute(&perm), b);
    }

    proptest::proptest! {
        #[test]
        fn every_split_is_disjoint(seed in 0u64..1000, n in 60usize..200) {
            let g = labeled_path(n, 3);
            for s in [
                make_low_label_split(&g, 5, 10, seed).unwrap(),
                make_high_label_split(&g, (0.6, 0.2, 0.2), seed).unwrap(),
                make_da_split(&g, 0.2, seed).unwrap(),
            ] {
                proptest::prop_assert!(s.validate(n).is_ok());
                let total = s.train.len() + s.val.len() + s.test.len();
                proptest::prop_assert_eq!(total, n);
            }
        }
    }
}
