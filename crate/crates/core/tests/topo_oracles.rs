mod common;

use common::*;
use proptest::prelude::*;
use tans_core::par::Execution;
use tans_core::topo::{self, Property};
use tans_core::{Graph, GraphMeta};

#[test]
fn metrics_match_oracles_on_random_graphs() {
    for seed in 0..40u64 {
        let n = 5 + (seed as usize * 7) % 36;
        let p = if seed % 2 == 0 { 0.1 } else { 0.3 };
        let g = gnp(n, p, seed);
        let props = topo::compute_all(&g).unwrap();
        assert!(max_abs_diff(&props.degree_c, &degree_oracle(&g)) < 1e-9, "degree seed {seed}");
        assert!(max_abs_diff(&props.betweenness_c, &betweenness_oracle(&g)) < 1e-9, "betweenness seed {seed}");
        assert!(max_abs_diff(&props.closeness_c, &closeness_oracle(&g)) < 1e-9, "closeness seed {seed}");
        assert!(max_abs_diff(&props.clustering, &clustering_oracle(&g)) < 1e-9, "clustering seed {seed}");
        assert!(max_abs_diff(&props.square_clustering, &square_clustering_oracle(&g)) < 1e-9, "square seed {seed}");
        for prop in Property::ALL {
            assert_eq!(props.ranks(prop), ranks_oracle(props.values(prop)).as_slice());
        }
    }
}

#[test]
fn ranks_match_sort_oracle() {
    let values: Vec<f64> = (0..50).map(|i| ((i * 37) % 23) as f64 / 7.0).collect();
    assert_eq!(topo::percentile_ranks(&values), ranks_oracle(&values));
}

#[test]
fn sequential_and_parallel_agree_bitwise() {
    let g = gnp(150, 0.08, 99);
    assert_eq!(
        topo::compute_all_with(&g, Execution::Sequential).unwrap(),
        topo::compute_all_with(&g, Execution::Parallel).unwrap()
    );
}

#[test]
fn deterministic() {
    let g = gnp(80, 0.1, 5);
    assert_eq!(topo::compute_all(&g).unwrap(), topo::compute_all(&g).unwrap());
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    perm
}

fn scatter(values: &[f64], perm: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for (v, &x) in values.iter().enumerate() {
        out[perm[v]] = x;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn permutation_equivariance(n in 3usize..60, p in 0.05f64..0.4, seed in 0u64..10_000) {
        let g = gnp(n, p, seed);
        let perm = permutation(n, seed ^ 0xabc);
        let pg = g.permute(&perm).unwrap();
        let a = topo::compute_all(&g).unwrap();
        let b = topo::compute_all(&pg).unwrap();
        for prop in Property::ALL {
            prop_assert_eq!(scatter(a.values(prop), &perm), b.values(prop).to_vec());
            prop_assert_eq!(scatter(a.ranks(prop), &perm), b.ranks(prop).to_vec());
        }
    }

    #[test]
    fn values_and_ranks_in_range(n in 2usize..50, p in 0.0f64..0.6, seed in 0u64..10_000) {
        let props = topo::compute_all(&gnp(n, p, seed)).unwrap();
        for prop in Property::ALL {
            prop_assert!(props.values(prop).iter().all(|x| x.is_finite() && (0.0..=1.0 + 1e-12).contains(x)));
            prop_assert!(props.ranks(prop).iter().all(|r| (0.0..=100.0).contains(r)));
        }
    }

    #[test]
    fn adding_an_edge_never_lowers_endpoint_degree(n in 3usize..40, seed in 0u64..10_000, u in 0usize..40, v in 0usize..40) {
        let (u, v) = (u % n, v % n);
        prop_assume!(u != v);
        let g = gnp(n, 0.2, seed);
        let mut edges: Vec<_> = g.edges().collect();
        edges.push((u, v));
        let h = Graph::from_edges(n, &edges, GraphMeta::default()).unwrap();
        let (dg, dh) = (topo::degree_centrality(&g).unwrap(), topo::degree_centrality(&h).unwrap());
        prop_assert!(dh[u] >= dg[u] && dh[v] >= dg[v]);
    }
}
