use crate::graph::Graph;
use crate::par::{self, Execution};

fn sorted_intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Number of edges among the neighbors of `v`, i.e. triangles through `v`.
pub fn triangles(g: &Graph, v: usize) -> usize {
    let nv = g.neighbors(v);
    nv.iter().map(|&u| sorted_intersection_len(nv, g.neighbors(u))).sum::<usize>() / 2
}

pub fn clustering_coefficient(g: &Graph) -> Vec<f64> {
    clustering_coefficient_with(g, Execution::default())
}

/// 2T(v) / (deg(v)(deg(v)-1)); 0 when deg(v) < 2.
pub fn clustering_coefficient_with(g: &Graph, exec: Execution) -> Vec<f64> {
    par::map_range(g.num_nodes(), exec, |v| {
        let d = g.degree(v);
        if d < 2 {
            return 0.0;
        }
        (2 * triangles(g, v)) as f64 / (d * (d - 1)) as f64
    })
}

pub fn square_clustering(g: &Graph) -> Vec<f64> {
    square_clustering_with(g, Execution::default())
}

/// Square clustering of Lind, González and Herrmann.
///
/// For neighbors u, w of v let q(u,w) be the number of common neighbors of
/// u and w other than v, and θ(u,w) = 1 when u and w are adjacent. Then
///
/// ```text
/// C4(v) = Σ q(u,w) / Σ [ (k_u - 1 - q - θ) + (k_w - 1 - q - θ) + q ]
/// ```
///
/// over unordered neighbor pairs. The sums are evaluated without visiting
/// pairs: Σ q = Σ_{x≠v} C(c_x, 2) where c_x counts neighbors of v adjacent
/// to x, and the denominator collapses to
/// (deg(v) - 1) Σ_u (k_u - 1) - 2 T(v) - Σ q.
pub fn square_clustering_with(g: &Graph, exec: Execution) -> Vec<f64> {
    const BLOCK: usize = 64;
    let n = g.num_nodes();
    let blocks = par::map_range(par::num_blocks(n, BLOCK), exec, |b| {
        let mut counts: Vec<u32> = vec![0; n];
        let mut touched = Vec::new();
        (b * BLOCK..((b + 1) * BLOCK).min(n))
            .map(|v| square_clustering_at(g, v, &mut counts, &mut touched))
            .collect::<Vec<f64>>()
    });
    blocks.concat()
}

/// `counts` must be all zero on entry and is left all zero.
fn square_clustering_at(g: &Graph, v: usize, counts: &mut [u32], touched: &mut Vec<usize>) -> f64 {
    let d = g.degree(v) as u64;
    if d < 2 {
        return 0.0;
    }
    touched.clear();
    let mut stubs = 0u64;
    for &u in g.neighbors(v) {
        stubs += g.degree(u) as u64 - 1;
        for &x in g.neighbors(u) {
            if x != v {
                if counts[x] == 0 {
                    touched.push(x);
                }
                counts[x] += 1;
            }
        }
    }
    let mut squares = 0u64;
    for &x in touched.iter() {
        let c = counts[x] as u64;
        squares += c * (c - 1) / 2;
        counts[x] = 0;
    }
    let potential = (d - 1) * stubs - 2 * triangles(g, v) as u64 - squares;
    if potential == 0 {
        0.0
    } else {
        squares as f64 / potential as f64
    }
}
