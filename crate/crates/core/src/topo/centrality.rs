use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::graph::{CanonicalOrder, Graph};
use crate::par::{self, Execution};

/// Sources handled by one work unit of the betweenness loop. Fixed so the
/// floating-point merge order never depends on the thread count.
const SOURCE_BLOCK: usize = 16;

/// deg(v) / (N - 1).
pub fn degree_centrality(g: &Graph) -> Result<Vec<f64>> {
    let n = g.num_nodes();
    if n < 2 {
        return Err(Error::InvalidGraph(format!("degree centrality needs at least 2 nodes, got {n}")));
    }
    let scale = 1.0 / (n - 1) as f64;
    Ok((0..n).map(|v| g.degree(v) as f64 * scale).collect())
}

pub fn betweenness_centrality(g: &Graph) -> Vec<f64> {
    betweenness_centrality_with(g, Execution::default())
}

/// Exact betweenness over unordered source/target pairs, endpoints
/// excluded, normalized by (N-1)(N-2)/2.
///
/// Brandes accumulation from every source. Sources are visited in canonical
/// (external-id) order in blocks of [`SOURCE_BLOCK`]; each block owns its
/// accumulator and blocks are summed in order afterwards.
pub fn betweenness_centrality_with(g: &Graph, exec: Execution) -> Vec<f64> {
    let n = g.num_nodes();
    if n < 3 {
        return vec![0.0; n];
    }
    let canonical = CanonicalOrder::new(g);
    let blocks = par::map_range(par::num_blocks(n, SOURCE_BLOCK), exec, |b| {
        let mut acc = vec![0.0f64; n];
        let mut state = BrandesState::new(n);
        let end = ((b + 1) * SOURCE_BLOCK).min(n);
        for &s in &canonical.order[b * SOURCE_BLOCK..end] {
            state.accumulate(&canonical, s, &mut acc);
        }
        acc
    });
    let mut total = vec![0.0f64; n];
    for acc in &blocks {
        for (t, a) in total.iter_mut().zip(acc) {
            *t += a;
        }
    }
    // Every unordered pair was counted from both ends.
    let scale = 1.0 / ((n - 1) * (n - 2)) as f64;
    total.iter_mut().for_each(|t| *t *= scale);
    total
}

struct BrandesState {
    dist: Vec<i64>,
    sigma: Vec<f64>,
    delta: Vec<f64>,
    stack: Vec<usize>,
    queue: VecDeque<usize>,
}

impl BrandesState {
    fn new(n: usize) -> Self {
        BrandesState {
            dist: vec![-1; n],
            sigma: vec![0.0; n],
            delta: vec![0.0; n],
            stack: Vec::with_capacity(n),
            queue: VecDeque::with_capacity(n),
        }
    }

    fn accumulate(&mut self, order: &CanonicalOrder, s: usize, acc: &mut [f64]) {
        let BrandesState {
            dist,
            sigma,
            delta,
            stack,
            queue,
        } = self;
        for &v in stack.iter() {
            dist[v] = -1;
            sigma[v] = 0.0;
            delta[v] = 0.0;
        }
        stack.clear();
        dist[s] = 0;
        sigma[s] = 1.0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in order.neighbors(v) {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                }
            }
        }
        for &w in stack.iter().rev() {
            let coeff = (1.0 + delta[w]) / sigma[w];
            for &v in order.neighbors(w) {
                if dist[v] == dist[w] - 1 {
                    delta[v] += sigma[v] * coeff;
                }
            }
            if w != s {
                acc[w] += delta[w];
            }
        }
    }
}

pub fn closeness_centrality(g: &Graph) -> Vec<f64> {
    closeness_centrality_with(g, Execution::default())
}

/// (r-1)/Σd scaled by (r-1)/(N-1), where r is the size of the node's
/// connected component and Σd the sum of distances to the nodes it reaches.
/// On connected graphs this is (N-1)/Σd. Isolated nodes get 0.
pub fn closeness_centrality_with(g: &Graph, exec: Execution) -> Vec<f64> {
    let n = g.num_nodes();
    par::map_range(n, exec, |s| {
        let mut dist = vec![u32::MAX; n];
        let mut queue = VecDeque::new();
        dist[s] = 0;
        queue.push_back(s);
        let (mut total, mut reached) = (0u64, 0u64);
        while let Some(v) = queue.pop_front() {
            total += dist[v] as u64;
            reached += 1;
            for &w in g.neighbors(v) {
                if dist[w] == u32::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        if total == 0 || n < 2 {
            return 0.0;
        }
        let others = (reached - 1) as f64;
        (others / total as f64) * (others / (n - 1) as f64)
    })
}
