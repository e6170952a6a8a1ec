//! Brute-force reference implementations used as test oracles. They work on
//! a dense adjacency matrix and share no code with the library kernels.
#![allow(dead_code)]

pub mod stub;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tans_core::{Graph, GraphMeta};

pub fn adjacency(g: &Graph) -> Vec<Vec<bool>> {
    let n = g.num_nodes();
    let mut a = vec![vec![false; n]; n];
    for (u, v) in g.edges() {
        a[u][v] = true;
        a[v][u] = true;
    }
    a
}

/// Erdős–Rényi G(n, p).
pub fn gnp(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, &edges, GraphMeta::default()).unwrap()
}

/// All-pairs hop distances by Floyd–Warshall; `usize::MAX` when unreachable.
pub fn all_pairs_distances(a: &[Vec<bool>]) -> Vec<Vec<usize>> {
    let n = a.len();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for j in 0..n {
            if a[i][j] {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Number of shortest paths between every ordered pair, counted by dynamic
/// programming over distance layers: σ(s,t) = Σ σ(s,u) over neighbors u of t
/// with d(s,u) = d(s,t) - 1.
pub fn shortest_path_counts(a: &[Vec<bool>], d: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let inf = usize::MAX / 4;
    let mut sigma = vec![vec![0.0; n]; n];
    for s in 0..n {
        let mut layers: Vec<usize> = (0..n).filter(|&t| d[s][t] < inf).collect();
        layers.sort_by_key(|&t| d[s][t]);
        for &t in &layers {
            sigma[s][t] = if t == s {
                1.0
            } else {
                (0..n).filter(|&u| a[t][u] && d[s][u] + 1 == d[s][t]).map(|u| sigma[s][u]).sum()
            };
        }
    }
    sigma
}

/// Σ over unordered pairs {s,t} not containing v of σ_st(v)/σ_st, with
/// σ_st(v) = σ_sv σ_vt when v sits on a shortest s-t path; normalized by
/// (N-1)(N-2)/2.
pub fn betweenness_oracle(g: &Graph) -> Vec<f64> {
    let n = g.num_nodes();
    if n < 3 {
        return vec![0.0; n];
    }
    let a = adjacency(g);
    let d = all_pairs_distances(&a);
    let sigma = shortest_path_counts(&a, &d);
    let inf = usize::MAX / 4;
    let mut bc = vec![0.0; n];
    for v in 0..n {
        for s in 0..n {
            for t in s + 1..n {
                if s == v || t == v || d[s][t] >= inf {
                    continue;
                }
                if d[s][v] + d[v][t] == d[s][t] {
                    bc[v] += sigma[s][v] * sigma[v][t] / sigma[s][t];
                }
            }
        }
    }
    let norm = ((n - 1) * (n - 2)) as f64 / 2.0;
    bc.iter().map(|b| b / norm).collect()
}

pub fn closeness_oracle(g: &Graph) -> Vec<f64> {
    let n = g.num_nodes();
    let d = all_pairs_distances(&adjacency(g));
    let inf = usize::MAX / 4;
    (0..n)
        .map(|v| {
            let reach: Vec<usize> = (0..n).filter(|&u| u != v && d[v][u] < inf).map(|u| d[v][u]).collect();
            let total: usize = reach.iter().sum();
            if total == 0 {
                0.0
            } else {
                let r = reach.len() as f64;
                (r / total as f64) * (r / (n - 1) as f64)
            }
        })
        .collect()
}

/// Enumerates every node triple.
pub fn clustering_oracle(g: &Graph) -> Vec<f64> {
    let n = g.num_nodes();
    let a = adjacency(g);
    (0..n)
        .map(|v| {
            let deg = (0..n).filter(|&u| a[v][u]).count();
            if deg < 2 {
                return 0.0;
            }
            let mut t = 0;
            for u in 0..n {
                for w in u + 1..n {
                    if a[v][u] && a[v][w] && a[u][w] {
                        t += 1;
                    }
                }
            }
            2.0 * t as f64 / (deg * (deg - 1)) as f64
        })
        .collect()
}

/// Pair-by-pair square clustering: for each unordered neighbor pair (u,w)
/// of v, enumerate every x to count 4-cycles v-u-x-w, and add the pair's
/// possible-square count to the denominator.
pub fn square_clustering_oracle(g: &Graph) -> Vec<f64> {
    let n = g.num_nodes();
    let a = adjacency(g);
    let deg: Vec<usize> = (0..n).map(|v| (0..n).filter(|&u| a[v][u]).count()).collect();
    (0..n)
        .map(|v| {
            let nbrs: Vec<usize> = (0..n).filter(|&u| a[v][u]).collect();
            let (mut num, mut den) = (0i64, 0i64);
            for i in 0..nbrs.len() {
                for j in i + 1..nbrs.len() {
                    let (u, w) = (nbrs[i], nbrs[j]);
                    let q = (0..n).filter(|&x| x != v && a[u][x] && a[w][x]).count() as i64;
                    let theta = a[u][w] as i64;
                    num += q;
                    den += (deg[u] as i64 - 1 - q - theta) + (deg[w] as i64 - 1 - q - theta) + q;
                }
            }
            if den > 0 {
                num as f64 / den as f64
            } else {
                0.0
            }
        })
        .collect()
}

pub fn degree_oracle(g: &Graph) -> Vec<f64> {
    let a = adjacency(g);
    let n = a.len();
    a.iter().map(|row| row.iter().filter(|&&x| x).count() as f64 / (n - 1) as f64).collect()
}

/// Counts strictly larger values by comparing every pair.
pub fn ranks_oracle(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    values
        .iter()
        .map(|&x| 100.0 * values.iter().filter(|&&y| y > x).count() as f64 / n)
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Heavy-tailed random graph in the shape of the airport networks: Chung-Lu
/// with power-law expected degrees, rescaled toward `target_edges`, and four
/// equal-size classes given by quartiles of a noisy activity score
/// (degree times log-normal noise of scale `noise`).
pub fn synthetic_airports(n: usize, target_edges: usize, noise: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).powf(-0.6)).collect();
    let total: f64 = raw.iter().sum();
    let mut scale = 2.0 * target_edges as f64 / total;
    let mut edges = Vec::new();
    for _ in 0..20 {
        let w: Vec<f64> = raw.iter().map(|x| x * scale).collect();
        let sw: f64 = w.iter().sum();
        let expected: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| (w[i] * w[j] / sw).min(1.0))
            .sum();
        if (expected - target_edges as f64).abs() < 0.01 * target_edges as f64 {
            break;
        }
        scale *= (target_edges as f64 / expected).sqrt();
    }
    let w: Vec<f64> = raw.iter().map(|x| x * scale).collect();
    let sw: f64 = w.iter().sum();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < (w[i] * w[j] / sw).min(1.0) {
                edges.push((i, j));
            }
        }
    }
    let meta = GraphMeta {
        graph_type: "airport".into(),
        node_type: "airport".into(),
        edge_type: "flight".into(),
        class_names: ["low", "medium-low", "medium-high", "high"].map(String::from).to_vec(),
        text_regime: tans_core::TextRegime::TextFree,
    };
    let mut g = Graph::from_edges(n, &edges, meta).unwrap();
    let activity: Vec<f64> = (0..n)
        .map(|v| {
            let z: f64 = (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0;
            (g.degree(v) as f64 + 1.0) * (noise * z).exp()
        })
        .collect();
    let mut by_activity: Vec<usize> = (0..n).collect();
    by_activity.sort_by(|&a, &b| activity[a].total_cmp(&activity[b]).then(a.cmp(&b)));
    let mut labels = vec![0; n];
    for (r, &v) in by_activity.iter().enumerate() {
        labels[v] = r * 4 / n;
    }
    g.set_labels(labels).unwrap();
    g
}

/// Per-node loop evaluation of one message-passing layer without
/// activation: `x_i W1 + mean_{j∈N(i)} x_j W2 + b`.
pub fn layer_oracle(g: &Graph, x: &[Vec<f64>], w1: &[Vec<f64>], w2: &[Vec<f64>], b: &[f64]) -> Vec<Vec<f64>> {
    let (d_in, d_out) = (w1.len(), b.len());
    (0..g.num_nodes())
        .map(|i| {
            (0..d_out)
                .map(|o| {
                    let own: f64 = (0..d_in).map(|k| x[i][k] * w1[k][o]).sum();
                    let nbrs = g.neighbors(i);
                    let agg = if nbrs.is_empty() {
                        0.0
                    } else {
                        let mut s = 0.0;
                        for &j in nbrs {
                            for k in 0..d_in {
                                s += x[j][k] * w2[k][o];
                            }
                        }
                        s / nbrs.len() as f64
                    };
                    own + agg + b[o]
                })
                .collect()
        })
        .collect()
}

/// Largest relative error between analytic gradients and central finite
/// differences with step `eps`, over every trainable parameter. Training
/// mode is used with the same dropout mask for every evaluation.
pub fn gradient_check(
    model: &tans_core::gnn::GnnModel,
    g: &Graph,
    x: &tans_core::gnn::Mat,
    nodes: &[bool],
    weight_decay: f64,
    seed: u64,
    eps: f64,
) -> f64 {
    use tans_core::gnn::{loss_and_grads, GraphCtx, Mode};
    let ctx = GraphCtx::new(g);
    let labels = g.labels().unwrap();
    let loss = |m: &tans_core::gnn::GnnModel| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loss_and_grads(m, &ctx, x, labels, nodes, weight_decay, Mode::Train(&mut rng)).unwrap()
    };
    let (_, grads, _) = loss(model);
    let analytic: Vec<Vec<f64>> = grads.tensors().into_iter().map(|t| t.to_vec()).collect();
    let mut worst = 0.0f64;
    for (k, tensor) in analytic.iter().enumerate() {
        for (i, &a) in tensor.iter().enumerate() {
            let mut plus = model.clone();
            plus.params_mut()[k][i] += eps;
            let mut minus = model.clone();
            minus.params_mut()[k][i] -= eps;
            let numeric = (loss(&plus).0 - loss(&minus).0) / (2.0 * eps);
            let denom = a.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}

/// Writes `g` as `<name>.edges` (node ids offset by 100) and a node table
/// `<name>.nodes.csv` with class indices and, when present, texts. Isolated
/// nodes are left out of both files.
pub fn write_dataset(g: &Graph, dir: &std::path::Path, name: &str) -> (std::path::PathBuf, std::path::PathBuf) {
    let edges = dir.join(format!("{name}.edges"));
    let body: String = g.edges().map(|(u, v)| format!("{} {}\n", u + 100, v + 100)).collect();
    std::fs::write(&edges, body).unwrap();
    let nodes = dir.join(format!("{name}.nodes.csv"));
    let mut w = csv::Writer::from_path(&nodes).unwrap();
    let labels = g.labels().unwrap();
    match g.texts() {
        Some(texts) => {
            w.write_record(["node_id", "label", "text"]).unwrap();
            for v in (0..g.num_nodes()).filter(|&v| g.degree(v) > 0) {
                w.write_record([(v + 100).to_string(), labels[v].to_string(), texts[v].clone()]).unwrap();
            }
        }
        None => {
            w.write_record(["node_id", "label"]).unwrap();
            for v in (0..g.num_nodes()).filter(|&v| g.degree(v) > 0) {
                w.write_record([(v + 100).to_string(), labels[v].to_string()]).unwrap();
            }
        }
    }
    w.flush().unwrap();
    (edges, nodes)
}

/// Three-class stochastic block model whose node texts mix class keywords
/// with shared filler words.
pub fn synthetic_citations(n: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|v| v % 3).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { 0.08 } else { 0.01 };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let keywords = [["graph", "spectral", "vertex"], ["neural", "gradient", "layer"], ["protein", "gene", "cell"]];
    let filler = ["study", "method", "result", "analysis", "model", "data"];
    let texts = (0..n)
        .map(|v| {
            (0..8)
                .map(|_| {
                    if rng.random::<f64>() < 0.4 {
                        keywords[labels[v]][rng.random_range(0..3)]
                    } else {
                        filler[rng.random_range(0..filler.len())]
                    }
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let meta = GraphMeta {
        graph_type: "citation".into(),
        node_type: "paper".into(),
        edge_type: "citation".into(),
        class_names: ["Theory", "Learning", "Biology"].map(String::from).to_vec(),
        text_regime: tans_core::TextRegime::TextRich,
    };
    let mut g = Graph::from_edges(n, &edges, meta).unwrap();
    g.set_labels(labels).unwrap();
    g.set_texts(texts).unwrap();
    g
}
