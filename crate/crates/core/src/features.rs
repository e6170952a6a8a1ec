//! Hand-designed node features used as baselines for generated text
//! features, plus per-graph SVD alignment of arbitrary feature matrices.
//!
//! Everything here is deterministic. Eigenvector and singular vector signs
//! are fixed by making each column's largest-magnitude entry positive (the
//! first such entry on ties).

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::encoder::{EmbeddingMatrix, FeatureSource};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::par::{self, Execution};
use crate::topo::{NodeProperties, Property};

/// Eigenvalues at or below this count as zero.
const ZERO_EIGENVALUE: f64 = 1e-8;
const EIGEN_EPS: f64 = 1e-14;
const MAX_ITER: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    IdentityOnehot,
    DegreeOnehot,
    LaplacianEigenvectors,
    RandomWalk,
    Tpf,
    SvdAligned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Carried for provenance; every current kind is deterministic.
    #[serde(default)]
    pub seed: u64,
}

fn default_dim() -> usize {
    32
}

impl FeatureSpec {
    pub fn new(kind: FeatureKind) -> Self {
        FeatureSpec {
            kind,
            dim: default_dim(),
            seed: 0,
        }
    }

    /// `props` is required for TPF and `base` for SVD alignment.
    pub fn build(&self, g: &Graph, props: Option<&NodeProperties>, base: Option<&EmbeddingMatrix>) -> Result<EmbeddingMatrix> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("feature dim must be at least 1".into()));
        }
        let mut m = match self.kind {
            FeatureKind::IdentityOnehot => identity_onehot(g),
            FeatureKind::DegreeOnehot => degree_onehot(g, self.dim)?,
            FeatureKind::LaplacianEigenvectors => laplacian_eigenvector_features(g, self.dim)?,
            FeatureKind::RandomWalk => random_walk_features(g, self.dim),
            FeatureKind::Tpf => {
                let props = props.ok_or_else(|| Error::InvalidArgument("TPF features need node properties".into()))?;
                tpf_features(props)
            }
            FeatureKind::SvdAligned => {
                let base = base.ok_or_else(|| Error::InvalidArgument("SVD alignment needs input features".into()))?;
                svd_align(base, self.dim)?
            }
        };
        m.source = FeatureSource::Baseline;
        Ok(m)
    }
}

fn baseline(rows: usize, dim: usize, name: String) -> EmbeddingMatrix {
    EmbeddingMatrix::zeros(rows, dim, FeatureSource::Baseline, name)
}

/// Node-id indicator features: the N×N identity. Their width depends on N,
/// so they cannot be shared between graphs of different sizes.
pub fn identity_onehot(g: &Graph) -> EmbeddingMatrix {
    let n = g.num_nodes();
    let mut m = baseline(n, n, "identity-onehot".into());
    for v in 0..n {
        m.data[v * n + v] = 1.0;
    }
    m
}

/// One-hot of the degree, with every degree ≥ dim−1 in the last bucket.
pub fn degree_onehot(g: &Graph, dim: usize) -> Result<EmbeddingMatrix> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!("degree one-hot needs dim >= 2, got {dim}")));
    }
    let n = g.num_nodes();
    let mut m = baseline(n, dim, format!("degree-onehot-{dim}"));
    for v in 0..n {
        m.data[v * dim + g.degree(v).min(dim - 1)] = 1.0;
    }
    Ok(m)
}

/// I − D^{-1/2} A D^{-1/2}, with zero rows and columns for isolated nodes.
pub fn normalized_laplacian(g: &Graph) -> DMatrix<f64> {
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|v| match g.degree(v) {
            0 => 0.0,
            d => 1.0 / (d as f64).sqrt(),
        })
        .collect();
    let mut l = DMatrix::zeros(n, n);
    for v in 0..n {
        if g.degree(v) > 0 {
            l[(v, v)] = 1.0;
        }
        for &u in g.neighbors(v) {
            l[(v, u)] = -inv_sqrt[v] * inv_sqrt[u];
        }
    }
    l
}

fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &x in col.iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        col *= sign;
    }
}

/// Eigenvectors of the normalized Laplacian for its k smallest nonzero
/// eigenvalues, as columns. Uses a dense solver, so memory is O(N²).
/// A graph with fewer than k nonzero eigenvalues gets zero padding.
pub fn laplacian_eigenvector_features(g: &Graph, k: usize) -> Result<EmbeddingMatrix> {
    let n = g.num_nodes();
    if k >= n {
        return Err(Error::InvalidArgument(format!("need k < N, got k={k} with N={n}")));
    }
    let (values, vectors) = laplacian_spectrum(g)?;
    let picked: Vec<usize> = (0..n).filter(|&i| values[i] > ZERO_EIGENVALUE).take(k).collect();
    if picked.len() < k {
        log::warn!("only {} nonzero Laplacian eigenvalues, padding to {k}", picked.len());
    }
    let mut m = baseline(n, k, format!("laplacian-eigvec-{k}"));
    for (j, &i) in picked.iter().enumerate() {
        for v in 0..n {
            m.data[v * k + j] = vectors[(v, i)];
        }
    }
    Ok(m)
}

/// All eigenpairs of the normalized Laplacian, eigenvalues ascending and
/// eigenvector signs fixed.
pub fn laplacian_spectrum(g: &Graph) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let l = normalized_laplacian(g);
    let eig = SymmetricEigen::try_new(l, EIGEN_EPS, MAX_ITER)
        .ok_or_else(|| Error::NoConvergence(format!("symmetric eigensolver on {} nodes", g.num_nodes())))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = eig.eigenvectors.select_columns(&order);
    fix_column_signs(&mut vectors);
    Ok((values, vectors))
}

pub fn random_walk_features(g: &Graph, k: usize) -> EmbeddingMatrix {
    random_walk_features_with(g, k, Execution::default())
}

/// Feature j of node v is the probability that a simple random walk from v
/// is back at v after j+1 steps. Isolated nodes get zero rows.
pub fn random_walk_features_with(g: &Graph, k: usize, exec: Execution) -> EmbeddingMatrix {
    let n = g.num_nodes();
    let rows = par::map_range(n, exec, |v| {
        let mut out = vec![0.0; k];
        if g.degree(v) == 0 {
            return out;
        }
        let mut p = vec![0.0; n];
        let mut next = vec![0.0; n];
        p[v] = 1.0;
        for slot in out.iter_mut() {
            next.iter_mut().for_each(|x| *x = 0.0);
            for w in 0..n {
                if p[w] != 0.0 {
                    let share = p[w] / g.degree(w) as f64;
                    for &u in g.neighbors(w) {
                        next[u] += share;
                    }
                }
            }
            std::mem::swap(&mut p, &mut next);
            *slot = p[v];
        }
        out
    });
    let mut m = baseline(n, k, format!("random-walk-{k}"));
    for (v, row) in rows.into_iter().enumerate() {
        m.row_mut(v).copy_from_slice(&row);
    }
    m
}

/// The five property values as columns, each standardized to zero mean and
/// unit population variance. Constant columns become zeros.
pub fn tpf_features(props: &NodeProperties) -> EmbeddingMatrix {
    let n = props.num_nodes();
    let dim = Property::ALL.len();
    let mut m = baseline(n, dim, "tpf".into());
    for (j, p) in Property::ALL.into_iter().enumerate() {
        let col = props.values(p);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if sd <= 1e-12 * mean.abs().max(1.0) {
            continue;
        }
        for v in 0..n {
            m.data[v * dim + j] = (col[v] - mean) / sd;
        }
    }
    m
}

pub struct TruncatedSvd {
    /// U_k Σ_k, N×k.
    pub scores: DMatrix<f64>,
    /// All singular values, nonincreasing.
    pub singular_values: Vec<f64>,
    /// V_k, d×k.
    pub components: DMatrix<f64>,
    /// Number of the k requested components that are numerically nonzero.
    pub rank: usize,
}

pub fn truncated_svd(x: &DMatrix<f64>, k: usize) -> Result<TruncatedSvd> {
    let (n, d) = x.shape();
    if k > n.min(d) {
        return Err(Error::InvalidArgument(format!("target dim {k} exceeds min({n}, {d})")));
    }
    let svd = SVD::try_new(x.clone(), true, true, EIGEN_EPS, MAX_ITER)
        .ok_or_else(|| Error::NoConvergence(format!("SVD of a {n}x{d} matrix")))?;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let tol = singular_values.first().copied().unwrap_or(0.0) * n.max(d) as f64 * f64::EPSILON;
    let rank = singular_values.iter().take(k).filter(|&&s| s > tol).count();

    let mut scores = DMatrix::zeros(n, k);
    let mut components = DMatrix::zeros(d, k);
    for j in 0..rank {
        let i = order[j];
        let mut col = u.column(i).clone_owned();
        let mut comp = v_t.row(i).transpose();
        // Sign fixed on U; V follows so that U Σ Vᵀ is unchanged.
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &x in col.iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        col *= sign * singular_values[j];
        comp *= sign;
        scores.set_column(j, &col);
        components.set_column(j, &comp);
    }
    Ok(TruncatedSvd {
        scores,
        singular_values,
        components,
        rank,
    })
}

/// Projects features onto their top `target_dim` singular directions,
/// returning U_k Σ_k. Missing rank is padded with zero columns.
pub fn svd_align(features: &EmbeddingMatrix, target_dim: usize) -> Result<EmbeddingMatrix> {
    let x = DMatrix::from_row_slice(features.rows, features.dim, &features.data);
    let t = truncated_svd(&x, target_dim)?;
    if t.rank < target_dim {
        log::warn!("features have rank {} < {target_dim}, padding with zero columns", t.rank);
    }
    let mut m = baseline(features.rows, target_dim, format!("svd{target_dim}({})", features.model_id));
    for v in 0..features.rows {
        for j in 0..target_dim {
            m.data[v * target_dim + j] = t.scores[(v, j)];
        }
    }
    Ok(m)
}
