//! Per-node topological properties and their percentile ranks.

mod centrality;
mod clustering;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use centrality::{
    betweenness_centrality, betweenness_centrality_with, closeness_centrality, closeness_centrality_with,
    degree_centrality,
};
pub use clustering::{
    clustering_coefficient, clustering_coefficient_with, square_clustering, square_clustering_with, triangles,
};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::par::Execution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Property {
    Degree,
    Betweenness,
    Closeness,
    Clustering,
    SquareClustering,
}

impl Property {
    /// Prompt order.
    pub const ALL: [Property; 5] = [
        Property::Degree,
        Property::Betweenness,
        Property::Closeness,
        Property::Clustering,
        Property::SquareClustering,
    ];

    pub fn display_name(self) -> &'static str {
        match self {
            Property::Degree => "Degree Centrality",
            Property::Betweenness => "Betweenness Centrality",
            Property::Closeness => "Closeness Centrality",
            Property::Clustering => "Clustering Coefficient",
            Property::SquareClustering => "Square Clustering Coefficient",
        }
    }

    pub fn column(self) -> &'static str {
        match self {
            Property::Degree => "degree",
            Property::Betweenness => "betweenness",
            Property::Closeness => "closeness",
            Property::Clustering => "clustering",
            Property::SquareClustering => "square_clustering",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeProperties {
    pub degree_c: Vec<f64>,
    pub betweenness_c: Vec<f64>,
    pub closeness_c: Vec<f64>,
    pub clustering: Vec<f64>,
    pub square_clustering: Vec<f64>,
    /// Percentile ranks in [`Property::ALL`] order.
    pub ranks: [Vec<f64>; 5],
}

impl NodeProperties {
    pub fn num_nodes(&self) -> usize {
        self.degree_c.len()
    }

    pub fn values(&self, p: Property) -> &[f64] {
        match p {
            Property::Degree => &self.degree_c,
            Property::Betweenness => &self.betweenness_c,
            Property::Closeness => &self.closeness_c,
            Property::Clustering => &self.clustering,
            Property::SquareClustering => &self.square_clustering,
        }
    }

    pub fn ranks(&self, p: Property) -> &[f64] {
        let i = Property::ALL.iter().position(|&q| q == p).unwrap();
        &self.ranks[i]
    }

    /// CSV with one row per node, values to six decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node_id");
        for p in Property::ALL {
            write!(out, ",{}", p.column()).unwrap();
        }
        for p in Property::ALL {
            write!(out, ",rank_{}", p.column()).unwrap();
        }
        out.push('\n');
        for v in 0..self.num_nodes() {
            write!(out, "{v}").unwrap();
            for p in Property::ALL {
                write!(out, ",{:.6}", self.values(p)[v]).unwrap();
            }
            for p in Property::ALL {
                write!(out, ",{:.6}", self.ranks(p)[v]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Share of nodes with a strictly larger value, in percent. The maximum gets
/// 0 ("top 0%"); ties share a rank.
pub fn percentile_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    values
        .iter()
        .map(|&x| {
            let not_greater = sorted.partition_point(|&y| y <= x);
            100.0 * (n - not_greater) as f64 / n as f64
        })
        .collect()
}

pub fn compute_all(g: &Graph) -> Result<NodeProperties> {
    compute_all_with(g, Execution::default())
}

pub fn compute_all_with(g: &Graph, exec: Execution) -> Result<NodeProperties> {
    let degree_c = degree_centrality(g)?;
    let betweenness_c = betweenness_centrality_with(g, exec);
    let closeness_c = closeness_centrality_with(g, exec);
    let clustering = clustering_coefficient_with(g, exec);
    let square_clustering = square_clustering_with(g, exec);
    let ranks = [
        percentile_ranks(&degree_c),
        percentile_ranks(&betweenness_c),
        percentile_ranks(&closeness_c),
        percentile_ranks(&clustering),
        percentile_ranks(&square_clustering),
    ];
    Ok(NodeProperties {
        degree_c,
        betweenness_c,
        closeness_c,
        clustering,
        square_clustering,
        ranks,
    })
}
