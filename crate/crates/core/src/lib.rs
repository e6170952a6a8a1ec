//! Topology-aware node description synthesis.
//!
//! Converts plain graphs into text-attributed graphs: compute five
//! topological properties per node ([`topo`]), render them into prompts
//! ([`prompt`]), ask an LLM to explain each node ([`llm`]), embed the
//! resulting texts into aligned feature vectors ([`encoder`]), and evaluate
//! those features with a from-scratch GNN ([`gnn`]). [`features`] holds the
//! hand-designed baselines the generated features are compared against.

pub mod encoder;
pub mod error;
pub mod features;
pub mod gnn;
pub mod graph;
pub mod http;
pub mod llm;
pub mod par;
pub mod pipeline;
pub mod prompt;
pub mod split;
pub mod topo;

pub use error::{Error, Result};
pub use graph::{Graph, GraphMeta, TextRegime};
pub use par::Execution;
