//! Per-node prompt assembly: prefix, optional node text, optional neighbor
//! text, five property sentences, and the class-prediction suffix.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphMeta};
use crate::par::{self, Execution};
use crate::topo::{NodeProperties, Property};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptOptions {
    pub include_node_text: bool,
    pub include_neighbor_text: bool,
    pub neighbor_sample_k: usize,
    pub seed: u64,
    pub word_limit: usize,
    pub top_k_override: Option<usize>,
    /// State the edge count with every undirected edge counted in both
    /// directions, the convention of the usual dataset statistics (Cora:
    /// 10556 for 5278 edges).
    pub count_both_directions: bool,
}

impl Default for PromptOptions {
    fn default() -> Self {
        PromptOptions {
            include_node_text: true,
            include_neighbor_text: true,
            neighbor_sample_k: 5,
            seed: 0,
            word_limit: 200,
            top_k_override: None,
            count_both_directions: true,
        }
    }
}

impl PromptOptions {
    pub fn validate(&self) -> Result<()> {
        if self.word_limit == 0 {
            return Err(Error::InvalidArgument("word_limit must be positive".into()));
        }
        if self.top_k_override == Some(0) {
            return Err(Error::InvalidArgument("top_k_override must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptParts {
    pub prefix: String,
    pub node_text: String,
    pub neighbor_text: String,
    pub property: String,
    pub suffix: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub node_id: usize,
    #[serde(rename = "prompt")]
    pub assembled: String,
    pub parts: PromptParts,
}

impl PromptBundle {
    pub fn new(node_id: usize, parts: PromptParts) -> Self {
        let assembled = [
            &parts.prefix,
            &parts.node_text,
            &parts.neighbor_text,
            &parts.property,
            &parts.suffix,
        ]
        .into_iter()
        .filter(|p| !p.is_empty())
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join(" ");
        PromptBundle {
            node_id,
            assembled,
            parts,
        }
    }
}

/// Collapses every run of whitespace that contains a line break into one
/// space and trims the ends.
fn one_line(text: &str) -> String {
    text.split(['\n', '\r'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn render_prefix(meta: &GraphMeta, num_nodes: usize, num_edges: usize) -> Result<String> {
    for (field, value) in [
        ("graph_type", &meta.graph_type),
        ("node_type", &meta.node_type),
        ("edge_type", &meta.edge_type),
    ] {
        if value.trim().is_empty() {
            return Err(Error::InvalidArgument(format!("{field} is empty")));
        }
    }
    Ok(format!(
        "Given a node from a {} graph, where the node type is {} with {num_nodes} nodes, \
         and the edge type is {} with {num_edges} edges.",
        meta.graph_type, meta.node_type, meta.edge_type
    ))
}

pub fn render_node_text(text: &str) -> String {
    let text = one_line(text);
    if text.is_empty() {
        return String::new();
    }
    format!("The original node description is {text}.")
}

/// Samples up to `k` distinct neighbors of `v` and renders their texts in
/// sampled order. The generator is seeded with `seed ^ v`, so each node's
/// sample is independent of every other node's.
pub fn sample_and_render_neighbors(g: &Graph, v: usize, opts: &PromptOptions) -> String {
    if !g.meta.text_regime.has_text() || opts.neighbor_sample_k == 0 {
        return String::new();
    }
    let Some(texts) = g.texts() else {
        return String::new();
    };
    let neighbors = g.neighbors(v);
    let k = opts.neighbor_sample_k.min(neighbors.len());
    if k == 0 {
        return String::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ v as u64);
    let descriptions: Vec<String> = rand::seq::index::sample(&mut rng, neighbors.len(), k)
        .into_iter()
        .map(|i| one_line(&texts[neighbors[i]]))
        .filter(|t| !t.is_empty())
        .collect();
    if descriptions.is_empty() {
        return String::new();
    }
    format!(
        "The following are the textual information of {} connected nodes. The descriptions are: {}.",
        descriptions.len(),
        descriptions.join("; ")
    )
}

/// One sentence per property in [`Property::ALL`] order. Values are printed
/// to four decimals, ranks to the nearest whole percent.
pub fn render_property_part(props: &NodeProperties, v: usize, num_nodes: usize) -> String {
    Property::ALL
        .iter()
        .map(|&p| {
            format!(
                "The value of {} is {:.4}, ranked as {}% among {num_nodes} nodes.",
                p.display_name(),
                props.values(p)[v],
                props.ranks(p)[v].round() as i64
            )
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Number of classes the LLM is asked for: 3 when there are more than three
/// classes, otherwise 1.
pub fn top_k(num_classes: usize, override_k: Option<usize>) -> usize {
    override_k.unwrap_or(if num_classes > 3 { 3 } else { 1 })
}

pub fn render_suffix(class_names: &[String], override_k: Option<usize>, word_limit: usize) -> Result<String> {
    if class_names.is_empty() {
        return Err(Error::InvalidArgument("no class names".into()));
    }
    Ok(format!(
        "Output the potential {} classes of the node and provide reasons for your assessment. \
         The classes include {}. Your answer should be less than {word_limit} words.",
        top_k(class_names.len(), override_k),
        class_names.join(", ")
    ))
}

pub fn build_prompts(g: &Graph, props: &NodeProperties, opts: &PromptOptions) -> Result<Vec<PromptBundle>> {
    build_prompts_with(g, props, opts, Execution::default())
}

pub fn build_prompts_with(
    g: &Graph,
    props: &NodeProperties,
    opts: &PromptOptions,
    exec: Execution,
) -> Result<Vec<PromptBundle>> {
    opts.validate()?;
    let n = g.num_nodes();
    if props.num_nodes() != n {
        return Err(Error::DimensionMismatch(format!(
            "properties cover {} nodes, graph has {n}",
            props.num_nodes()
        )));
    }
    let m = if opts.count_both_directions { 2 * g.num_edges() } else { g.num_edges() };
    let prefix = render_prefix(&g.meta, n, m)?;
    let suffix = render_suffix(&g.meta.class_names, opts.top_k_override, opts.word_limit)?;
    let with_text = g.meta.text_regime.has_text();
    Ok(par::map_range(n, exec, |v| {
        let node_text = match g.text(v) {
            Some(t) if with_text && opts.include_node_text => render_node_text(t),
            _ => String::new(),
        };
        let neighbor_text = if opts.include_neighbor_text {
            sample_and_render_neighbors(g, v, opts)
        } else {
            String::new()
        };
        PromptBundle::new(
            v,
            PromptParts {
                prefix: prefix.clone(),
                node_text,
                neighbor_text,
                property: render_property_part(props, v, n),
                suffix: suffix.clone(),
            },
        )
    }))
}

pub fn write_jsonl(bundles: &[PromptBundle], path: &Path) -> Result<()> {
    let mut out = String::new();
    for b in bundles {
        out.push_str(&serde_json::to_string(b)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<PromptBundle>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    content
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TextRegime;
    use crate::topo;

    fn citation_meta() -> GraphMeta {
        GraphMeta {
            graph_type: "citation".into(),
            node_type: "paper".into(),
            edge_type: "citation".into(),
            class_names: vec!["A".into(), "B".into(), "C".into(), "D".into()],
            text_regime: TextRegime::TextRich,
        }
    }

    #[test]
    fn prefix_row() {
        assert_eq!(
            render_prefix(&citation_meta(), 2708, 10556).unwrap(),
            "Given a node from a citation graph, where the node type is paper with 2708 nodes, \
             and the edge type is citation with 10556 edges."
        );
        let mut meta = citation_meta();
        meta.graph_type.clear();
        assert!(render_prefix(&meta, 1, 1).is_err());
        let p = render_prefix(&citation_meta(), 3, 2).unwrap();
        assert!(!p.contains('{') && !p.contains('}'));
    }

    #[test]
    fn node_text_row() {
        assert_eq!(render_node_text("GNNs are..."), "The original node description is GNNs are....");
        assert_eq!(render_node_text(""), "");
        assert_eq!(render_node_text("  \n "), "");
        assert_eq!(render_node_text("line one\nline two\r\n"), "The original node description is line one line two.");
    }

    #[test]
    fn suffix_top_k() {
        let names = |n: usize| (0..n).map(|i| format!("c{i}")).collect::<Vec<_>>();
        assert!(render_suffix(&names(7), None, 200).unwrap().starts_with("Output the potential 3 classes"));
        assert!(render_suffix(&names(3), None, 200).unwrap().starts_with("Output the potential 1 classes"));
        assert!(render_suffix(&names(4), None, 200).unwrap().starts_with("Output the potential 3 classes"));
        assert!(render_suffix(&names(4), Some(2), 200).unwrap().starts_with("Output the potential 2 classes"));
        assert_eq!(
            render_suffix(&names(2), None, 200).unwrap(),
            "Output the potential 1 classes of the node and provide reasons for your assessment. \
             The classes include c0, c1. Your answer should be less than 200 words."
        );
        assert!(render_suffix(&[], None, 200).is_err());
    }

    fn star_with_texts(leaves: usize) -> Graph {
        let edges: Vec<_> = (1..=leaves).map(|i| (0, i)).collect();
        let mut g = Graph::from_edges(leaves + 1, &edges, citation_meta()).unwrap();
        g.set_texts((0..=leaves).map(|i| format!("text {i}")).collect()).unwrap();
        g
    }

    #[test]
    fn neighbor_sampling_min_rule() {
        let g = star_with_texts(2);
        let part = sample_and_render_neighbors(&g, 0, &PromptOptions::default());
        assert!(part.starts_with("The following are the textual information of 2 connected nodes."));
        assert!(part.contains("text 1") && part.contains("text 2"));
    }

    #[test]
    fn neighbor_sampling_is_deterministic_and_distinct() {
        let g = star_with_texts(10);
        let opts = PromptOptions::default();
        let a = sample_and_render_neighbors(&g, 0, &opts);
        assert_eq!(a, sample_and_render_neighbors(&g, 0, &opts));
        let list = a.split("are: ").nth(1).unwrap().trim_end_matches('.');
        let picked: Vec<&str> = list.split("; ").collect();
        assert_eq!(picked.len(), 5);
        let unique: std::collections::BTreeSet<_> = picked.iter().collect();
        assert_eq!(unique.len(), 5);
        assert!(!picked.contains(&"text 0"));
    }

    #[test]
    fn text_free_has_no_neighbor_part() {
        let mut g = star_with_texts(3);
        g.clear_texts();
        assert_eq!(sample_and_render_neighbors(&g, 0, &PromptOptions::default()), "");
    }

    #[test]
    fn property_sentences() {
        let g = star_with_texts(3);
        let props = topo::compute_all(&g).unwrap();
        let part = render_property_part(&props, 0, 4);
        assert_eq!(part.matches("The value of").count(), 5);
        assert!(part.starts_with("The value of Degree Centrality is 1.0000, ranked as 0% among 4 nodes."));
        assert!(part.contains("The value of Closeness Centrality is 1.0000, ranked as 0% among 4 nodes."));
        let leaf = render_property_part(&props, 1, 4);
        assert!(leaf.starts_with("The value of Degree Centrality is 0.3333, ranked as 25% among 4 nodes."));
    }

    #[test]
    fn assembled_is_parts_in_order() {
        let g = star_with_texts(6);
        let props = topo::compute_all(&g).unwrap();
        for b in build_prompts(&g, &props, &PromptOptions::default()).unwrap() {
            let p = &b.parts;
            let expected = format!("{} {} {} {} {}", p.prefix, p.node_text, p.neighbor_text, p.property, p.suffix);
            assert_eq!(b.assembled, expected);
        }
    }

    #[test]
    fn ablation_and_text_free_variants() {
        let g = star_with_texts(6);
        let props = topo::compute_all(&g).unwrap();
        let opts = PromptOptions {
            include_neighbor_text: false,
            ..Default::default()
        };
        assert!(build_prompts(&g, &props, &opts).unwrap().iter().all(|b| b.parts.neighbor_text.is_empty()));

        let mut free = g.clone();
        free.clear_texts();
        for b in build_prompts(&free, &props, &PromptOptions::default()).unwrap() {
            assert!(b.parts.node_text.is_empty() && b.parts.neighbor_text.is_empty());
            assert_eq!(b.assembled, format!("{} {} {}", b.parts.prefix, b.parts.property, b.parts.suffix));
        }
    }

    #[test]
    fn rerun_is_identical() {
        let g = star_with_texts(9);
        let props = topo::compute_all(&g).unwrap();
        let opts = PromptOptions::default();
        assert_eq!(
            build_prompts_with(&g, &props, &opts, Execution::Sequential).unwrap(),
            build_prompts_with(&g, &props, &opts, Execution::Parallel).unwrap()
        );
    }

    #[test]
    fn rejects_mismatched_properties() {
        let g = star_with_texts(3);
        let props = topo::compute_all(&star_with_texts(4)).unwrap();
        assert!(matches!(
            build_prompts(&g, &props, &PromptOptions::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
