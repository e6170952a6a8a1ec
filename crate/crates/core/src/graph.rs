//! Undirected simple graphs in compressed-row layout, plus dataset ingestion.
//!
//! External node ids are remapped to a dense `0..N` range on load, in
//! first-seen order. The original ids are kept in [`Graph::external_ids`] so
//! node tables and reports can refer back to them; nothing downstream of
//! ingestion ever sees an external id.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextRegime {
    TextRich,
    TextLimited,
    #[default]
    TextFree,
}

impl TextRegime {
    pub fn has_text(self) -> bool {
        self != TextRegime::TextFree
    }
}

impl std::str::FromStr for TextRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text-rich" => Ok(TextRegime::TextRich),
            "text-limited" | "text-limit" => Ok(TextRegime::TextLimited),
            "text-free" => Ok(TextRegime::TextFree),
            other => Err(Error::InvalidArgument(format!("unknown text regime '{other}'"))),
        }
    }
}

/// Descriptive metadata rendered into prompt prefixes and suffixes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub graph_type: String,
    pub node_type: String,
    pub edge_type: String,
    pub class_names: Vec<String>,
    pub text_regime: TextRegime,
}

impl GraphMeta {
    pub fn validate(&self) -> Result<()> {
        if self.class_names.is_empty() {
            return Err(Error::InvalidGraph("class_names is empty".into()));
        }
        let unique: BTreeSet<&str> = self.class_names.iter().map(String::as_str).collect();
        if unique.len() != self.class_names.len() {
            return Err(Error::InvalidGraph("class_names contains duplicates".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeListFormat {
    /// Whitespace-separated ids.
    Tsv,
    /// Comma-separated ids.
    Csv,
}

impl EdgeListFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => EdgeListFormat::Csv,
            _ => EdgeListFormat::Tsv,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    num_edges: usize,
    labels: Option<Vec<usize>>,
    texts: Option<Vec<String>>,
    external_ids: Vec<String>,
    pub meta: GraphMeta,
}

/// Summary produced by [`Graph::validate`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub isolated_nodes: Vec<usize>,
    pub unlabeled: bool,
}

impl Graph {
    /// Builds a graph on `num_nodes` nodes. Self-loops and duplicate edges
    /// (in either direction) are dropped.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)], meta: GraphMeta) -> Result<Self> {
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) out of range for {num_nodes} nodes"
                )));
            }
            if u == v {
                continue;
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        let mut neighbors = Vec::with_capacity(edges.len() * 2);
        offsets.push(0);
        for mut list in adjacency {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(&list);
            offsets.push(neighbors.len());
        }
        let num_edges = neighbors.len() / 2;
        Ok(Graph {
            offsets,
            neighbors,
            num_edges,
            labels: None,
            texts: None,
            external_ids: (0..num_nodes).map(|i| i.to_string()).collect(),
            meta,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    /// Sorted neighbor indices of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes())
            .flat_map(move |u| self.neighbors(u).iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn texts(&self) -> Option<&[String]> {
        self.texts.as_deref()
    }

    pub fn text(&self, v: usize) -> Option<&str> {
        self.texts.as_ref().map(|t| t[v].as_str())
    }

    pub fn external_ids(&self) -> &[String] {
        &self.external_ids
    }

    pub fn num_classes(&self) -> usize {
        self.meta.class_names.len()
    }

    pub fn set_labels(&mut self, labels: Vec<usize>) -> Result<()> {
        if labels.len() != self.num_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.num_nodes()
            )));
        }
        let num_classes = self.num_classes();
        if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                node,
                label,
                num_classes,
            });
        }
        self.labels = Some(labels);
        Ok(())
    }

    pub fn set_texts(&mut self, texts: Vec<String>) -> Result<()> {
        if texts.len() != self.num_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "{} texts for {} nodes",
                texts.len(),
                self.num_nodes()
            )));
        }
        self.texts = Some(texts);
        Ok(())
    }

    pub fn clear_texts(&mut self) {
        self.texts = None;
        self.meta.text_regime = TextRegime::TextFree;
    }

    /// Relabels nodes so that old node `v` becomes `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.num_nodes();
        if perm.len() != n {
            return Err(Error::DimensionMismatch(format!("permutation of length {} for {n} nodes", perm.len())));
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
        }
        let edges: Vec<(usize, usize)> = self.edges().map(|(u, v)| (perm[u], perm[v])).collect();
        let mut g = Graph::from_edges(n, &edges, self.meta.clone())?;
        let scatter = |src: &[String]| {
            let mut out = vec![String::new(); n];
            for (v, s) in src.iter().enumerate() {
                out[perm[v]] = s.clone();
            }
            out
        };
        g.external_ids = scatter(&self.external_ids);
        if let Some(labels) = &self.labels {
            let mut out = vec![0; n];
            for (v, &l) in labels.iter().enumerate() {
                out[perm[v]] = l;
            }
            g.labels = Some(out);
        }
        g.texts = self.texts.as_deref().map(scatter);
        Ok(g)
    }

    /// Checks structural invariants and reports isolated nodes.
    pub fn validate(&self) -> Result<ValidationReport> {
        let n = self.num_nodes();
        for v in 0..n {
            let nbrs = self.neighbors(v);
            if nbrs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidGraph(format!("neighbors of {v} not strictly sorted")));
            }
            for &u in nbrs {
                if u == v {
                    return Err(Error::InvalidGraph(format!("self-loop at {v}")));
                }
                if !self.has_edge(u, v) {
                    return Err(Error::InvalidGraph(format!("edge {v}-{u} is not symmetric")));
                }
            }
        }
        if let Some(labels) = &self.labels {
            self.meta.validate()?;
            if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= self.num_classes()) {
                return Err(Error::LabelOutOfRange {
                    node,
                    label,
                    num_classes: self.num_classes(),
                });
            }
        }
        let isolated_nodes: Vec<usize> = (0..n).filter(|&v| self.degree(v) == 0).collect();
        if !isolated_nodes.is_empty() {
            log::warn!("{} isolated node(s) retained", isolated_nodes.len());
        }
        Ok(ValidationReport {
            num_nodes: n,
            num_edges: self.num_edges,
            isolated_nodes,
            unlabeled: self.labels.is_none(),
        })
    }
}

/// A node visiting order that depends only on external ids, never on the
/// dense indices. Floating-point reductions over nodes iterate in this order
/// so that relabeling a graph relabels results bit-for-bit.
#[derive(Clone, Debug)]
pub struct CanonicalOrder {
    /// Dense node indices sorted by external id.
    pub order: Vec<usize>,
    /// Position of each node in `order`.
    pub rank: Vec<usize>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl CanonicalOrder {
    pub fn new(g: &Graph) -> Self {
        let n = g.num_nodes();
        let key = |v: usize| {
            let id = &g.external_ids[v];
            (id.parse::<u64>().unwrap_or(u64::MAX), id.as_str())
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| key(a).cmp(&key(b)));
        let mut rank = vec![0; n];
        for (r, &v) in order.iter().enumerate() {
            rank[v] = r;
        }
        let mut neighbors = g.neighbors.clone();
        for v in 0..n {
            neighbors[g.offsets[v]..g.offsets[v + 1]].sort_unstable_by_key(|&u| rank[u]);
        }
        CanonicalOrder {
            order,
            rank,
            offsets: g.offsets.clone(),
            neighbors,
        }
    }

    /// Neighbors of `v` in canonical order.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }
}

/// Reads an edge list with one `u v` pair per line. Lines starting with `#`
/// and blank lines are skipped; tokens past the second are ignored.
pub fn load_edge_list(path: &Path, format: EdgeListFormat) -> Result<Graph> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&content, format, path)
}

pub(crate) fn parse_edge_list(content: &str, format: EdgeListFormat, path: &Path) -> Result<Graph> {
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut external_ids = Vec::new();
    let mut edges = Vec::new();
    let mut intern = |id: u64| {
        *index.entry(id).or_insert_with(|| {
            external_ids.push(id.to_string());
            external_ids.len() - 1
        })
    };
    for (lineno, raw) in content.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens: Box<dyn Iterator<Item = &str>> = match format {
            EdgeListFormat::Tsv => Box::new(line.split_whitespace()),
            EdgeListFormat::Csv => Box::new(line.split(',').map(str::trim)),
        };
        let mut next_id = || -> Result<u64> {
            let tok = tokens.next().ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: "expected two node ids".into(),
            })?;
            tok.parse::<u64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("'{tok}' is not an integer node id"),
            })
        };
        let (a, b) = (next_id()?, next_id()?);
        let (u, v) = (intern(a), intern(b));
        edges.push((u, v));
    }
    if edges.is_empty() {
        return Err(Error::EmptyEdgeList(path.to_path_buf()));
    }
    let mut g = Graph::from_edges(external_ids.len(), &edges, GraphMeta::default())?;
    g.external_ids = external_ids;
    Ok(g)
}

/// Attaches labels (and texts, when a `text` column exists) from a node table
/// with header `node_id,label[,text]`. Comma, tab and single-space delimited
/// tables are accepted.
///
/// A label is either a class index or a class name. When the graph has no
/// class names yet, labels must be integers and the classes become `"0".."C-1"`.
pub fn attach_node_table(mut g: Graph, path: &Path) -> Result<Graph> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header = content.lines().next().unwrap_or_default();
    let delimiter = if header.contains(',') {
        b','
    } else if header.contains('\t') {
        b'\t'
    } else {
        b' '
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(content.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = column("node_id")
        .or_else(|| column("node"))
        .ok_or_else(|| parse_error(path, 1, "missing node_id column".into()))?;
    let label_col = column("label").ok_or_else(|| parse_error(path, 1, "missing label column".into()))?;
    let text_col = column("text");

    let index: HashMap<&str, usize> = g
        .external_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let n = g.num_nodes();
    let mut raw_labels: Vec<Option<String>> = vec![None; n];
    let mut texts: Option<Vec<String>> = text_col.map(|_| vec![String::new(); n]);
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_error(path, row + 2, e.to_string()))?;
        let field = |c: usize| record.get(c).map(str::trim).unwrap_or_default();
        let id = field(id_col);
        let v = *index.get(id).ok_or_else(|| Error::UnknownNode(id.to_string()))?;
        raw_labels[v] = Some(field(label_col).to_string());
        if let (Some(texts), Some(c)) = (texts.as_mut(), text_col) {
            texts[v] = record.get(c).unwrap_or_default().to_string();
        }
    }

    if g.meta.class_names.is_empty() {
        let mut max = 0usize;
        for (v, raw) in raw_labels.iter().enumerate() {
            let raw = raw.as_deref().ok_or_else(|| Error::InvalidGraph(format!("node {} has no label", g.external_ids[v])))?;
            let l: usize = raw
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("label '{raw}' is not a class index and no class names are configured")))?;
            max = max.max(l);
        }
        g.meta.class_names = (0..=max).map(|c| c.to_string()).collect();
    }
    let mut labels = Vec::with_capacity(n);
    for (v, raw) in raw_labels.iter().enumerate() {
        let raw = raw.as_deref().ok_or_else(|| Error::InvalidGraph(format!("node {} has no label", g.external_ids[v])))?;
        let label = match raw.parse::<usize>() {
            Ok(l) => l,
            Err(_) => g
                .meta
                .class_names
                .iter()
                .position(|c| c == raw)
                .ok_or_else(|| Error::UnknownClass(raw.to_string()))?,
        };
        labels.push(label);
    }
    g.set_labels(labels)?;
    match texts {
        Some(texts) => {
            if g.meta.text_regime == TextRegime::TextFree {
                g.meta.text_regime = TextRegime::TextRich;
            }
            g.texts = Some(texts);
        }
        None => g.meta.text_regime = TextRegime::TextFree,
    }
    Ok(g)
}

fn parse_error(path: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}

#[derive(Serialize, Deserialize)]
struct GraphDocument {
    meta: GraphMeta,
    num_nodes: usize,
    edges: Vec<[usize; 2]>,
    labels: Option<Vec<usize>>,
    texts: Option<Vec<String>>,
    #[serde(default)]
    node_ids: Option<Vec<String>>,
}

impl Graph {
    pub fn to_json(&self) -> Result<String> {
        let doc = GraphDocument {
            meta: self.meta.clone(),
            num_nodes: self.num_nodes(),
            edges: self.edges().map(|(u, v)| [u, v]).collect(),
            labels: self.labels.clone(),
            texts: self.texts.clone(),
            node_ids: Some(self.external_ids.clone()),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(json: &str) -> Result<Graph> {
        let doc: GraphDocument = serde_json::from_str(json)?;
        let edges: Vec<(usize, usize)> = doc.edges.iter().map(|e| (e[0], e[1])).collect();
        let mut g = Graph::from_edges(doc.num_nodes, &edges, doc.meta)?;
        if let Some(ids) = doc.node_ids {
            if ids.len() != doc.num_nodes {
                return Err(Error::DimensionMismatch("node_ids length".into()));
            }
            g.external_ids = ids;
        }
        if let Some(labels) = doc.labels {
            g.set_labels(labels)?;
        }
        if let Some(texts) = doc.texts {
            g.set_texts(texts)?;
        }
        Ok(g)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Graph> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Graph::from_json(&s)
    }
}
