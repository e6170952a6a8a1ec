use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{LlmClient, LlmRequest, DEFAULT_MODEL};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::prompt::PromptBundle;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthOptions {
    /// Maximum requests in flight.
    pub concurrency: usize,
    pub model: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            concurrency: 8,
            model: DEFAULT_MODEL.into(),
            max_tokens: 512,
            temperature: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextRecord {
    pub node_id: usize,
    pub original_text: Option<String>,
    pub generated_text: String,
    pub final_text: String,
}

impl TextRecord {
    /// Appends the generated text to the original one when there is an
    /// original; otherwise the generated text stands alone.
    pub fn assemble(node_id: usize, original_text: Option<String>, generated_text: String) -> Self {
        let final_text = match original_text.as_deref() {
            Some(orig) if !orig.is_empty() => format!("{orig} {generated_text}"),
            _ => generated_text.clone(),
        };
        TextRecord {
            node_id,
            original_text,
            generated_text,
            final_text,
        }
    }
}

/// Queries the client for every bundle with at most `opts.concurrency`
/// requests in flight. Records come back ordered by node id. If any node is
/// left without text the whole run fails; partial outputs are never returned.
pub fn synthesize_node_texts(
    g: &Graph,
    bundles: &[PromptBundle],
    client: &LlmClient,
    opts: &SynthOptions,
) -> Result<Vec<TextRecord>> {
    let n = g.num_nodes();
    if bundles.len() != n {
        return Err(Error::DimensionMismatch(format!("{} prompts for {n} nodes", bundles.len())));
    }
    let mut seen = vec![false; n];
    for b in bundles {
        if b.node_id >= n || std::mem::replace(&mut seen[b.node_id], true) {
            return Err(Error::InvalidArgument(format!("bad or duplicate prompt for node {}", b.node_id)));
        }
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<String>)>> = Mutex::new(Vec::with_capacity(n));
    let workers = opts.concurrency.clamp(1, n.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(bundle) = bundles.get(i) else { break };
                let req = LlmRequest {
                    model: opts.model.clone(),
                    prompt: bundle.assembled.clone(),
                    max_tokens: opts.max_tokens,
                    temperature: opts.temperature,
                };
                let outcome = client.query(&req).map(|r| r.text);
                results.lock().unwrap().push((bundle.node_id, outcome));
            });
        }
    });

    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(v, _)| *v);
    let failures: Vec<(usize, &Error)> = results
        .iter()
        .filter_map(|(v, r)| r.as_ref().err().map(|e| (*v, e)))
        .collect();
    if let Some(&(first_node, first_error)) = failures.first() {
        return Err(Error::SynthesisIncomplete {
            failed: failures.len(),
            first_node,
            first_error: first_error.to_string(),
        });
    }
    let with_text = g.meta.text_regime.has_text();
    Ok(results
        .into_iter()
        .map(|(v, r)| {
            let original = if with_text { g.text(v).map(str::to_string) } else { None };
            TextRecord::assemble(v, original, r.expect("failures handled above"))
        })
        .collect())
}

pub fn write_records(records: &[TextRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<TextRecord>> {
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
    use crate::graph::{GraphMeta, TextRegime};
    use crate::llm::{Backend, ResponseCache};
    use crate::prompt::{build_prompts, PromptOptions};
    use crate::topo;

    fn airport_like(text: bool) -> Graph {
        let edges: Vec<_> = (0..30).map(|i| (i, (i * 7 + 3) % 30)).chain((0..29).map(|i| (i, i + 1))).collect();
        let meta = GraphMeta {
            graph_type: "airport".into(),
            node_type: "airport".into(),
            edge_type: "flight".into(),
            class_names: vec!["low".into(), "mid-low".into(), "mid-high".into(), "high".into()],
            text_regime: if text { TextRegime::TextLimited } else { TextRegime::TextFree },
        };
        let mut g = Graph::from_edges(30, &edges, meta).unwrap();
        if text {
            g.set_texts((0..30).map(|i| format!("airport number {i}")).collect()).unwrap();
        }
        g
    }

    fn run(g: &Graph, client: &LlmClient) -> Vec<TextRecord> {
        let props = topo::compute_all(g).unwrap();
        let bundles = build_prompts(g, &props, &PromptOptions::default()).unwrap();
        synthesize_node_texts(g, &bundles, client, &SynthOptions::default()).unwrap()
    }

    #[test]
    fn text_free_uses_generated_text() {
        let g = airport_like(false);
        let records = run(&g, &LlmClient::new(Backend::Mock, None));
        assert_eq!(records.len(), 30);
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.node_id, i);
            assert_eq!(r.original_text, None);
            assert_eq!(r.final_text, r.generated_text);
        }
    }

    #[test]
    fn text_rich_appends() {
        let g = airport_like(true);
        for r in run(&g, &LlmClient::new(Backend::Mock, None)) {
            let orig = r.original_text.as_deref().unwrap();
            assert!(r.final_text.starts_with(orig));
            assert_eq!(r.final_text, format!("{orig} {}", r.generated_text));
        }
    }

    #[test]
    fn warm_cache_reproduces_records() {
        let dir = tempfile::tempdir().unwrap();
        let g = airport_like(true);
        let cold = LlmClient::new(Backend::Mock, Some(ResponseCache::new(dir.path()).unwrap()));
        let first = run(&g, &cold);
        let warm = LlmClient::new(Backend::Mock, Some(ResponseCache::new(dir.path()).unwrap()));
        assert_eq!(run(&g, &warm), first);
        assert_eq!(warm.cache.as_ref().unwrap().len(), 30);
    }

    #[test]
    fn rejects_bundle_count_mismatch() {
        let g = airport_like(false);
        let props = topo::compute_all(&g).unwrap();
        let bundles = build_prompts(&g, &props, &PromptOptions::default()).unwrap();
        let client = LlmClient::new(Backend::Mock, None);
        assert!(synthesize_node_texts(&g, &bundles[1..], &client, &SynthOptions::default()).is_err());
    }

    #[test]
    fn any_failure_fails_the_run() {
        let mut g = airport_like(false);
        g.meta.class_names = vec!["only".into()];
        let props = topo::compute_all(&g).unwrap();
        let mut bundles = build_prompts(&g, &props, &PromptOptions::default()).unwrap();
        // A prompt without a class list makes the mock backend fail for node 4.
        bundles[4].assembled = "broken".into();
        let client = LlmClient::new(Backend::Mock, None);
        match synthesize_node_texts(&g, &bundles, &client, &SynthOptions::default()) {
            Err(Error::SynthesisIncomplete { failed, first_node, .. }) => assert_eq!((failed, first_node), (1, 4)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
