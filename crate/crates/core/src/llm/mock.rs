//! Offline stand-in for the chat model.
//!
//! The answer names `k` classes picked by hashing the prompt, followed by
//! one sentence per property sentence found in the prompt, describing the
//! node's rank as a tier ("very high" .. "very low").

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{LlmRequest, LlmResponse, ResponseSource, TokenUsage};
use crate::error::{Error, Result};

const CLASSES_START: &str = "The classes include ";
const CLASSES_END: &str = ". Your answer should be";
const K_START: &str = "Output the potential ";

fn parse_classes(prompt: &str) -> Result<Vec<&str>> {
    let start = prompt.rfind(CLASSES_START).ok_or(Error::ClassListMissing)? + CLASSES_START.len();
    let len = prompt[start..].find(CLASSES_END).ok_or(Error::ClassListMissing)?;
    let classes: Vec<&str> = prompt[start..start + len]
        .split(", ")
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .collect();
    if classes.is_empty() {
        return Err(Error::ClassListMissing);
    }
    Ok(classes)
}

fn parse_k(prompt: &str) -> Option<usize> {
    let start = prompt.rfind(K_START)? + K_START.len();
    prompt[start..].split_whitespace().next()?.parse().ok()
}

fn tier(rank_percent: f64) -> &'static str {
    match rank_percent {
        r if r < 10.0 => "very high",
        r if r < 30.0 => "high",
        r if r < 70.0 => "moderate",
        r if r < 90.0 => "low",
        _ => "very low",
    }
}

/// (property name, rank %) for every "The value of X is V, ranked as R%"
/// sentence.
fn parse_properties(prompt: &str) -> Vec<(&str, f64)> {
    prompt
        .split("The value of ")
        .skip(1)
        .filter_map(|s| {
            let (name, rest) = s.split_once(" is ")?;
            let rank = rest.split_once("ranked as ")?.1.split_once('%')?.0;
            Some((name, rank.trim().parse().ok()?))
        })
        .collect()
}

pub fn query_mock(req: &LlmRequest) -> Result<LlmResponse> {
    req.validate()?;
    let classes = parse_classes(&req.prompt)?;
    let k = parse_k(&req.prompt).unwrap_or(1).clamp(1, classes.len());
    let digest = Sha256::digest(req.prompt.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(digest.into());
    let picked: Vec<&str> = rand::seq::index::sample(&mut rng, classes.len(), k)
        .into_iter()
        .map(|i| classes[i])
        .collect();

    let mut text = format!(
        "The node most likely belongs to the following {k} classes: {}.",
        picked.join(", ")
    );
    for (name, rank) in parse_properties(&req.prompt) {
        text.push_str(&format!(" Its {name} is {} compared with the other nodes.", tier(rank)));
    }
    text.push_str(" These classes follow from the node's position and connectivity in the graph.");

    Ok(LlmResponse {
        token_usage: TokenUsage {
            prompt_tokens: req.prompt.split_whitespace().count() as u64,
            completion_tokens: text.split_whitespace().count() as u64,
        },
        text,
        backend: ResponseSource::Mock,
    })
}
