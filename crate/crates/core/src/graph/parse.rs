use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{GraphError, Result};
use crate::kinematics::{validate_graph, ConnectivityGraph, GraphNode, PartId, SemanticLabel};

const DEFAULT_SYNONYMS: &str = include_str!("../../assets/prompts/synonyms.json");

/// Maps free-text part names onto the six labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SynonymTable(pub BTreeMap<String, SemanticLabel>);

impl Default for SynonymTable {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_SYNONYMS).expect("bundled synonym table is valid")
    }
}

impl SynonymTable {
    pub fn resolve(&self, raw: &str) -> Result<SemanticLabel> {
        let key = raw.trim().to_ascii_lowercase().replace(['_', '-'], " ");
        let key = key.split_whitespace().collect::<Vec<_>>().join(" ");
        if let Ok(l) = SemanticLabel::from_str(&key) {
            return Ok(l);
        }
        if let Some(l) = self.0.get(&key) {
            return Ok(*l);
        }
        // plural forms
        if let Some(stem) = key.strip_suffix('s') {
            if let Ok(l) = SemanticLabel::from_str(stem) {
                return Ok(l);
            }
            if let Some(l) = self.0.get(stem) {
                return Ok(*l);
            }
        }
        Err(GraphError::UnknownLabel(raw.trim().to_string()))
    }
}

/// Body of the first fenced block, preferring one tagged `graph`.
fn fenced_block(text: &str) -> Option<&str> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let (tag, body_start) = match after.find('\n') {
            Some(nl) => (after[..nl].trim(), nl + 1),
            None => break,
        };
        let body = &after[body_start..];
        let Some(end) = body.find("```") else { break };
        blocks.push((tag, &body[..end]));
        rest = &body[end + 3..];
    }
    blocks
        .iter()
        .find(|(t, _)| t.eq_ignore_ascii_case("graph"))
        .or_else(|| blocks.first())
        .map(|(_, b)| *b)
}

/// Parses a model response. The fenced block holds entries separated by
/// newlines or `;`: node entries `<id> <label> [parent <id>]` and edge
/// entries `<parent> -> <child>`.
pub fn parse_response(text: &str, synonyms: &SynonymTable) -> Result<ConnectivityGraph> {
    let block = fenced_block(text).ok_or(GraphError::NoParseableBlock)?;
    let mut nodes: Vec<(PartId, SemanticLabel, Option<PartId>)> = Vec::new();
    let mut edges: Vec<(PartId, PartId)> = Vec::new();
    let bad = |entry: &str| GraphError::MalformedEntry(entry.to_string());
    for entry in block.split(['\n', ';']).map(str::trim).filter(|e| !e.is_empty()) {
        if let Some((p, c)) = entry.split_once("->") {
            let p = p.trim().parse().map_err(|_| bad(entry))?;
            let c = c.trim().parse().map_err(|_| bad(entry))?;
            edges.push((p, c));
            continue;
        }
        let entry_clean = entry.trim_start_matches(['-', '*']).trim();
        let mut words: Vec<&str> = entry_clean.split_whitespace().collect();
        let id: PartId = words
            .first()
            .and_then(|w| w.trim_end_matches([':', '.']).parse().ok())
            .ok_or_else(|| bad(entry))?;
        words.remove(0);
        let mut parent = None;
        if let Some(pos) = words.iter().position(|w| w.eq_ignore_ascii_case("parent")) {
            let pid = words.get(pos + 1).and_then(|w| w.trim_end_matches(['.', ',']).parse().ok());
            parent = Some(pid.ok_or_else(|| bad(entry))?);
            words.truncate(pos);
        }
        if words.is_empty() {
            return Err(bad(entry));
        }
        let label = synonyms.resolve(&words.join(" "))?;
        nodes.push((id, label, parent));
    }
    if nodes.is_empty() {
        return Err(GraphError::NoParseableBlock);
    }
    for (p, c) in edges {
        let node = nodes.iter_mut().find(|n| n.0 == c).ok_or(GraphError::MalformedEntry(format!("{p} -> {c}")))?;
        node.2 = Some(p);
    }
    let g = ConnectivityGraph::from_nodes(nodes.into_iter().map(|(id, label, parent)| GraphNode { id, label, parent }));
    validate_graph(&g)?;
    Ok(g)
}

/// Renders a graph in the response-block format accepted by
/// [`parse_response`].
pub fn format_graph(g: &ConnectivityGraph) -> String {
    let mut out = String::from("```graph\n");
    for n in g.node_list() {
        match n.parent {
            Some(p) => out.push_str(&format!("{} {} parent {}\n", n.id, n.label.as_str(), p)),
            None => out.push_str(&format!("{} {}\n", n.id, n.label.as_str())),
        }
    }
    out.push_str("```");
    out
}
