use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{KinematicsError, PartId, Result, SemanticLabel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: PartId,
    pub label: SemanticLabel,
    #[serde(default)]
    pub parent: Option<PartId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct GraphWire {
    nodes: Vec<GraphNode>,
}

/// Rooted labeled tree of parts. Node order is significant: it fixes the row
/// order of the adjacency matrix and of the attribute tensor.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "GraphWire", into = "GraphWire")]
pub struct ConnectivityGraph {
    pub nodes: Vec<(PartId, SemanticLabel)>,
    pub parent_of: BTreeMap<PartId, PartId>,
}

impl From<GraphWire> for ConnectivityGraph {
    fn from(w: GraphWire) -> Self {
        ConnectivityGraph::from_nodes(w.nodes)
    }
}

impl From<ConnectivityGraph> for GraphWire {
    fn from(g: ConnectivityGraph) -> Self {
        GraphWire {
            nodes: g.node_list(),
        }
    }
}

impl ConnectivityGraph {
    pub fn from_nodes(nodes: impl IntoIterator<Item = GraphNode>) -> Self {
        let mut g = ConnectivityGraph::default();
        for n in nodes {
            g.nodes.push((n.id, n.label));
            if let Some(p) = n.parent {
                g.parent_of.insert(n.id, p);
            }
        }
        g
    }

    pub fn node_list(&self) -> Vec<GraphNode> {
        self.nodes
            .iter()
            .map(|&(id, label)| GraphNode {
                id,
                label,
                parent: self.parent_of.get(&id).copied(),
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, id: PartId) -> Option<usize> {
        self.nodes.iter().position(|&(n, _)| n == id)
    }

    pub fn label_of(&self, id: PartId) -> Option<SemanticLabel> {
        self.nodes.iter().find(|&&(n, _)| n == id).map(|&(_, l)| l)
    }

    pub fn parent(&self, id: PartId) -> Option<PartId> {
        self.parent_of.get(&id).copied()
    }

    pub fn root(&self) -> Option<PartId> {
        self.nodes
            .iter()
            .map(|&(id, _)| id)
            .find(|id| !self.parent_of.contains_key(id))
    }

    /// Children in node order.
    pub fn children(&self, id: PartId) -> Vec<PartId> {
        self.nodes
            .iter()
            .map(|&(c, _)| c)
            .filter(|c| self.parent_of.get(c) == Some(&id))
            .collect()
    }
}

pub fn validate_graph(g: &ConnectivityGraph) -> Result<()> {
    if g.nodes.is_empty() {
        return Err(KinematicsError::EmptyGraph);
    }
    let mut ids = BTreeSet::new();
    for &(id, _) in &g.nodes {
        if !ids.insert(id) {
            return Err(KinematicsError::DuplicateNode(id));
        }
    }
    for (&child, &parent) in &g.parent_of {
        if !ids.contains(&child) {
            return Err(KinematicsError::DisconnectedNode(child));
        }
        if !ids.contains(&parent) {
            return Err(KinematicsError::DanglingParent { child, parent });
        }
        if child == parent {
            return Err(KinematicsError::CycleDetected(child));
        }
    }
    let roots: Vec<PartId> = g
        .nodes
        .iter()
        .map(|&(id, _)| id)
        .filter(|id| !g.parent_of.contains_key(id))
        .collect();
    match roots.as_slice() {
        // Every node has a parent, so following parents must loop.
        [] => return Err(KinematicsError::CycleDetected(g.nodes[0].0)),
        [root] => {
            if g.label_of(*root) != Some(SemanticLabel::Base) {
                return Err(KinematicsError::RootNotBase(*root));
            }
        }
        _ => return Err(KinematicsError::MultipleRoots(roots)),
    }
    let root = roots[0];
    for &(id, _) in &g.nodes {
        let mut cur = id;
        let mut steps = 0;
        while cur != root {
            cur = match g.parent_of.get(&cur) {
                Some(&p) => p,
                None => return Err(KinematicsError::DisconnectedNode(id)),
            };
            steps += 1;
            if steps > g.nodes.len() {
                return Err(KinematicsError::CycleDetected(id));
            }
        }
    }
    Ok(())
}

/// Dense symmetric 0/1 matrix with self-loops on real nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    pub size: usize,
    pub n_nodes: usize,
    data: Vec<u8>,
}

impl AdjacencyMatrix {
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[i * self.size + j]
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.data.chunks(self.size).map(|r| r.to_vec()).collect()
    }

    /// Identity on the first `n_nodes` entries: what remains when the graph
    /// condition is withheld.
    pub fn self_only(size: usize, n_nodes: usize) -> Self {
        let mut data = vec![0u8; size * size];
        for i in 0..n_nodes {
            data[i * size + i] = 1;
        }
        AdjacencyMatrix {
            size,
            n_nodes,
            data,
        }
    }
}

pub fn adjacency_matrix(g: &ConnectivityGraph, n_max: usize) -> Result<AdjacencyMatrix> {
    validate_graph(g)?;
    let n = g.len();
    if n > n_max {
        return Err(KinematicsError::TooManyParts {
            count: n,
            max: n_max,
        });
    }
    let mut a = AdjacencyMatrix::self_only(n_max, n);
    for (&child, &parent) in &g.parent_of {
        let (i, j) = (
            g.index_of(child).expect("validated"),
            g.index_of(parent).expect("validated"),
        );
        a.data[i * n_max + j] = 1;
        a.data[j * n_max + i] = 1;
    }
    Ok(a)
}
