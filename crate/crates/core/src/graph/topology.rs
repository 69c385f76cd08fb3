use crate::kinematics::{ConnectivityGraph, PartId};

/// Canonical string of the labeled rooted tree below `id`: the label followed
/// by the sorted canonical strings of the children.
fn canonical_below(g: &ConnectivityGraph, id: PartId) -> String {
    let mut kids: Vec<String> = g.children(id).into_iter().map(|c| canonical_below(g, c)).collect();
    kids.sort_unstable();
    let label = g.label_of(id).map_or("?", |l| l.as_str());
    format!("{label}({})", kids.join(","))
}

/// Canonical form of the whole tree, or `None` without a unique root.
pub fn canonical_form(g: &ConnectivityGraph) -> Option<String> {
    g.root().map(|r| canonical_below(g, r))
}

/// 1 when the two trees are isomorphic as labeled rooted trees with
/// unordered children, else 0.
pub fn graph_topology_accuracy(pred: &ConnectivityGraph, gt: &ConnectivityGraph) -> u8 {
    match (canonical_form(pred), canonical_form(gt)) {
        (Some(a), Some(b)) if a == b => 1,
        _ => 0,
    }
}
