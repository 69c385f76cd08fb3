//! Deterministic graph predictor for synthetic-layout feature grids.

use crate::conditioning::{PatchFeatureGrid, GRID, N_PATCHES, SLOT_LABELS, SYNTH_DIM};
use crate::kinematics::{validate_graph, ConnectivityGraph, GraphNode, PartId, SemanticLabel};

use super::{format_graph, GraphError, GraphPrediction, GraphSource, Result};

/// 4-connected components of the patches where `present` holds, each as a
/// sorted list of patch indices, ordered by first patch.
fn components(present: &[bool]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; N_PATCHES];
    let mut out = Vec::new();
    for start in 0..N_PATCHES {
        if !present[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            comp.push(i);
            let (r, c) = (i / GRID, i % GRID);
            let mut nbrs = Vec::with_capacity(4);
            if r > 0 {
                nbrs.push(i - GRID);
            }
            if r + 1 < GRID {
                nbrs.push(i + GRID);
            }
            if c > 0 {
                nbrs.push(i - 1);
            }
            if c + 1 < GRID {
                nbrs.push(i + 1);
            }
            for n in nbrs {
                if present[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

fn patch_distance(a: &[usize], b: &[usize]) -> f64 {
    let xy = |i: usize| ((i % GRID) as f64, (i / GRID) as f64);
    a.iter()
        .flat_map(|&i| b.iter().map(move |&j| (xy(i), xy(j))))
        .map(|((x0, y0), (x1, y1))| (x0 - x1).hypot(y0 - y1))
        .fold(f64::INFINITY, f64::min)
}

/// Reads part count and labels off the label-fraction slots: every
/// connected region where a label is visible becomes one part. Base is always
/// part 0 and the root; handles and knobs hang off the closest door or
/// drawer region, everything else off Base.
pub fn predict_stub(features: &PatchFeatureGrid) -> Result<GraphPrediction> {
    if features.d_f != SYNTH_DIM {
        return Err(GraphError::NotSyntheticLayout(features.d_f));
    }
    let mut nodes = vec![GraphNode {
        id: 0,
        label: SemanticLabel::Base,
        parent: None,
    }];
    let mut movers: Vec<(PartId, Vec<usize>)> = Vec::new();
    let mut grips: Vec<(PartId, SemanticLabel, Vec<usize>)> = Vec::new();
    let mut next: PartId = 1;
    for label in SemanticLabel::ALL.into_iter().filter(|l| *l != SemanticLabel::Base) {
        let present: Vec<bool> = (0..N_PATCHES)
            .map(|i| features.patch(i)[SLOT_LABELS + label.index()] > 0.0)
            .collect();
        for comp in components(&present) {
            match label {
                SemanticLabel::Handle | SemanticLabel::Knob => grips.push((next, label, comp)),
                SemanticLabel::Door | SemanticLabel::Drawer => {
                    nodes.push(GraphNode {
                        id: next,
                        label,
                        parent: Some(0),
                    });
                    movers.push((next, comp));
                }
                _ => nodes.push(GraphNode {
                    id: next,
                    label,
                    parent: Some(0),
                }),
            }
            next += 1;
        }
    }
    for (id, label, comp) in grips {
        let parent = movers
            .iter()
            .map(|(m, c)| (*m, patch_distance(&comp, c)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map_or(0, |(m, _)| m);
        nodes.push(GraphNode {
            id,
            label,
            parent: Some(parent),
        });
    }
    nodes.sort_by_key(|n| n.id);
    let graph = ConnectivityGraph::from_nodes(nodes);
    validate_graph(&graph)?;
    Ok(GraphPrediction {
        raw_response: format_graph(&graph),
        graph,
        source: GraphSource::Stub,
        attempts: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::{synthetic_features, CameraSpec, DINO_DIM};
    use crate::graph::graph_topology_accuracy;
    use crate::kinematics::{Aabb, ArticulatedAbstraction, Joint, PartAbstraction, Vec3};

    fn part(id: PartId, label: SemanticLabel, bbox: Aabb, joint: Joint, parent: Option<PartId>) -> PartAbstraction {
        PartAbstraction {
            id,
            label,
            bbox,
            joint,
            parent,
        }
    }

    fn base_door_handle() -> ArticulatedAbstraction {
        let door_box = Aabb::new(Vec3::new(0.5, -0.4, -0.6), Vec3::new(0.55, 0.4, 0.6));
        ArticulatedAbstraction::new(vec![
            part(0, SemanticLabel::Base, Aabb::cube(-0.5, 0.5), Joint::fixed(), None),
            part(
                1,
                SemanticLabel::Door,
                door_box,
                Joint::revolute(Vec3::new(0.5, -0.4, 0.0), Vec3::new(0.0, 0.0, -1.0), [0.0, 1.5]),
                Some(0),
            ),
            part(
                2,
                SemanticLabel::Handle,
                Aabb::new(Vec3::new(0.55, 0.25, -0.15), Vec3::new(0.6, 0.3, 0.15)),
                Joint::fixed(),
                Some(1),
            ),
        ])
    }

    #[test]
    fn single_part() {
        let obj = ArticulatedAbstraction::new(vec![part(0, SemanticLabel::Base, Aabb::cube(-0.5, 0.5), Joint::fixed(), None)]);
        let (g, _) = synthetic_features(&obj, &CameraSpec::default()).unwrap();
        let p = predict_stub(&g).unwrap();
        assert_eq!(p.graph.len(), 1);
        assert_eq!(p.graph.label_of(0), Some(SemanticLabel::Base));
        assert_eq!(p.source, GraphSource::Stub);
    }

    #[test]
    fn handle_under_door() {
        let obj = base_door_handle();
        let (g, _) = synthetic_features(&obj, &CameraSpec::default()).unwrap();
        let p = predict_stub(&g).unwrap();
        assert_eq!(graph_topology_accuracy(&p.graph, &obj.graph()), 1, "{}", p.raw_response);
    }

    #[test]
    fn dino_layout_rejected() {
        assert!(matches!(
            predict_stub(&PatchFeatureGrid::zeros(DINO_DIM)),
            Err(GraphError::NotSyntheticLayout(768))
        ));
    }

    #[test]
    fn grip_without_movers_goes_to_base() {
        let mut g = PatchFeatureGrid::zeros(SYNTH_DIM);
        g.patch_mut(17)[SLOT_LABELS + SemanticLabel::Knob.index()] = 0.3;
        let p = predict_stub(&g).unwrap();
        assert_eq!(p.graph.parent(1), Some(0));
    }
}
