//! Frame-to-frame association graph: IOU-pruned bipartite edges weighted by
//! a blend of motion and appearance affinity, split into connected
//! components.

use std::sync::Arc;

use thiserror::Error;

use crate::appearance::{appearance_deep, appearance_sift, AppearanceError, PcaBasis};
use crate::model::{iou, AppearanceMode, BoundingBox, FeatureBundle, TrackId, TrackerConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("appearance for {node}: {source}")]
    Appearance {
        node: NodeRef,
        #[source]
        source: AppearanceError,
    },
    #[error("deep appearance mode requires a fitted PCA basis")]
    MissingBasis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Prev,
    Next,
}

/// Identity of a graph node outside the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeRef {
    Track(TrackId),
    Detection {
        frame_index: u32,
        det_index: usize,
    },
    /// Plain positional node, used where the caller keeps its own mapping.
    Slot(usize),
}

impl std::fmt::Display for NodeRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeRef::Track(id) => write!(f, "track {id}"),
            NodeRef::Detection { frame_index, det_index } => {
                write!(f, "detection {det_index} of frame {frame_index}")
            }
            NodeRef::Slot(i) => write!(f, "node {i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub side: Side,
    pub node: NodeRef,
    pub bbox: BoundingBox,
    pub features: Arc<FeatureBundle>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub prev: usize,
    pub next: usize,
    pub weight: f64,
}

/// Bipartite graph between the active tracks (prev side) and the
/// detections of the incoming frame (next side).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssociationGraph {
    pub prev_nodes: Vec<NodeRef>,
    pub next_nodes: Vec<NodeRef>,
    /// Sorted by `(prev, next)`, no duplicates.
    pub edges: Vec<Edge>,
}

impl AssociationGraph {
    /// Graph over positional nodes. Edges are sorted; a duplicate pair or
    /// an out-of-range index panics.
    pub fn from_edges(prev_len: usize, next_len: usize, mut edges: Vec<Edge>) -> Self {
        edges.sort_by_key(|e| (e.prev, e.next));
        for w in edges.windows(2) {
            assert!(
                (w[0].prev, w[0].next) != (w[1].prev, w[1].next),
                "duplicate edge ({}, {})",
                w[0].prev,
                w[0].next
            );
        }
        assert!(edges.iter().all(|e| e.prev < prev_len && e.next < next_len));
        Self {
            prev_nodes: (0..prev_len).map(NodeRef::Slot).collect(),
            next_nodes: (0..next_len).map(NodeRef::Slot).collect(),
            edges,
        }
    }

    pub fn edge(&self, prev: usize, next: usize) -> Option<&Edge> {
        self.edges
            .binary_search_by_key(&(prev, next), |e| (e.prev, e.next))
            .ok()
            .map(|i| &self.edges[i])
    }
}

/// Motion affinity between consecutive positions.
pub fn motion_score(a: &BoundingBox, b: &BoundingBox) -> f64 {
    iou(a, b)
}

/// `alpha * motion + beta * appearance`; with appearance disabled only the
/// motion term remains.
pub fn edge_weight(
    prev: &GraphNode,
    next: &GraphNode,
    cfg: &TrackerConfig,
    basis: Option<&PcaBasis>,
) -> Result<f64, GraphError> {
    let motion = motion_score(&prev.bbox, &next.bbox);
    let appearance = appearance_score(prev, next, cfg, basis)?;
    Ok(combine(cfg, motion, appearance))
}

pub(crate) fn combine(cfg: &TrackerConfig, motion: f64, appearance: Option<f64>) -> f64 {
    match appearance {
        Some(a) => cfg.alpha * motion + cfg.beta * a,
        None => cfg.alpha * motion,
    }
}

fn appearance_score(
    prev: &GraphNode,
    next: &GraphNode,
    cfg: &TrackerConfig,
    basis: Option<&PcaBasis>,
) -> Result<Option<f64>, GraphError> {
    // report the node whose data is missing, not just the pair
    let blame = |e: AppearanceError| {
        let node = match &e {
            AppearanceError::MissingField(field) if field_missing(&prev.features, field) => prev.node,
            AppearanceError::MissingField(_) => next.node,
            _ => prev.node,
        };
        GraphError::Appearance { node, source: e }
    };
    match cfg.appearance_mode {
        AppearanceMode::None => Ok(None),
        AppearanceMode::SiftHist => appearance_sift(&prev.features, &next.features, cfg)
            .map(Some)
            .map_err(blame),
        AppearanceMode::Deep => {
            let basis = basis.ok_or(GraphError::MissingBasis)?;
            let s = appearance_deep(&prev.features, &next.features, basis).map_err(blame)?;
            if s.degenerate {
                log::debug!("degenerate deep projection between {} and {}", prev.node, next.node);
            }
            Ok(Some(s.score))
        }
    }
}

fn field_missing(f: &FeatureBundle, field: &str) -> bool {
    match field {
        "histogram" => f.histogram.is_none(),
        "descriptors" => f.descriptors.is_none(),
        "deep_vector" => f.deep_vector.is_none(),
        _ => false,
    }
}

/// Builds the pruned graph: an edge exists where IOU strictly exceeds the
/// prune threshold. Node order follows the inputs.
pub fn build_graph(
    prev: &[GraphNode],
    next: &[GraphNode],
    cfg: &TrackerConfig,
    basis: Option<&PcaBasis>,
) -> Result<AssociationGraph, GraphError> {
    let mut edges = Vec::new();
    for (i, p) in prev.iter().enumerate() {
        for (j, n) in next.iter().enumerate() {
            let overlap = iou(&p.bbox, &n.bbox);
            if overlap > cfg.iou_prune_threshold {
                let appearance = appearance_score(p, n, cfg, basis)?;
                edges.push(Edge {
                    prev: i,
                    next: j,
                    weight: combine(cfg, overlap, appearance),
                });
            }
        }
    }
    Ok(AssociationGraph {
        prev_nodes: prev.iter().map(|n| n.node).collect(),
        next_nodes: next.iter().map(|n| n.node).collect(),
        edges,
    })
}

/// One connected piece of an association graph. `graph` uses local
/// indices; `prev_index` / `next_index` map them back to the parent.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub graph: AssociationGraph,
    pub prev_index: Vec<usize>,
    pub next_index: Vec<usize>,
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so roots stay deterministic
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Splits the graph into maximal connected components. Isolated nodes form
/// singleton components. Components are ordered by their smallest prev
/// index, then smallest next index (components without prev nodes last).
pub fn connected_components(g: &AssociationGraph) -> Vec<Component> {
    let np = g.prev_nodes.len();
    let nn = g.next_nodes.len();
    let mut ds = DisjointSet::new(np + nn);
    for e in &g.edges {
        ds.union(e.prev, np + e.next);
    }

    let mut groups: std::collections::BTreeMap<usize, (Vec<usize>, Vec<usize>)> = Default::default();
    for i in 0..np {
        groups.entry(ds.find(i)).or_default().0.push(i);
    }
    for j in 0..nn {
        groups.entry(ds.find(np + j)).or_default().1.push(j);
    }

    let mut comps: Vec<Component> = groups
        .into_values()
        .map(|(prev_index, next_index)| {
            let mut prev_local = vec![usize::MAX; np];
            let mut next_local = vec![usize::MAX; nn];
            prev_index.iter().enumerate().for_each(|(l, &g)| prev_local[g] = l);
            next_index.iter().enumerate().for_each(|(l, &g)| next_local[g] = l);
            let edges = g
                .edges
                .iter()
                .filter(|e| prev_local[e.prev] != usize::MAX)
                .map(|e| Edge {
                    prev: prev_local[e.prev],
                    next: next_local[e.next],
                    weight: e.weight,
                })
                .collect();
            Component {
                graph: AssociationGraph {
                    prev_nodes: prev_index.iter().map(|&i| g.prev_nodes[i]).collect(),
                    next_nodes: next_index.iter().map(|&j| g.next_nodes[j]).collect(),
                    edges,
                },
                prev_index,
                next_index,
            }
        })
        .collect();
    comps.sort_by_key(|c| {
        (
            c.prev_index.first().copied().unwrap_or(usize::MAX),
            c.next_index.first().copied().unwrap_or(usize::MAX),
        )
    });
    comps
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn node(side: Side, i: usize, b: (f64, f64, f64, f64)) -> GraphNode {
        GraphNode {
            side,
            node: NodeRef::Slot(i),
            bbox: BoundingBox::new(b.0, b.1, b.2, b.3).unwrap(),
            features: Arc::new(FeatureBundle::default()),
        }
    }

    fn motion_only() -> TrackerConfig {
        TrackerConfig {
            alpha: 1.0,
            beta: 0.0,
            appearance_mode: AppearanceMode::None,
            ..Default::default()
        }
    }

    #[test]
    fn motion_examples() {
        let a = BoundingBox::new(0., 0., 10., 10.).unwrap();
        assert_eq!(motion_score(&a, &a), 1.0);
        assert_eq!(motion_score(&a, &BoundingBox::new(50., 50., 5., 5.).unwrap()), 0.0);
        let b = BoundingBox::new(5., 0., 10., 10.).unwrap();
        assert!((motion_score(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn weight_examples() {
        // IOU of these two boxes is exactly 0.5
        let p = node(Side::Prev, 0, (0., 0., 30., 10.));
        let n = node(Side::Next, 0, (10., 0., 30., 10.));
        assert!((edge_weight(&p, &n, &motion_only(), None).unwrap() - 0.5).abs() < 1e-12);

        let cfg = TrackerConfig {
            alpha: 0.0,
            beta: 1.0,
            ..Default::default()
        };
        assert!((combine(&cfg, 0.6, Some(0.8)) - 0.8).abs() < 1e-12);
        let cfg = TrackerConfig {
            alpha: 0.5,
            beta: 0.5,
            ..Default::default()
        };
        assert!((combine(&cfg, 0.6, Some(0.8)) - 0.7).abs() < 1e-12);
        // beta ignored without an appearance model
        assert!((combine(&cfg, 0.6, None) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn missing_features_name_the_node() {
        let p = node(Side::Prev, 0, (0., 0., 10., 10.));
        let mut n = node(Side::Next, 1, (0., 0., 10., 10.));
        let cfg = TrackerConfig::default();
        match edge_weight(&p, &n, &cfg, None) {
            Err(GraphError::Appearance { node, .. }) => assert_eq!(node, NodeRef::Slot(0)),
            other => panic!("unexpected {other:?}"),
        }
        let mut p = p;
        p.features = Arc::new(FeatureBundle {
            histogram: Some(vec![1.0]),
            descriptors: Some(vec![vec![0.0]]),
            deep_vector: None,
        });
        n.features = Arc::new(FeatureBundle::default());
        let err = edge_weight(&p, &n, &cfg, None).unwrap_err();
        assert!(err.to_string().contains("node 1"), "{err}");
        let deep = TrackerConfig {
            appearance_mode: AppearanceMode::Deep,
            ..Default::default()
        };
        assert_eq!(edge_weight(&p, &n, &deep, None), Err(GraphError::MissingBasis));
    }

    #[test]
    fn build_examples() {
        let cfg = motion_only();
        let prev = vec![
            node(Side::Prev, 0, (0., 0., 10., 10.)),
            node(Side::Prev, 1, (100., 0., 10., 10.)),
        ];
        let g = build_graph(&prev, &[], &cfg, None).unwrap();
        assert_eq!(g.prev_nodes.len(), 2);
        assert!(g.edges.is_empty());

        let next = vec![
            node(Side::Next, 0, (300., 300., 10., 10.)),
            node(Side::Next, 1, (0., 0., 10., 10.)),
        ];
        let g = build_graph(&prev, &next, &cfg, None).unwrap();
        assert_eq!(
            g.edges,
            vec![Edge {
                prev: 0,
                next: 1,
                weight: 1.0
            }]
        );
    }

    fn random_nodes(rng: &mut ChaCha8Rng, side: Side, n: usize) -> Vec<GraphNode> {
        (0..n)
            .map(|i| {
                let x = rng.random_range(0.0..30.0);
                let y = rng.random_range(0.0..30.0);
                let w = rng.random_range(15.0..25.0);
                let h = rng.random_range(15.0..25.0);
                node(side, i, (x, y, w, h))
            })
            .collect()
    }

    #[test]
    fn build_matches_all_pairs_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = motion_only();
        for _ in 0..50 {
            let prev = random_nodes(&mut rng, Side::Prev, 5);
            let next = random_nodes(&mut rng, Side::Next, 5);
            let g = build_graph(&prev, &next, &cfg, None).unwrap();
            let mut want = Vec::new();
            for (i, p) in prev.iter().enumerate() {
                for (j, n) in next.iter().enumerate() {
                    if iou(&p.bbox, &n.bbox) > 0.6 {
                        want.push((i, j));
                    }
                }
            }
            let got: Vec<(usize, usize)> = g.edges.iter().map(|e| (e.prev, e.next)).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn pruning_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let prev = random_nodes(&mut rng, Side::Prev, 6);
            let next = random_nodes(&mut rng, Side::Next, 6);
            let sets: Vec<Vec<(usize, usize)>> = [0.3, 0.6, 0.9]
                .iter()
                .map(|&t| {
                    let cfg = TrackerConfig {
                        iou_prune_threshold: t,
                        ..motion_only()
                    };
                    build_graph(&prev, &next, &cfg, None)
                        .unwrap()
                        .edges
                        .iter()
                        .map(|e| (e.prev, e.next))
                        .collect()
                })
                .collect();
            for w in sets.windows(2) {
                assert!(w[1].iter().all(|e| w[0].contains(e)));
            }
        }
    }

    #[test]
    fn component_examples() {
        let g = AssociationGraph::from_edges(3, 2, vec![]);
        let comps = connected_components(&g);
        assert_eq!(comps.len(), 5);
        assert!(comps.iter().all(|c| c.prev_index.len() + c.next_index.len() == 1));

        let g = AssociationGraph::from_edges(
            3,
            2,
            vec![Edge {
                prev: 1,
                next: 0,
                weight: 0.4,
            }],
        );
        let comps = connected_components(&g);
        assert_eq!(comps.len(), 4);
        assert_eq!(comps[1].prev_index, vec![1]);
        assert_eq!(comps[1].next_index, vec![0]);
        assert_eq!(
            comps[1].graph.edges,
            vec![Edge {
                prev: 0,
                next: 0,
                weight: 0.4
            }]
        );
        // singleton next node comes last
        assert!(comps[3].prev_index.is_empty());
    }

    /// Labels every node with the smallest node id reachable from it.
    fn flood_labels(np: usize, nn: usize, edges: &[(usize, usize)]) -> Vec<usize> {
        let mut label: Vec<usize> = (0..np + nn).collect();
        loop {
            let mut changed = false;
            for &(p, n) in edges {
                let m = label[p].min(label[np + n]);
                for idx in [p, np + n] {
                    if label[idx] != m {
                        label[idx] = m;
                        changed = true;
                    }
                }
            }
            if !changed {
                return label;
            }
        }
    }

    #[test]
    fn components_match_flood_fill_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let (np, nn) = (6, 6);
            let mut pairs = Vec::new();
            for p in 0..np {
                for n in 0..nn {
                    if rng.random_bool(0.12) {
                        pairs.push((p, n));
                    }
                }
            }
            let edges = pairs
                .iter()
                .map(|&(p, n)| Edge {
                    prev: p,
                    next: n,
                    weight: 1.0,
                })
                .collect();
            let g = AssociationGraph::from_edges(np, nn, edges);
            let comps = connected_components(&g);
            let labels = flood_labels(np, nn, &pairs);
            let mut got = vec![usize::MAX; np + nn];
            for (ci, c) in comps.iter().enumerate() {
                c.prev_index.iter().for_each(|&p| got[p] = ci);
                c.next_index.iter().for_each(|&n| got[np + n] = ci);
                assert_eq!(
                    c.graph.edges.len(),
                    pairs.iter().filter(|(p, _)| c.prev_index.contains(p)).count()
                );
            }
            for a in 0..np + nn {
                for b in 0..np + nn {
                    assert_eq!(labels[a] == labels[b], got[a] == got[b]);
                }
            }
        }
    }
}
