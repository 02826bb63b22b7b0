//! CLEAR-MOT accuracy: per-frame ground truth to hypothesis assignment and
//! FP / FN / ID-switch accumulation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::graph::{AssociationGraph, Edge};
use crate::matching::solve_graph;
use crate::model::{iou, BoundingBox, MatchSolver, TrackId};

/// Minimum IOU for a ground truth object and a hypothesis to correspond.
pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("frame {frame}: ground truth id {gt_id} appears twice")]
    DuplicateGt { frame: u32, gt_id: u64 },
    #[error("frame {frame}: track id {track_id} appears twice")]
    DuplicateTrack { frame: u32, track_id: TrackId },
    #[error("no ground truth objects; MOTA is undefined")]
    EmptyGroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtEntry {
    pub frame_index: u32,
    pub gt_id: u64,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameAssignment {
    /// `(gt_id, track_id)`, sorted by gt id.
    pub pairs: Vec<(u64, TrackId)>,
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
}

/// Assigns one frame.
///
/// Correspondences from `prev_map` (last track matched to each gt id) are
/// kept while their IOU stays at or above 0.5; the remaining objects and
/// hypotheses are paired to maximise total IOU among pairs with IOU >= 0.5.
/// A matched gt id whose track differs from its `prev_map` entry counts as
/// an identity switch.
pub fn assign_frame(
    frame: u32,
    gt: &[(u64, BoundingBox)],
    hyp: &[(TrackId, BoundingBox)],
    prev_map: &HashMap<u64, TrackId>,
) -> Result<FrameAssignment, MetricsError> {
    let mut seen = BTreeSet::new();
    for (g, _) in gt {
        if !seen.insert(*g) {
            return Err(MetricsError::DuplicateGt { frame, gt_id: *g });
        }
    }
    let mut seen = BTreeSet::new();
    for (h, _) in hyp {
        if !seen.insert(*h) {
            return Err(MetricsError::DuplicateTrack { frame, track_id: *h });
        }
    }

    let mut gt_used = vec![false; gt.len()];
    let mut hyp_used = vec![false; hyp.len()];
    let mut pairs: Vec<(u64, TrackId)> = Vec::new();

    for (gi, (gid, gbox)) in gt.iter().enumerate() {
        let Some(tid) = prev_map.get(gid) else { continue };
        if let Some(hi) = hyp.iter().position(|(h, _)| h == tid) {
            if !hyp_used[hi] && iou(gbox, &hyp[hi].1) >= MATCH_IOU {
                gt_used[gi] = true;
                hyp_used[hi] = true;
                pairs.push((*gid, *tid));
            }
        }
    }

    let free_gt: Vec<usize> = (0..gt.len()).filter(|&i| !gt_used[i]).collect();
    let free_hyp: Vec<usize> = (0..hyp.len()).filter(|&i| !hyp_used[i]).collect();
    let mut edges = Vec::new();
    for (a, &gi) in free_gt.iter().enumerate() {
        for (b, &hi) in free_hyp.iter().enumerate() {
            let v = iou(&gt[gi].1, &hyp[hi].1);
            if v >= MATCH_IOU {
                edges.push(Edge {
                    prev: a,
                    next: b,
                    weight: v,
                });
            }
        }
    }
    let graph = AssociationGraph::from_edges(free_gt.len(), free_hyp.len(), edges);
    let matching = solve_graph(&graph, 0.0, MatchSolver::Exact);
    let mut idsw = 0;
    for (a, b) in matching.pairs {
        let (gid, _) = gt[free_gt[a]];
        let (tid, _) = hyp[free_hyp[b]];
        if prev_map.get(&gid).is_some_and(|prev| *prev != tid) {
            idsw += 1;
        }
        pairs.push((gid, tid));
    }
    pairs.sort_unstable();

    Ok(FrameAssignment {
        fp: hyp.len() - pairs.len(),
        fn_: gt.len() - pairs.len(),
        idsw,
        pairs,
    })
}

pub fn mota(fn_: usize, fp: usize, idsw: usize, gt_total: usize) -> Result<f64, MetricsError> {
    if gt_total == 0 {
        return Err(MetricsError::EmptyGroundTruth);
    }
    Ok(1.0 - (fn_ + fp + idsw) as f64 / gt_total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
    pub gt_total: usize,
    pub mota: f64,
}

impl MetricsReport {
    /// Flat `key=value` lines.
    pub fn to_key_values(&self) -> String {
        format!(
            "mota={}\nfp={}\nfn={}\nidsw={}\ngt={}\n",
            self.mota, self.fp, self.fn_, self.idsw, self.gt_total
        )
    }

    /// Aligned table with one row labelled `label`.
    pub fn table(&self, label: &str) -> String {
        let width = label.len().max(8);
        format!(
            "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}\n{:<width$}  {:>8.1}  {:>8}  {:>8}  {:>8}  {:>8}\n",
            "Method",
            "MOTA(%)",
            "FP",
            "FN",
            "IDSW",
            "GT",
            label,
            self.mota * 100.0,
            self.fp,
            self.fn_,
            self.idsw,
            self.gt_total,
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "MOTA={} FP={} FN={} IDSW={} GT={}",
            self.mota, self.fp, self.fn_, self.idsw, self.gt_total
        )
    }
}

/// Running CLEAR-MOT counts for one sequence. Frames must be fed in order.
#[derive(Debug, Clone, Default)]
pub struct MotAccumulator {
    fp: usize,
    fn_: usize,
    idsw: usize,
    gt_total: usize,
    matches: usize,
    last_match: HashMap<u64, TrackId>,
}

impl MotAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(
        &mut self,
        frame: u32,
        gt: &[(u64, BoundingBox)],
        hyp: &[(TrackId, BoundingBox)],
    ) -> Result<FrameAssignment, MetricsError> {
        let a = assign_frame(frame, gt, hyp, &self.last_match)?;
        for &(g, t) in &a.pairs {
            self.last_match.insert(g, t);
        }
        self.fp += a.fp;
        self.fn_ += a.fn_;
        self.idsw += a.idsw;
        self.gt_total += gt.len();
        self.matches += a.pairs.len();
        Ok(a)
    }

    pub fn matches(&self) -> usize {
        self.matches
    }

    pub fn report(&self) -> Result<MetricsReport, MetricsError> {
        Ok(MetricsReport {
            fp: self.fp,
            fn_: self.fn_,
            idsw: self.idsw,
            gt_total: self.gt_total,
            mota: mota(self.fn_, self.fp, self.idsw, self.gt_total)?,
        })
    }
}

/// One hypothesis box of a tracker output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisBox {
    pub frame_index: u32,
    pub track_id: TrackId,
    pub bbox: BoundingBox,
}

/// Scores a whole sequence. Frames present in either input are visited in
/// ascending order.
pub fn evaluate(gt: &[GtEntry], hyp: &[HypothesisBox]) -> Result<MetricsReport, MetricsError> {
    type FrameBoxes = (Vec<(u64, BoundingBox)>, Vec<(TrackId, BoundingBox)>);
    let mut frames: BTreeMap<u32, FrameBoxes> = BTreeMap::new();
    for g in gt {
        frames.entry(g.frame_index).or_default().0.push((g.gt_id, g.bbox));
    }
    for h in hyp {
        frames.entry(h.frame_index).or_default().1.push((h.track_id, h.bbox));
    }
    let mut acc = MotAccumulator::new();
    for (frame, (g, h)) in &frames {
        acc.update(*frame, g, h)?;
    }
    acc.report()
}
