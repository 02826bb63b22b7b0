//! Per-frame tracking loop with the tracking / lost / left lifecycle.
//!
//! Each step associates the active tracks with the incoming detections.
//! Tracks that find no partner either leave the scene (near a border, or
//! after too long in `Lost`) or are carried forward by a hypothetical
//! observation extrapolated from their average velocity.

use std::sync::Arc;

use thiserror::Error;

use crate::appearance::PcaBasis;
use crate::graph::{build_graph, AssociationGraph, GraphError, GraphNode, NodeRef, Side};
use crate::matching::{solve_graph, Matching};
use crate::model::{
    AppearanceMode, BoundingBox, Detection, FeatureBundle, ModelError, Observation, ObservationSource, Track, TrackId,
    TrackState, TrackerConfig,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("detection {det_index} carries frame {found}, expected frame {expected}")]
    FrameMismatch {
        det_index: usize,
        expected: u32,
        found: u32,
    },
    #[error("got {features} feature bundles for {detections} detections")]
    FeatureCount { detections: usize, features: usize },
    #[error("detection {det_index} of frame {frame}: {reason}")]
    BadFeature {
        frame: u32,
        det_index: usize,
        reason: String,
    },
    #[error("deep appearance mode requires a PCA basis; fit one before stepping")]
    MissingBasis,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Born,
    Extended,
    Recovered,
    Lost,
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackEvent {
    pub frame_index: u32,
    pub track_id: TrackId,
    pub kind: EventKind,
}

/// What happened during one `step`: lifecycle events plus the association
/// graph and the global matching (`(prev index, detection index)`).
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub events: Vec<TrackEvent>,
    pub graph: AssociationGraph,
    pub matching: Matching,
}

/// Average velocity in px/s from the first observation to the latest one,
/// evaluated when stepping into `current_frame`.
pub fn velocity(t: &Track, current_frame: u32, cfg: &TrackerConfig) -> (f64, f64) {
    if t.observations.len() < 2 || current_frame <= t.first_frame {
        return (0.0, 0.0);
    }
    let (x0, y0) = t.first().bbox.center();
    let (x1, y1) = t.last().bbox.center();
    let elapsed = (current_frame - t.first_frame) as f64 / cfg.fps;
    ((x1 - x0) / elapsed, (y1 - y0) / elapsed)
}

/// Position one frame ahead of the latest observation.
pub fn predict_position(t: &Track, current_frame: u32, cfg: &TrackerConfig) -> BoundingBox {
    let last = t.last().bbox;
    let (vx, vy) = velocity(t, current_frame, cfg);
    let scale = if cfg.literal_eq10 { cfg.fps } else { 1.0 / cfg.fps };
    let (cx, cy) = last.center();
    BoundingBox {
        x: cx + vx * scale - last.w / 2.0,
        y: cy + vy * scale - last.h / 2.0,
        w: last.w,
        h: last.h,
    }
}

/// `Left` when the last known centre sits inside the border band or the
/// track has already spent `max_lost_frames` frames lost; `Lost` otherwise.
pub fn classify_missing(t: &Track, cfg: &TrackerConfig) -> TrackState {
    let (cx, cy) = t.last().bbox.center();
    let mx = cfg.border_margin_frac * cfg.frame_width;
    let my = cfg.border_margin_frac * cfg.frame_height;
    let near_border = cx < mx || cx > cfg.frame_width - mx || cy < my || cy > cfg.frame_height - my;
    if near_border || t.lost_count >= cfg.max_lost_frames {
        TrackState::Left
    } else {
        TrackState::Lost
    }
}

/// Appends a hypothetical observation at `current_frame`. Features stay
/// frozen at the last real observation.
pub fn spawn_hypothetical(t: &mut Track, current_frame: u32, cfg: &TrackerConfig) -> Observation {
    let obs = Observation {
        frame_index: current_frame,
        bbox: predict_position(t, current_frame, cfg),
        source: ObservationSource::Hypothetical,
    };
    t.observations.push(obs);
    t.lost_count += 1;
    obs
}

#[derive(Debug, Clone)]
pub struct TrackerEngine {
    config: TrackerConfig,
    tracks: Vec<Track>,
    next_track_id: u64,
    current_frame: u32,
    pca_basis: Option<PcaBasis>,
}

impl TrackerEngine {
    pub fn new(config: TrackerConfig) -> Result<Self, EngineError> {
        config.validate()?;
        Ok(Self {
            config,
            tracks: Vec::new(),
            next_track_id: 1,
            current_frame: 0,
            pca_basis: None,
        })
    }

    pub fn with_pca_basis(mut self, basis: PcaBasis) -> Self {
        self.pca_basis = Some(basis);
        self
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// All tracks ever created, in id order.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn into_tracks(self) -> Vec<Track> {
        self.tracks
    }

    pub fn current_frame(&self) -> u32 {
        self.current_frame
    }

    pub fn active_count(&self) -> usize {
        self.tracks.iter().filter(|t| t.state.is_active()).count()
    }

    fn check_features(&self, frame: u32, features: &[FeatureBundle]) -> Result<(), EngineError> {
        let bad = |det_index: usize, reason: String| EngineError::BadFeature {
            frame,
            det_index,
            reason,
        };
        let bins = self.config.hist_bins_per_channel.pow(3);
        for (i, f) in features.iter().enumerate() {
            match self.config.appearance_mode {
                AppearanceMode::SiftHist => {
                    let Some(h) = &f.histogram else {
                        return Err(bad(i, "missing histogram required by sift appearance mode".into()));
                    };
                    if h.len() != bins {
                        return Err(bad(i, format!("histogram has {} bins, expected {bins}", h.len())));
                    }
                    if f.descriptors.is_none() {
                        return Err(bad(i, "missing descriptors required by sift appearance mode".into()));
                    }
                }
                AppearanceMode::Deep => {
                    let Some(v) = &f.deep_vector else {
                        return Err(bad(i, "missing deep vector required by deep appearance mode".into()));
                    };
                    let basis = self.pca_basis.as_ref().ok_or(EngineError::MissingBasis)?;
                    if v.len() != basis.dim() {
                        return Err(bad(
                            i,
                            format!("deep vector has {} entries, basis expects {}", v.len(), basis.dim()),
                        ));
                    }
                }
                AppearanceMode::None => {}
            }
            if f.descriptor_dim().is_err() {
                return Err(bad(i, "descriptors have inconsistent dimensions".into()));
            }
        }
        Ok(())
    }

    /// Consumes the detections of frame `current_frame + 1`.
    pub fn step(&mut self, detections: &[Detection], features: &[FeatureBundle]) -> Result<StepOutcome, EngineError> {
        let frame = self.current_frame + 1;
        if features.len() != detections.len() {
            return Err(EngineError::FeatureCount {
                detections: detections.len(),
                features: features.len(),
            });
        }
        if let Some(d) = detections.iter().find(|d| d.frame_index != frame) {
            return Err(EngineError::FrameMismatch {
                det_index: d.det_index,
                expected: frame,
                found: d.frame_index,
            });
        }
        if self.config.appearance_mode == AppearanceMode::Deep && self.pca_basis.is_none() {
            return Err(EngineError::MissingBasis);
        }
        self.check_features(frame, features)?;

        let active: Vec<usize> = (0..self.tracks.len())
            .filter(|&i| self.tracks[i].state.is_active())
            .collect();
        let prev: Vec<GraphNode> = active
            .iter()
            .map(|&i| {
                let t = &self.tracks[i];
                GraphNode {
                    side: Side::Prev,
                    node: NodeRef::Track(t.id),
                    bbox: t.last().bbox,
                    features: Arc::clone(&t.last_features),
                }
            })
            .collect();
        let det_features: Vec<Arc<FeatureBundle>> = features.iter().cloned().map(Arc::new).collect();
        let next: Vec<GraphNode> = detections
            .iter()
            .zip(&det_features)
            .map(|(d, f)| GraphNode {
                side: Side::Next,
                node: NodeRef::Detection {
                    frame_index: d.frame_index,
                    det_index: d.det_index,
                },
                bbox: d.bbox,
                features: Arc::clone(f),
            })
            .collect();

        let graph = build_graph(&prev, &next, &self.config, self.pca_basis.as_ref())?;
        let matching = solve_graph(&graph, self.config.min_match_weight, self.config.solver);
        debug_assert_eq!(matching.validate(&graph), Ok(()));

        let mut events = Vec::new();
        let mut prev_matched = vec![None; active.len()];
        let mut det_taken = vec![false; detections.len()];
        for &(p, n) in &matching.pairs {
            prev_matched[p] = Some(n);
            det_taken[n] = true;
        }

        for (slot, &ti) in active.iter().enumerate() {
            let cfg = &self.config;
            let t = &mut self.tracks[ti];
            match prev_matched[slot] {
                Some(n) => {
                    let kind = if t.state == TrackState::Lost {
                        t.state = t.state.transition(TrackState::Tracking)?;
                        EventKind::Recovered
                    } else {
                        EventKind::Extended
                    };
                    t.observations.push(Observation {
                        frame_index: frame,
                        bbox: detections[n].bbox,
                        source: ObservationSource::Observed,
                    });
                    t.lost_count = 0;
                    t.last_features = Arc::clone(&det_features[n]);
                    events.push(TrackEvent {
                        frame_index: frame,
                        track_id: t.id,
                        kind,
                    });
                }
                None => match classify_missing(t, cfg) {
                    TrackState::Left => {
                        t.state = t.state.transition(TrackState::Left)?;
                        events.push(TrackEvent {
                            frame_index: frame,
                            track_id: t.id,
                            kind: EventKind::Left,
                        });
                    }
                    _ => {
                        if t.state == TrackState::Tracking {
                            t.state = t.state.transition(TrackState::Lost)?;
                            events.push(TrackEvent {
                                frame_index: frame,
                                track_id: t.id,
                                kind: EventKind::Lost,
                            });
                        }
                        spawn_hypothetical(t, frame, cfg);
                    }
                },
            }
        }

        for (n, d) in detections.iter().enumerate() {
            if det_taken[n] {
                continue;
            }
            let id = TrackId(self.next_track_id);
            self.next_track_id += 1;
            self.tracks
                .push(Track::new(id, frame, d.bbox, Arc::clone(&det_features[n])));
            events.push(TrackEvent {
                frame_index: frame,
                track_id: id,
                kind: EventKind::Born,
            });
        }

        self.current_frame = frame;
        log::trace!(
            "frame {frame}: {} edges, {} matches",
            graph.edges.len(),
            matching.pairs.len()
        );
        Ok(StepOutcome {
            events,
            graph,
            matching,
        })
    }
}
