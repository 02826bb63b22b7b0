//! Graph-based multi-object tracking by detection.
//!
//! Each frame, active tracks and new detections form a bipartite graph whose
//! edges survive an IOU gate and are weighted by a blend of motion overlap
//! and appearance similarity. Every connected component is solved as a
//! maximum-weight matching. Unmatched tracks either leave the scene or are
//! bridged through occlusion with velocity-extrapolated hypothetical
//! observations. CLEAR-MOT metrics score the result.

pub mod appearance;
pub mod graph;
pub mod io;
pub mod matching;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod tracker;

pub use appearance::{AppearanceError, PcaBasis};
pub use graph::{build_graph, connected_components, AssociationGraph, GraphError};
pub use io::{FormatError, SequenceBundle};
pub use matching::{solve_graph, Matching};
pub use metrics::{evaluate, GtEntry, HypothesisBox, MetricsError, MetricsReport};
pub use model::{
    iou, AppearanceMode, BoundingBox, Detection, FeatureBundle, MatchSolver, ModelError, ObservationSource, Track,
    TrackId, TrackState, TrackerConfig,
};
pub use tracker::{EngineError, TrackerEngine};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Appearance(#[from] AppearanceError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
