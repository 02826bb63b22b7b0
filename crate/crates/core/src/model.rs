//! Domain types shared across the tracker: boxes, detections, feature
//! bundles, tracks and the tracker configuration.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid bounding box ({x}, {y}, {w}, {h}): width and height must be positive and all fields finite")]
    InvalidBox { x: f64, y: f64, w: f64, h: f64 },
    #[error("illegal track state transition {from:?} -> {to:?}")]
    IllegalTransition { from: TrackState, to: TrackState },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Axis-aligned box in pixels, top-left corner plus size. The right and
/// bottom edges are exclusive: `x2 = x + w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, ModelError> {
        let b = Self { x, y, w, h };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(ModelError::InvalidBox { x, y, w, h })
        }
    }

    /// Box of the given size centred on `(cx, cy)`.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, ModelError> {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) && self.w > 0.0 && self.h > 0.0
    }

    pub fn x2(&self) -> f64 {
        self.x + self.w
    }

    pub fn y2(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Box centre; this is the position used by the motion extrapolation.
    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }
}

/// Intersection over union of two valid boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let iw = (a.x2().min(b.x2()) - a.x.max(b.x)).max(0.0);
    let ih = (a.y2().min(b.y2()) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// One detector response. `det_index` is the position within its frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame_index: u32,
    pub det_index: usize,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

/// Appearance data attached to one detection. Any subset of the three
/// feature families may be present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureBundle {
    pub histogram: Option<Vec<f64>>,
    pub descriptors: Option<Vec<Vec<f64>>>,
    pub deep_vector: Option<Vec<f64>>,
}

impl FeatureBundle {
    pub fn is_empty(&self) -> bool {
        self.histogram.is_none() && self.descriptors.is_none() && self.deep_vector.is_none()
    }

    /// Common descriptor dimension, `None` when there are no descriptors.
    /// Errors when descriptors disagree on their dimension.
    pub fn descriptor_dim(&self) -> Result<Option<usize>, usize> {
        let Some(ds) = &self.descriptors else {
            return Ok(None);
        };
        let mut dim = None;
        for (i, d) in ds.iter().enumerate() {
            match dim {
                None => dim = Some(d.len()),
                Some(n) if n != d.len() => return Err(i),
                _ => {}
            }
        }
        Ok(dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrackState {
    Tracking,
    Lost,
    Left,
}

impl TrackState {
    pub fn is_legal(from: TrackState, to: TrackState) -> bool {
        use TrackState::*;
        matches!(
            (from, to),
            (Tracking, Lost) | (Tracking, Left) | (Lost, Tracking) | (Lost, Left)
        )
    }

    pub fn transition(self, to: TrackState) -> Result<TrackState, ModelError> {
        if Self::is_legal(self, to) {
            Ok(to)
        } else {
            Err(ModelError::IllegalTransition { from: self, to })
        }
    }

    pub fn is_active(self) -> bool {
        !matches!(self, TrackState::Left)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObservationSource {
    Observed,
    Hypothetical,
}

impl ObservationSource {
    pub fn code(self) -> char {
        match self {
            ObservationSource::Observed => 'O',
            ObservationSource::Hypothetical => 'H',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub frame_index: u32,
    pub bbox: BoundingBox,
    pub source: ObservationSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrackId(pub u64);

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An identity over time. Observations are contiguous in frame index and the
/// first one is always a real detection.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: TrackId,
    pub observations: Vec<Observation>,
    pub first_frame: u32,
    pub state: TrackState,
    pub lost_count: u32,
    /// Features of the most recent real observation; hypothetical
    /// observations reuse them unchanged.
    pub last_features: Arc<FeatureBundle>,
}

impl Track {
    pub fn new(id: TrackId, frame_index: u32, bbox: BoundingBox, features: Arc<FeatureBundle>) -> Self {
        Self {
            id,
            observations: vec![Observation {
                frame_index,
                bbox,
                source: ObservationSource::Observed,
            }],
            first_frame: frame_index,
            state: TrackState::Tracking,
            lost_count: 0,
            last_features: features,
        }
    }

    pub fn last(&self) -> &Observation {
        self.observations
            .last()
            .expect("a track always holds at least one observation")
    }

    pub fn first(&self) -> &Observation {
        &self.observations[0]
    }

    pub fn last_frame(&self) -> u32 {
        self.last().frame_index
    }

    pub fn hypothetical_count(&self) -> usize {
        self.observations
            .iter()
            .filter(|o| o.source == ObservationSource::Hypothetical)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppearanceMode {
    SiftHist,
    Deep,
    None,
}

impl AppearanceMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sift" | "sifthist" | "sift_hist" => Some(AppearanceMode::SiftHist),
            "deep" => Some(AppearanceMode::Deep),
            "none" => Some(AppearanceMode::None),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AppearanceMode::SiftHist => "sift",
            AppearanceMode::Deep => "deep",
            AppearanceMode::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchSolver {
    Exact,
    Greedy,
}

/// Tunables for association, appearance and occlusion handling.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Weight of the motion (IOU) term in the edge weight.
    pub alpha: f64,
    /// Weight of the appearance term in the edge weight.
    pub beta: f64,
    /// Edges exist only where IOU strictly exceeds this value.
    pub iou_prune_threshold: f64,
    pub appearance_mode: AppearanceMode,
    pub fps: f64,
    /// Number of consecutive missing frames a track may spend in `Lost`.
    pub max_lost_frames: u32,
    /// Border band, as a fraction of frame width/height, where a missing
    /// track is considered to have left the scene.
    pub border_margin_frac: f64,
    pub hist_bins_per_channel: usize,
    /// Lowe ratio for the two-nearest-neighbour descriptor test.
    pub knn_ratio: f64,
    /// Fraction of the deep feature dimension kept after PCA.
    pub pca_fraction: f64,
    /// Number of leading frames whose deep features fit the PCA basis.
    pub pca_fit_frames: u32,
    /// Divide the keypoint match count by the smaller keypoint set size.
    pub sift_match_normalization: bool,
    pub frame_width: f64,
    pub frame_height: f64,
    pub min_match_weight: f64,
    /// Extrapolate with `velocity * fps` instead of `velocity / fps`.
    pub literal_eq10: bool,
    pub solver: MatchSolver,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            iou_prune_threshold: 0.6,
            appearance_mode: AppearanceMode::SiftHist,
            fps: 25.0,
            max_lost_frames: 25,
            border_margin_frac: 0.05,
            hist_bins_per_channel: 8,
            knn_ratio: 0.8,
            pca_fraction: 0.1,
            pca_fit_frames: 50,
            sift_match_normalization: true,
            frame_width: 960.0,
            frame_height: 540.0,
            min_match_weight: 0.0,
            literal_eq10: false,
            solver: MatchSolver::Exact,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::InvalidConfig(msg.to_string()));
        if !(self.alpha >= 0.0 && self.beta >= 0.0) || !self.alpha.is_finite() || !self.beta.is_finite() {
            return bad("alpha and beta must be finite and non-negative");
        }
        if self.alpha + self.beta <= 0.0 {
            return bad("alpha + beta must be positive");
        }
        if !(0.0..=1.0).contains(&self.iou_prune_threshold) {
            return bad("iou_prune_threshold must lie in [0, 1]");
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad("fps must be positive");
        }
        if !(0.0..=0.5).contains(&self.border_margin_frac) {
            return bad("border_margin_frac must lie in [0, 0.5]");
        }
        if self.hist_bins_per_channel < 2 {
            return bad("hist_bins_per_channel must be at least 2");
        }
        if !(self.knn_ratio > 0.0 && self.knn_ratio <= 1.0) {
            return bad("knn_ratio must lie in (0, 1]");
        }
        if !(self.pca_fraction > 0.0 && self.pca_fraction <= 1.0) {
            return bad("pca_fraction must lie in (0, 1]");
        }
        if !(self.frame_width > 0.0 && self.frame_height > 0.0) {
            return bad("frame dimensions must be positive");
        }
        if self.min_match_weight.is_nan() || self.min_match_weight < 0.0 {
            return bad("min_match_weight must be non-negative");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    /// Counts unit pixels covered by both / either box on an integer grid.
    fn raster_iou(a: (i32, i32, i32, i32), b: (i32, i32, i32, i32)) -> f64 {
        let inside =
            |r: (i32, i32, i32, i32), px: i32, py: i32| px >= r.0 && px < r.0 + r.2 && py >= r.1 && py < r.1 + r.3;
        let (mut inter, mut union) = (0u64, 0u64);
        let lo_x = a.0.min(b.0);
        let hi_x = (a.0 + a.2).max(b.0 + b.2);
        let lo_y = a.1.min(b.1);
        let hi_y = (a.1 + a.3).max(b.1 + b.3);
        for py in lo_y..hi_y {
            for px in lo_x..hi_x {
                let (ia, ib) = (inside(a, px, py), inside(b, px, py));
                if ia && ib {
                    inter += 1;
                }
                if ia || ib {
                    union += 1;
                }
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&bx(0., 0., 10., 10.), &bx(0., 0., 10., 10.)), 1.0);
        assert_eq!(iou(&bx(0., 0., 10., 10.), &bx(20., 20., 5., 5.)), 0.0);
        let oracle = raster_iou((0, 0, 10, 10), (5, 0, 10, 10));
        assert!((oracle - 1.0 / 3.0).abs() < 1e-12);
        assert!((iou(&bx(0., 0., 10., 10.), &bx(5., 0., 10., 10.)) - oracle).abs() < 1e-9);
    }

    #[test]
    fn touching_edges_do_not_overlap() {
        assert_eq!(iou(&bx(0., 0., 10., 10.), &bx(10., 0., 10., 10.)), 0.0);
    }

    #[test]
    fn degenerate_boxes_are_rejected() {
        assert!(BoundingBox::new(0., 0., 0., 5.).is_err());
        assert!(BoundingBox::new(0., 0., 5., -1.).is_err());
        assert!(BoundingBox::new(f64::NAN, 0., 5., 5.).is_err());
        assert!(BoundingBox::new(0., f64::INFINITY, 5., 5.).is_err());
    }

    #[test]
    fn center_round_trip() {
        assert_eq!(bx(0., 0., 10., 10.).center(), (5., 5.));
        assert_eq!(bx(2., 4., 6., 8.).center(), (5., 8.));
        let b = bx(2.5, -4., 6., 8.);
        let (cx, cy) = b.center();
        assert_eq!(BoundingBox::from_center(cx, cy, b.w, b.h).unwrap(), b);
    }

    #[test]
    fn state_transitions() {
        use TrackState::*;
        let all = [Tracking, Lost, Left];
        let legal = [(Tracking, Lost), (Tracking, Left), (Lost, Tracking), (Lost, Left)];
        for from in all {
            for to in all {
                let ok = from.transition(to).is_ok();
                assert_eq!(ok, legal.contains(&(from, to)), "{from:?} -> {to:?}");
            }
        }
    }

    #[test]
    fn default_config_is_valid() {
        TrackerConfig::default().validate().unwrap();
        let cfg = TrackerConfig {
            alpha: 0.0,
            beta: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn iou_symmetric_and_bounded(
            ax in -100.0..100.0f64, ay in -100.0..100.0f64, aw in 0.1..80.0f64, ah in 0.1..80.0f64,
            bx_ in -100.0..100.0f64, by in -100.0..100.0f64, bw in 0.1..80.0f64, bh in 0.1..80.0f64,
        ) {
            let a = bx(ax, ay, aw, ah);
            let b = bx(bx_, by, bw, bh);
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&b, &a));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn iou_matches_raster_oracle(
            ax in -15i32..15, ay in -15i32..15, aw in 1i32..20, ah in 1i32..20,
            bx_ in -15i32..15, by in -15i32..15, bw in 1i32..20, bh in 1i32..20,
        ) {
            let got = iou(
                &bx(ax as f64, ay as f64, aw as f64, ah as f64),
                &bx(bx_ as f64, by as f64, bw as f64, bh as f64),
            );
            let want = raster_iou((ax, ay, aw, ah), (bx_, by, bw, bh));
            prop_assert!((got - want).abs() < 1e-9);
        }
    }
}
