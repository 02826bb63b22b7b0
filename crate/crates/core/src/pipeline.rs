//! End-to-end plumbing: fit the PCA basis, run the engine over a sequence,
//! turn the tracks into hypotheses and score them.

use crate::appearance::{pca_fit, PcaBasis};
use crate::io::SequenceBundle;
use crate::metrics::{evaluate, HypothesisBox, MetricsReport};
use crate::model::{AppearanceMode, ObservationSource, Track, TrackerConfig};
use crate::tracker::{EventKind, StepOutcome, TrackerEngine};
use crate::Error;

/// Drops detections (and their features) below `min_conf`, renumbering
/// `det_index` within each frame.
pub fn filter_confidence(bundle: &SequenceBundle, min_conf: f64) -> SequenceBundle {
    let mut out = bundle.clone();
    for (dets, feats) in out.detections.iter_mut().zip(out.features.iter_mut()) {
        let kept: Vec<_> = dets
            .drain(..)
            .zip(feats.drain(..))
            .filter(|(d, _)| d.confidence >= min_conf)
            .collect();
        for (i, (mut d, f)) in kept.into_iter().enumerate() {
            d.det_index = i;
            dets.push(d);
            feats.push(f);
        }
    }
    out
}

/// Fits the PCA basis on the deep vectors of the first `pca_fit_frames`
/// frames. Returns `None` unless the deep appearance mode is selected.
pub fn fit_basis(bundle: &SequenceBundle, cfg: &TrackerConfig) -> Result<Option<PcaBasis>, Error> {
    if cfg.appearance_mode != AppearanceMode::Deep {
        return Ok(None);
    }
    let samples: Vec<Vec<f64>> = bundle
        .features
        .iter()
        .take(cfg.pca_fit_frames as usize)
        .flatten()
        .filter_map(|f| f.deep_vector.clone())
        .collect();
    Ok(Some(pca_fit(&samples, cfg.pca_fraction)?))
}

/// Result of tracking one sequence.
#[derive(Debug, Clone)]
pub struct TrackingRun {
    pub tracks: Vec<Track>,
    pub outcomes: Vec<StepOutcome>,
}

impl TrackingRun {
    pub fn event_count(&self, kind: EventKind) -> usize {
        self.outcomes
            .iter()
            .flat_map(|o| &o.events)
            .filter(|e| e.kind == kind)
            .count()
    }
}

pub fn run_sequence(bundle: &SequenceBundle, cfg: &TrackerConfig) -> Result<TrackingRun, Error> {
    let mut cfg = cfg.clone();
    cfg.frame_width = bundle.frame_width;
    cfg.frame_height = bundle.frame_height;
    let basis = fit_basis(bundle, &cfg)?;
    let mut engine = TrackerEngine::new(cfg)?;
    if let Some(b) = basis {
        engine = engine.with_pca_basis(b);
    }
    let mut outcomes = Vec::with_capacity(bundle.detections.len());
    for (dets, feats) in bundle.detections.iter().zip(&bundle.features) {
        outcomes.push(engine.step(dets, feats)?);
    }
    log::info!(
        "{}: {} frames, {} tracks",
        bundle.name,
        bundle.frame_count,
        engine.tracks().len()
    );
    Ok(TrackingRun {
        tracks: engine.into_tracks(),
        outcomes,
    })
}

/// Flattens tracks into scored boxes; hypothetical observations can be left
/// out.
pub fn hypotheses(tracks: &[Track], exclude_hypothetical: bool) -> Vec<HypothesisBox> {
    tracks
        .iter()
        .flat_map(|t| {
            t.observations
                .iter()
                .filter(move |o| !(exclude_hypothetical && o.source == ObservationSource::Hypothetical))
                .map(move |o| HypothesisBox {
                    frame_index: o.frame_index,
                    track_id: t.id,
                    bbox: o.bbox,
                })
        })
        .collect()
}

/// Tracks a sequence and scores it against its ground truth.
pub fn run_and_evaluate(
    bundle: &SequenceBundle,
    cfg: &TrackerConfig,
    exclude_hypothetical: bool,
) -> Result<(TrackingRun, MetricsReport), Error> {
    let run = run_sequence(bundle, cfg)?;
    let gt = bundle.gt.as_deref().unwrap_or(&[]);
    let report = evaluate(gt, &hypotheses(&run.tracks, exclude_hypothetical))?;
    Ok((run, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{synth_generate, ObjectSpec, ScenarioSpec};

    fn object(x: f64, y: f64, vx: f64) -> ObjectSpec {
        ObjectSpec {
            start: [x, y],
            velocity: [vx, 0.0],
            size: [60.0, 40.0],
            appear: 1,
            vanish: None,
            dropout: Vec::new(),
        }
    }

    fn scenario() -> SequenceBundle {
        let spec = ScenarioSpec::new(40, vec![object(200.0, 100.0, 2.0), object(300.0, 300.0, -1.5)]);
        synth_generate(&spec, 11).unwrap()
    }

    #[test]
    fn clean_scenario_scores_perfectly_in_every_mode() {
        let bundle = scenario();
        for mode in [AppearanceMode::SiftHist, AppearanceMode::Deep, AppearanceMode::None] {
            let cfg = TrackerConfig {
                appearance_mode: mode,
                ..TrackerConfig::default()
            };
            let (run, report) = run_and_evaluate(&bundle, &cfg, false).unwrap();
            assert_eq!(run.tracks.len(), 2, "{mode:?}");
            assert_eq!((report.fp, report.fn_, report.idsw), (0, 0, 0), "{mode:?}");
            assert_eq!(report.mota, 1.0);
            assert_eq!(run.event_count(EventKind::Born), 2);
        }
    }

    #[test]
    fn deep_basis_uses_fit_window() {
        let bundle = scenario();
        let cfg = TrackerConfig {
            appearance_mode: AppearanceMode::Deep,
            pca_fit_frames: 1,
            ..TrackerConfig::default()
        };
        // one frame holds two vectors of dimension 64: k = ceil(6.4) = 7
        let basis = fit_basis(&bundle, &cfg).unwrap().unwrap();
        assert_eq!((basis.dim(), basis.k()), (64, 7));
        let none = TrackerConfig {
            pca_fit_frames: 0,
            ..cfg
        };
        assert!(fit_basis(&bundle, &none).is_err());
    }

    #[test]
    fn confidence_filter_renumbers() {
        let mut bundle = scenario();
        bundle.detections[0][0].confidence = 0.2;
        let kept_box = bundle.detections[0][1].bbox;
        let f = filter_confidence(&bundle, 0.5);
        assert_eq!(f.detections[0].len(), 1);
        assert_eq!(f.detections[0][0].det_index, 0);
        assert_eq!(f.detections[0][0].bbox, kept_box);
        assert_eq!(f.features[0].len(), 1);
        assert_eq!(f.detections[1].len(), 2);
    }
}
