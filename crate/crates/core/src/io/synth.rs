use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{FormatError, SequenceBundle};
use crate::metrics::GtEntry;
use crate::model::{BoundingBox, Detection, FeatureBundle};

const REAL_CONFIDENCE: f64 = 0.9;
const SPURIOUS_CONFIDENCE: f64 = 0.4;
/// Histogram bins that carry an object's colour signature.
const PEAK_BINS: usize = 6;

fn default_name() -> String {
    "synthetic".into()
}
fn default_width() -> f64 {
    960.0
}
fn default_height() -> f64 {
    540.0
}
fn default_bins() -> usize {
    8
}
fn default_descriptor_count() -> usize {
    16
}
fn default_descriptor_dim() -> usize {
    128
}
fn default_deep_dim() -> usize {
    64
}
fn default_visible() -> f64 {
    0.5
}
fn default_appear() -> u32 {
    1
}

/// A scenario: linearly moving objects plus optional detector noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub frame_count: u32,
    #[serde(default = "default_width")]
    pub frame_width: f64,
    #[serde(default = "default_height")]
    pub frame_height: f64,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    /// Standard deviation of the per-coordinate box noise, in px.
    #[serde(default)]
    pub jitter_sigma: f64,
    /// Mean number of spurious boxes per frame.
    #[serde(default)]
    pub spurious_rate: f64,
    #[serde(default = "default_bins")]
    pub hist_bins_per_channel: usize,
    #[serde(default = "default_descriptor_count")]
    pub descriptor_count: usize,
    #[serde(default = "default_descriptor_dim")]
    pub descriptor_dim: usize,
    #[serde(default = "default_deep_dim")]
    pub deep_dim: usize,
    /// Relative noise applied to every feature around its object archetype.
    #[serde(default)]
    pub feature_noise: f64,
    /// Below this visible area fraction an object has left the scene.
    #[serde(default = "default_visible")]
    pub min_visible_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    /// Box center at the `appear` frame.
    pub start: [f64; 2],
    /// Displacement per frame.
    #[serde(default)]
    pub velocity: [f64; 2],
    pub size: [f64; 2],
    #[serde(default = "default_appear")]
    pub appear: u32,
    /// Last frame (inclusive) the object exists, if it vanishes in place.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vanish: Option<u32>,
    /// Inclusive frame intervals with no detection for this object.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropout: Vec<[u32; 2]>,
}

impl ScenarioSpec {
    pub fn new(frame_count: u32, objects: Vec<ObjectSpec>) -> Self {
        Self {
            name: default_name(),
            frame_count,
            frame_width: default_width(),
            frame_height: default_height(),
            objects,
            jitter_sigma: 0.0,
            spurious_rate: 0.0,
            hist_bins_per_channel: default_bins(),
            descriptor_count: default_descriptor_count(),
            descriptor_dim: default_descriptor_dim(),
            deep_dim: default_deep_dim(),
            feature_noise: 0.0,
            min_visible_fraction: default_visible(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let spec: Self = serde_json::from_str(text).map_err(|e| FormatError::Scenario(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        let bad = |m: String| Err(FormatError::Scenario(m));
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !pos(self.frame_width) || !pos(self.frame_height) {
            return bad("frame dimensions must be positive".into());
        }
        if !nonneg(self.jitter_sigma) || !nonneg(self.spurious_rate) || !nonneg(self.feature_noise) {
            return bad("jitter_sigma, spurious_rate and feature_noise must be non-negative".into());
        }
        if !(self.min_visible_fraction > 0.0 && self.min_visible_fraction <= 1.0) {
            return bad("min_visible_fraction must lie in (0, 1]".into());
        }
        if self.hist_bins_per_channel < 2 || self.descriptor_dim == 0 || self.deep_dim == 0 {
            return bad("feature dimensions must be positive".into());
        }
        for (i, o) in self.objects.iter().enumerate() {
            if !pos(o.size[0]) || !pos(o.size[1]) {
                return bad(format!("object {i}: size must be positive"));
            }
            if !o.start.iter().chain(&o.velocity).all(|v| v.is_finite()) {
                return bad(format!("object {i}: start and velocity must be finite"));
            }
            if o.appear < 1 || o.vanish.is_some_and(|v| v < o.appear) {
                return bad(format!("object {i}: need 1 <= appear <= vanish"));
            }
            if o.dropout.iter().any(|[a, b]| a > b) {
                return bad(format!("object {i}: dropout intervals need start <= end"));
            }
        }
        Ok(())
    }
}

struct Archetype {
    histogram: Vec<f64>,
    descriptors: Vec<Vec<f64>>,
    deep: Vec<f64>,
}

fn archetype(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Archetype {
    let bins = spec.hist_bins_per_channel.pow(3);
    let mut histogram: Vec<f64> = (0..bins).map(|_| rng.random::<f64>() * 0.5).collect();
    for _ in 0..PEAK_BINS {
        let b = rng.random_range(0..bins);
        histogram[b] += 400.0 + rng.random::<f64>() * 400.0;
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let descriptors = (0..spec.descriptor_count)
        .map(|_| (0..spec.descriptor_dim).map(|_| normal.sample(rng)).collect())
        .collect();
    let deep = (0..spec.deep_dim).map(|_| normal.sample(rng)).collect();
    Archetype {
        histogram,
        descriptors,
        deep,
    }
}

fn perturb(a: &Archetype, noise: f64, rng: &mut ChaCha8Rng) -> FeatureBundle {
    if noise == 0.0 {
        return FeatureBundle {
            histogram: Some(a.histogram.clone()),
            descriptors: Some(a.descriptors.clone()),
            deep_vector: Some(a.deep.clone()),
        };
    }
    let n = Normal::new(0.0, noise).expect("finite sigma");
    FeatureBundle {
        histogram: Some(
            a.histogram
                .iter()
                .map(|v| (v * (1.0 + n.sample(rng))).max(0.0))
                .collect(),
        ),
        descriptors: Some(
            a.descriptors
                .iter()
                .map(|d| d.iter().map(|v| v + n.sample(rng)).collect())
                .collect(),
        ),
        deep_vector: Some(a.deep.iter().map(|v| v + n.sample(rng)).collect()),
    }
}

/// Clips `b` to the frame; returns the clipped box and its visible fraction.
fn clip(b: &BoundingBox, w: f64, h: f64) -> Option<(BoundingBox, f64)> {
    let x1 = b.x.max(0.0);
    let y1 = b.y.max(0.0);
    let x2 = b.x2().min(w);
    let y2 = b.y2().min(h);
    if x2 <= x1 || y2 <= y1 {
        return None;
    }
    let clipped = BoundingBox::new(x1, y1, x2 - x1, y2 - y1).ok()?;
    Some((clipped, clipped.area() / b.area()))
}

/// Generates detections, features and ground truth for `spec`. The result
/// depends only on `(spec, seed)`.
///
/// Objects are clipped to the frame; once an object that has been visible
/// drops below `min_visible_fraction` it has left and never returns.
pub fn synth_generate(spec: &ScenarioSpec, seed: u64) -> Result<SequenceBundle, FormatError> {
    spec.validate()?;
    let mut arch_rng = ChaCha8Rng::seed_from_u64(seed);
    arch_rng.set_stream(1);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(2);

    let archetypes: Vec<Archetype> = spec.objects.iter().map(|_| archetype(spec, &mut arch_rng)).collect();
    let jitter = (spec.jitter_sigma > 0.0).then(|| Normal::new(0.0, spec.jitter_sigma).expect("finite sigma"));
    let spurious = (spec.spurious_rate > 0.0).then(|| Poisson::new(spec.spurious_rate).expect("positive rate"));

    let n = spec.frame_count as usize;
    let mut detections = vec![Vec::new(); n];
    let mut features = vec![Vec::new(); n];
    let mut gt = Vec::new();
    let mut seen = vec![false; spec.objects.len()];
    let mut gone = vec![false; spec.objects.len()];

    for frame in 1..=spec.frame_count {
        let mut entries: Vec<(BoundingBox, f64, FeatureBundle)> = Vec::new();
        for (i, o) in spec.objects.iter().enumerate() {
            if gone[i] || frame < o.appear {
                continue;
            }
            if o.vanish.is_some_and(|v| frame > v) {
                gone[i] = true;
                continue;
            }
            let dt = f64::from(frame - o.appear);
            let cx = o.start[0] + o.velocity[0] * dt;
            let cy = o.start[1] + o.velocity[1] * dt;
            let full = BoundingBox::from_center(cx, cy, o.size[0], o.size[1])
                .map_err(|e| FormatError::Scenario(format!("object {i}: {e}")))?;
            let visible =
                clip(&full, spec.frame_width, spec.frame_height).filter(|(_, frac)| *frac >= spec.min_visible_fraction);
            let Some((bbox, _)) = visible else {
                if seen[i] {
                    gone[i] = true;
                }
                continue;
            };
            seen[i] = true;
            gt.push(GtEntry {
                frame_index: frame,
                gt_id: i as u64 + 1,
                bbox,
            });
            if o.dropout.iter().any(|[a, b]| (*a..=*b).contains(&frame)) {
                continue;
            }
            let det_box = match &jitter {
                None => bbox,
                Some(j) => {
                    let w = (bbox.w + j.sample(&mut noise_rng)).max(1.0);
                    let h = (bbox.h + j.sample(&mut noise_rng)).max(1.0);
                    BoundingBox::new(
                        bbox.x + j.sample(&mut noise_rng),
                        bbox.y + j.sample(&mut noise_rng),
                        w,
                        h,
                    )
                    .expect("jittered box is valid")
                }
            };
            let feats = perturb(&archetypes[i], spec.feature_noise, &mut noise_rng);
            entries.push((det_box, REAL_CONFIDENCE, feats));
        }
        if let Some(p) = &spurious {
            let count = p.sample(&mut noise_rng) as usize;
            for _ in 0..count {
                let w = noise_rng.random_range(20.0..80.0f64).min(spec.frame_width);
                let h = noise_rng.random_range(20.0..80.0f64).min(spec.frame_height);
                let x = noise_rng.random::<f64>() * (spec.frame_width - w);
                let y = noise_rng.random::<f64>() * (spec.frame_height - h);
                let a = archetype(spec, &mut noise_rng);
                entries.push((
                    BoundingBox::new(x, y, w, h).expect("spurious box is valid"),
                    SPURIOUS_CONFIDENCE,
                    perturb(&a, 0.0, &mut noise_rng),
                ));
            }
        }
        entries.shuffle(&mut noise_rng);
        let slot = (frame - 1) as usize;
        for (det_index, (bbox, confidence, f)) in entries.into_iter().enumerate() {
            detections[slot].push(Detection {
                frame_index: frame,
                det_index,
                bbox,
                confidence,
            });
            features[slot].push(f);
        }
    }

    Ok(SequenceBundle {
        name: spec.name.clone(),
        frame_count: spec.frame_count,
        frame_width: spec.frame_width,
        frame_height: spec.frame_height,
        detections,
        features,
        gt: Some(gt),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::appearance::{histogram_intersection, match_keypoints};

    fn object(start: [f64; 2], velocity: [f64; 2]) -> ObjectSpec {
        ObjectSpec {
            start,
            velocity,
            size: [40.0, 30.0],
            appear: 1,
            vanish: None,
            dropout: Vec::new(),
        }
    }

    #[test]
    fn stationary_object_ten_frames() {
        let spec = ScenarioSpec::new(10, vec![object([200.0, 200.0], [0.0, 0.0])]);
        let b = synth_generate(&spec, 1).unwrap();
        let gt = b.gt.as_ref().unwrap();
        assert_eq!(gt.len(), 10);
        for (f, dets) in b.detections.iter().enumerate() {
            assert_eq!(dets.len(), 1);
            assert_eq!(dets[0].bbox, gt[f].bbox);
            assert_eq!(dets[0].bbox, b.detections[0][0].bbox);
        }
    }

    #[test]
    fn dropout_keeps_ground_truth() {
        let mut o = object([200.0, 200.0], [2.0, 0.0]);
        o.dropout = vec![[4, 6]];
        let b = synth_generate(&ScenarioSpec::new(10, vec![o]), 3).unwrap();
        let empty: Vec<u32> = (1..=10).filter(|f| b.detections[*f as usize - 1].is_empty()).collect();
        assert_eq!(empty, vec![4, 5, 6]);
        assert_eq!(b.gt.unwrap().len(), 10);
    }

    #[test]
    fn noiseless_detections_equal_ground_truth() {
        let spec = ScenarioSpec::new(
            20,
            vec![object([100.0, 100.0], [3.0, 1.0]), object([500.0, 300.0], [-2.0, 0.5])],
        );
        let b = synth_generate(&spec, 9).unwrap();
        let gt = b.gt.unwrap();
        let mut dets: Vec<BoundingBox> = b.detections.iter().flatten().map(|d| d.bbox).collect();
        let mut truth: Vec<BoundingBox> = gt.iter().map(|g| g.bbox).collect();
        let key = |b: &BoundingBox| (b.x.to_bits(), b.y.to_bits());
        dets.sort_by_key(key);
        truth.sort_by_key(key);
        assert_eq!(dets, truth);
    }

    #[test]
    fn deterministic_per_seed() {
        let mut spec = ScenarioSpec::new(
            15,
            vec![object([100.0, 100.0], [3.0, 1.0]), object([300.0, 300.0], [1.0, 0.0])],
        );
        spec.jitter_sigma = 1.5;
        spec.spurious_rate = 0.7;
        spec.feature_noise = 0.05;
        assert_eq!(synth_generate(&spec, 42).unwrap(), synth_generate(&spec, 42).unwrap());
        assert_ne!(synth_generate(&spec, 42).unwrap(), synth_generate(&spec, 43).unwrap());
    }

    #[test]
    fn exiting_object_clipped_then_removed() {
        let spec = ScenarioSpec::new(30, vec![object([900.0, 270.0], [10.0, 0.0])]);
        let b = synth_generate(&spec, 0).unwrap();
        let gt = b.gt.unwrap();
        // center reaches 960 (half visible) at frame 7; beyond that under half remains
        assert_eq!(gt.last().unwrap().frame_index, 7);
        assert!(gt.iter().all(|g| g.bbox.x2() <= 960.0));
        assert_eq!(gt[6].bbox.w, 20.0);
        assert!(b.detections[7..].iter().all(|d| d.is_empty()));
    }

    #[test]
    fn empty_scenario() {
        let b = synth_generate(&ScenarioSpec::new(0, vec![]), 0).unwrap();
        assert!(b.detections.is_empty() && b.gt.unwrap().is_empty());
    }

    #[test]
    fn archetypes_are_distinct_and_self_consistent() {
        let spec = ScenarioSpec::new(
            2,
            vec![object([100.0, 100.0], [0.0, 0.0]), object([400.0, 100.0], [0.0, 0.0])],
        );
        let b = synth_generate(&spec, 5).unwrap();
        let f: Vec<&FeatureBundle> = b.features[0].iter().collect();
        let h = |i: usize| f[i].histogram.as_ref().unwrap();
        let d = |i: usize| f[i].descriptors.as_ref().unwrap();
        assert_eq!(h(0).len(), 512);
        assert!((histogram_intersection(h(0), h(0)).unwrap() - 1.0).abs() < 1e-12);
        assert!(histogram_intersection(h(0), h(1)).unwrap() < 0.2);
        assert_eq!(match_keypoints(d(0), d(0), 0.8).unwrap(), 16);
        assert!(match_keypoints(d(0), d(1), 0.8).unwrap() <= 2);
    }

    #[test]
    fn json_spec_parses_with_defaults() {
        let spec = ScenarioSpec::from_json(
            r#"{"frame_count": 5, "objects": [{"start": [100, 100], "size": [30, 20], "dropout": [[2, 3]]}]}"#,
        )
        .unwrap();
        assert_eq!(spec.objects[0].velocity, [0.0, 0.0]);
        assert_eq!(spec.deep_dim, 64);
        assert!(ScenarioSpec::from_json(r#"{"frame_count": 5, "colour": 1}"#).is_err());
        assert!(
            ScenarioSpec::from_json(r#"{"frame_count": 5, "objects": [{"start": [1, 1], "size": [0, 2]}]}"#).is_err()
        );
    }
}
