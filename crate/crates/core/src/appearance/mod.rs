//! Appearance affinities between two detections.
//!
//! Two models are provided: a keypoint-match count weighted by colour
//! histogram intersection, and cosine similarity of PCA-reduced deep
//! feature vectors.

mod eigen;
mod pca;

pub use eigen::{symmetric_eigen, SymmetricEigen};
pub use pca::{pca_fit, pca_project, reduced_dim, PcaBasis};

use thiserror::Error;

use crate::model::{FeatureBundle, TrackerConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AppearanceError {
    #[error("histogram length mismatch: {0} vs {1}")]
    HistogramLength(usize, usize),
    #[error("histogram contains a negative or non-finite entry")]
    HistogramEntry,
    #[error("both histograms have zero total mass")]
    EmptyHistograms,
    #[error("descriptor dimension mismatch: expected {expected}, found {found}")]
    DescriptorDim { expected: usize, found: usize },
    #[error("knn ratio must lie in (0, 1], got {0}")]
    Ratio(f64),
    #[error("vector dimension mismatch: {0} vs {1}")]
    VectorDim(usize, usize),
    #[error("zero-norm feature vector")]
    ZeroNorm,
    #[error("feature bundle is missing `{0}`")]
    MissingField(&'static str),
    #[error("pca needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("pca fraction must lie in (0, 1], got {0}")]
    Fraction(f64),
}

/// Ratio of the overlapping histogram mass to the larger total mass.
pub fn histogram_intersection(h1: &[f64], h2: &[f64]) -> Result<f64, AppearanceError> {
    if h1.len() != h2.len() {
        return Err(AppearanceError::HistogramLength(h1.len(), h2.len()));
    }
    if h1.iter().chain(h2).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(AppearanceError::HistogramEntry);
    }
    let total1: f64 = h1.iter().sum();
    let total2: f64 = h2.iter().sum();
    let denom = total1.max(total2);
    if denom <= 0.0 {
        return Err(AppearanceError::EmptyHistograms);
    }
    let overlap: f64 = h1.iter().zip(h2).map(|(a, b)| a.min(*b)).sum();
    Ok((overlap / denom).clamp(0.0, 1.0))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_dims(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<(), AppearanceError> {
    let Some(first) = a.first().or(b.first()) else {
        return Ok(());
    };
    let expected = first.len();
    match a.iter().chain(b).find(|d| d.len() != expected) {
        Some(d) => Err(AppearanceError::DescriptorDim {
            expected,
            found: d.len(),
        }),
        None => Ok(()),
    }
}

/// Counts descriptors of `a` that pass the two-nearest-neighbour ratio test
/// against `b` (Euclidean distance). With a single candidate in `b` every
/// query matches.
pub fn match_keypoints(a: &[Vec<f64>], b: &[Vec<f64>], ratio: f64) -> Result<usize, AppearanceError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(AppearanceError::Ratio(ratio));
    }
    check_dims(a, b)?;
    if b.is_empty() {
        return Ok(0);
    }
    if b.len() == 1 {
        return Ok(a.len());
    }
    let ratio_sq = ratio * ratio;
    let count = a
        .iter()
        .filter(|query| {
            let (mut best, mut second) = (f64::INFINITY, f64::INFINITY);
            for cand in b {
                let d = squared_distance(query, cand);
                if d < best {
                    second = best;
                    best = d;
                } else if d < second {
                    second = d;
                }
            }
            // compare squared distances: d1 <= r * d2  <=>  d1^2 <= r^2 * d2^2
            best <= ratio_sq * second
        })
        .count();
    Ok(count)
}

/// Keypoint-count times histogram-intersection affinity.
pub fn appearance_sift(a: &FeatureBundle, b: &FeatureBundle, cfg: &TrackerConfig) -> Result<f64, AppearanceError> {
    let ha = a
        .histogram
        .as_deref()
        .ok_or(AppearanceError::MissingField("histogram"))?;
    let hb = b
        .histogram
        .as_deref()
        .ok_or(AppearanceError::MissingField("histogram"))?;
    let da = a
        .descriptors
        .as_deref()
        .ok_or(AppearanceError::MissingField("descriptors"))?;
    let db = b
        .descriptors
        .as_deref()
        .ok_or(AppearanceError::MissingField("descriptors"))?;

    let inter = histogram_intersection(ha, hb)?;
    let matches = match_keypoints(da, db, cfg.knn_ratio)?;
    let count = if cfg.sift_match_normalization {
        // several queries may share one nearest neighbour, so cap at the
        // smaller set size to keep the score in [0, 1]
        let smaller = da.len().min(db.len());
        matches.min(smaller) as f64 / smaller.max(1) as f64
    } else {
        matches as f64
    };
    Ok(count * inter)
}

pub fn cosine_similarity(f1: &[f64], f2: &[f64]) -> Result<f64, AppearanceError> {
    if f1.len() != f2.len() {
        return Err(AppearanceError::VectorDim(f1.len(), f2.len()));
    }
    let n1 = f1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n2 = f2.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n1 == 0.0 || n2 == 0.0 || !n1.is_finite() || !n2.is_finite() {
        return Err(AppearanceError::ZeroNorm);
    }
    let dot: f64 = f1.iter().zip(f2).map(|(a, b)| a * b).sum();
    Ok((dot / (n1 * n2)).clamp(-1.0, 1.0))
}

/// Result of the deep appearance model. `degenerate` is set when one of the
/// projections had zero norm, in which case the score is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeepScore {
    pub score: f64,
    pub degenerate: bool,
}

/// Cosine similarity of the PCA projections, clamped below at zero.
pub fn appearance_deep(a: &FeatureBundle, b: &FeatureBundle, basis: &PcaBasis) -> Result<DeepScore, AppearanceError> {
    let va = a
        .deep_vector
        .as_deref()
        .ok_or(AppearanceError::MissingField("deep_vector"))?;
    let vb = b
        .deep_vector
        .as_deref()
        .ok_or(AppearanceError::MissingField("deep_vector"))?;
    let pa = pca_project(va, basis)?;
    let pb = pca_project(vb, basis)?;
    Ok(deep_score_from_projections(&pa, &pb))
}

pub(crate) fn deep_score_from_projections(pa: &[f64], pb: &[f64]) -> DeepScore {
    match cosine_similarity(pa, pb) {
        Ok(s) => DeepScore {
            score: s.max(0.0),
            degenerate: false,
        },
        Err(_) => DeepScore {
            score: 0.0,
            degenerate: true,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bundle(hist: Vec<f64>, desc: Vec<Vec<f64>>) -> FeatureBundle {
        FeatureBundle {
            histogram: Some(hist),
            descriptors: Some(desc),
            deep_vector: None,
        }
    }

    /// Exhaustive nearest-neighbour ratio count, written independently.
    fn brute_matches(a: &[Vec<f64>], b: &[Vec<f64>], ratio: f64) -> usize {
        let mut n = 0;
        for q in a {
            let mut dists: Vec<f64> = b
                .iter()
                .map(|c| q.iter().zip(c).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
                .collect();
            dists.sort_by(|x, y| x.partial_cmp(y).unwrap());
            match dists.len() {
                0 => {}
                1 => n += 1,
                _ if dists[0] <= ratio * dists[1] => n += 1,
                _ => {}
            }
        }
        n
    }

    #[test]
    fn histogram_examples() {
        assert_eq!(histogram_intersection(&[3., 1., 4.], &[3., 1., 4.]).unwrap(), 1.0);
        assert_eq!(histogram_intersection(&[5., 0.], &[0., 5.]).unwrap(), 0.0);
        // sum of minima 3, larger mass 4
        assert!((histogram_intersection(&[2., 2.], &[1., 3.]).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn histogram_errors() {
        assert_eq!(
            histogram_intersection(&[1., 2.], &[1.]),
            Err(AppearanceError::HistogramLength(2, 1))
        );
        assert_eq!(
            histogram_intersection(&[0., 0.], &[0., 0.]),
            Err(AppearanceError::EmptyHistograms)
        );
        assert_eq!(
            histogram_intersection(&[-1., 2.], &[1., 1.]),
            Err(AppearanceError::HistogramEntry)
        );
    }

    #[test]
    fn keypoint_examples() {
        let set: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, (i * i) as f64, 1.0]).collect();
        assert_eq!(match_keypoints(&set, &set, 0.8).unwrap(), 7);
        assert_eq!(match_keypoints(&[], &set, 0.8).unwrap(), 0);
        let a = vec![vec![0.0, 0.0]];
        let b = vec![vec![1.0, 0.0], vec![10.0, 0.0]];
        assert_eq!(brute_matches(&a, &b, 0.8), 1);
        assert_eq!(match_keypoints(&a, &b, 0.8).unwrap(), 1);
        // ambiguous: both neighbours at distance 1
        let b = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        assert_eq!(match_keypoints(&a, &b, 0.8).unwrap(), 0);
        assert_eq!(match_keypoints(&a, &b[..1], 0.8).unwrap(), 1);
    }

    #[test]
    fn keypoint_errors() {
        let a = vec![vec![0.0, 0.0]];
        let b = vec![vec![1.0, 0.0, 2.0]];
        assert!(matches!(
            match_keypoints(&a, &b, 0.8),
            Err(AppearanceError::DescriptorDim { .. })
        ));
        assert_eq!(match_keypoints(&a, &a, 0.0), Err(AppearanceError::Ratio(0.0)));
    }

    #[test]
    fn sift_examples() {
        let cfg = TrackerConfig::default();
        let desc: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 * 3.0, 1.0]).collect();
        let a = bundle(vec![3., 1., 4.], desc.clone());
        assert!((appearance_sift(&a, &a, &cfg).unwrap() - 1.0).abs() < 1e-12);

        let b = bundle(vec![0., 5., 0.], desc.clone());
        let c = bundle(vec![5., 0., 5.], desc);
        assert_eq!(appearance_sift(&b, &c, &cfg).unwrap(), 0.0);

        // 3 of 4 queries match, histograms intersect at 0.75
        let qa = vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![20.0, 0.0], vec![100.0, 100.0]];
        let qb = vec![
            vec![0.0, 0.5],
            vec![10.0, 0.5],
            vec![20.0, 0.5],
            vec![95.0, 100.0],
            vec![105.0, 100.0],
        ];
        assert_eq!(brute_matches(&qa, &qb, 0.8), 3);
        let a = bundle(vec![2., 2.], qa);
        let b = bundle(vec![1., 3.], qb);
        assert!((appearance_sift(&a, &b, &cfg).unwrap() - 0.5625).abs() < 1e-12);

        let raw = TrackerConfig {
            sift_match_normalization: false,
            ..cfg
        };
        assert!((appearance_sift(&a, &b, &raw).unwrap() - 2.25).abs() < 1e-12);
    }

    #[test]
    fn sift_missing_field_is_named() {
        let cfg = TrackerConfig::default();
        let a = FeatureBundle {
            histogram: Some(vec![1.0]),
            ..Default::default()
        };
        assert_eq!(
            appearance_sift(&a, &a, &cfg),
            Err(AppearanceError::MissingField("descriptors"))
        );
        let err = appearance_sift(&FeatureBundle::default(), &a, &cfg).unwrap_err();
        assert!(err.to_string().contains("histogram"));
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[2., 3., 5.], &[2., 3., 5.]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[1., 0.], &[0., 1.]).unwrap(), 0.0);
        let s = cosine_similarity(&[1., 0.], &[1., 1.]).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
        assert_eq!(cosine_similarity(&[0., 0.], &[1., 1.]), Err(AppearanceError::ZeroNorm));
        assert_eq!(
            cosine_similarity(&[1.], &[1., 1.]),
            Err(AppearanceError::VectorDim(1, 2))
        );
    }

    #[test]
    fn deep_score_clamps_and_flags() {
        let s = deep_score_from_projections(&[1., 0.], &[-1., 0.]);
        assert_eq!(
            s,
            DeepScore {
                score: 0.0,
                degenerate: false
            }
        );
        let s = deep_score_from_projections(&[0., 0.], &[1., 0.]);
        assert!(s.degenerate);
        let s = deep_score_from_projections(&[1., 0.], &[1., 1.]);
        assert!((s.score - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
    }

    fn hist_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..12).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.0..50.0f64, n),
                proptest::collection::vec(0.0..50.0f64, n),
            )
        })
    }

    fn desc_set(dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(-5.0..5.0f64, dim), 0..10)
    }

    proptest! {
        #[test]
        fn histogram_bounded_and_symmetric((h1, h2) in hist_strategy()) {
            let mass = h1.iter().sum::<f64>() + h2.iter().sum::<f64>();
            prop_assume!(mass > 0.0);
            let v = histogram_intersection(&h1, &h2).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, histogram_intersection(&h2, &h1).unwrap());
            if h1.iter().sum::<f64>() > 0.0 {
                prop_assert!((histogram_intersection(&h1, &h1).unwrap() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn keypoints_agree_with_brute_force(a in desc_set(3), b in desc_set(3), ratio in 0.05..1.0f64) {
            let got = match_keypoints(&a, &b, ratio).unwrap();
            prop_assert_eq!(got, brute_matches(&a, &b, ratio));
            prop_assert!(got <= a.len());
        }

        #[test]
        fn keypoint_self_match(a in desc_set(4)) {
            prop_assume!(a.iter().enumerate().all(|(i, x)| a[i + 1..].iter().all(|y| x != y)));
            prop_assert_eq!(match_keypoints(&a, &a, 0.8).unwrap(), a.len());
        }

        #[test]
        fn sift_normalized_in_unit_interval(
            (h1, h2) in hist_strategy(),
            a in desc_set(2),
            b in desc_set(2),
        ) {
            prop_assume!(h1.iter().sum::<f64>() + h2.iter().sum::<f64>() > 0.0);
            let cfg = TrackerConfig::default();
            let s = appearance_sift(&bundle(h1, a), &bundle(h2, b), &cfg).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn cosine_scale_invariant(
            f1 in proptest::collection::vec(-10.0..10.0f64, 5),
            f2 in proptest::collection::vec(-10.0..10.0f64, 5),
            c in 0.01..100.0f64,
        ) {
            let n1: f64 = f1.iter().map(|v| v * v).sum();
            let n2: f64 = f2.iter().map(|v| v * v).sum();
            prop_assume!(n1 > 1e-6 && n2 > 1e-6);
            let s = cosine_similarity(&f1, &f2).unwrap();
            prop_assert!((s - cosine_similarity(&f2, &f1).unwrap()).abs() < 1e-12);
            let scaled: Vec<f64> = f1.iter().map(|v| v * c).collect();
            prop_assert!((s - cosine_similarity(&scaled, &f2).unwrap()).abs() < 1e-9);
        }
    }
}
