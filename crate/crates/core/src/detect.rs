//! From window scores to point predictions: critical points, a scaled
//! Gaussian KDE over them, and a height cut.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invert::{score_segment, InvertConfig, ScoreWeights, SegmentScores};
use crate::net::GeneratorNet;
use crate::sdtw::SdtwConfig;
use crate::series::Segment;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    pub w: usize,
    pub score_threshold: f64,
    /// Kernel bandwidth in hours.
    pub bandwidth: f64,
    pub min_height: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            w: 48,
            score_threshold: 1.0,
            bandwidth: 6.0,
            min_height: 0.5,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) {
            return Err(Error::Config("detect: bandwidth must be positive".into()));
        }
        if !(self.min_height > 0.0 && self.min_height <= 1.0) {
            return Err(Error::Config("detect: min_height must lie in (0, 1]".into()));
        }
        if self.w == 0 {
            return Err(Error::Config("detect: w must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentDetection {
    pub scores: SegmentScores,
    /// Segment-local indices.
    pub critical_points: Vec<usize>,
    pub kde_curve: Vec<f64>,
    /// Segment-local indices.
    pub predicted: Vec<usize>,
}

/// Midpoints (`start + ⌊w/2⌋`) of windows scoring strictly above the
/// threshold.
pub fn critical_points(starts: &[usize], scores: &[f64], threshold: f64, w: usize) -> Vec<usize> {
    starts
        .iter()
        .zip(scores)
        .filter(|(_, &s)| s > threshold)
        .map(|(&start, _)| start + w / 2)
        .collect()
}

/// Sum of Gaussian kernels at `0..len`, divided by its maximum. All zeros
/// when there are no points.
pub fn kde_curve(points: &[usize], len: usize, bandwidth: f64) -> Vec<f64> {
    if points.is_empty() {
        return vec![0.0; len];
    }
    let denom = 2.0 * bandwidth * bandwidth;
    let mut curve: Vec<f64> = (0..len)
        .map(|t| {
            points
                .iter()
                .map(|&p| {
                    let d = t as f64 - p as f64;
                    (-d * d / denom).exp()
                })
                .sum()
        })
        .collect();
    let peak = curve.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        curve.iter_mut().for_each(|v| *v /= peak);
    }
    curve
}

/// Grid positions whose scaled density reaches `min_height`.
pub fn predict(curve: &[f64], min_height: f64) -> Vec<usize> {
    curve
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= min_height)
        .map(|(i, _)| i)
        .collect()
}

/// Threshold, KDE and height cut applied to precomputed window scores.
pub fn detect_from_scores(scores: SegmentScores, segment_len: usize, cfg: &DetectionConfig) -> SegmentDetection {
    let critical = critical_points(&scores.starts, &scores.scores, cfg.score_threshold, cfg.w);
    let curve = kde_curve(&critical, segment_len, cfg.bandwidth);
    let predicted = predict(&curve, cfg.min_height);
    SegmentDetection {
        scores,
        critical_points: critical,
        kde_curve: curve,
        predicted,
    }
}

/// Full pipeline for one test segment.
pub fn detect_segment(
    segment: &Segment,
    generator: &GeneratorNet,
    icfg: &InvertConfig,
    sdtw_cfg: &SdtwConfig,
    weights: &ScoreWeights,
    dcfg: &DetectionConfig,
) -> Result<SegmentDetection> {
    dcfg.validate()?;
    let scores = score_segment(segment, generator, icfg, sdtw_cfg, weights, dcfg.w)?;
    Ok(detect_from_scores(scores, segment.len(), dcfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn critical_point_examples() {
        assert_eq!(critical_points(&[10], &[2.0], 1.0, 48), vec![34]);
        assert!(critical_points(&[0, 1, 2], &[0.1, 0.2, 0.3], 1.0, 48).is_empty());
        assert_eq!(
            critical_points(&[0, 1, 2], &[0.1, 0.2, 0.3], f64::NEG_INFINITY, 48),
            vec![24, 25, 26]
        );
        // strict comparison
        assert!(critical_points(&[0], &[1.0], 1.0, 48).is_empty());
    }

    #[test]
    fn kde_examples() {
        let one = kde_curve(&[20], 50, 6.0);
        assert_eq!(one[20], 1.0);
        assert_eq!(kde_curve(&[20, 20], 50, 6.0), one);
        assert!((one[26] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((one[14] - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(kde_curve(&[], 5, 6.0), vec![0.0; 5]);
    }

    #[test]
    fn predict_examples() {
        let curve = kde_curve(&[10, 30], 40, 3.0);
        let top = predict(&curve, 1.0);
        assert!(top.contains(&10) || top.contains(&30));
        assert!(top.iter().all(|&i| curve[i] == 1.0));

        let all = predict(&curve, f64::MIN_POSITIVE);
        assert_eq!(all, (0..40).filter(|&i| curve[i] > 0.0).collect::<Vec<_>>());
        assert!(predict(&[0.0; 10], 0.5).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(DetectionConfig::default().validate().is_ok());
        assert!(DetectionConfig { min_height: 0.0, ..Default::default() }.validate().is_err());
        assert!(DetectionConfig { min_height: 1.5, ..Default::default() }.validate().is_err());
        assert!(DetectionConfig { bandwidth: 0.0, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn prediction_monotone_in_height(
            points in prop::collection::vec(0usize..100, 0..10),
            lo in 0.01f64..1.0, hi in 0.01f64..1.0,
        ) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let curve = kde_curve(&points, 100, 4.0);
            let a = predict(&curve, lo);
            let b = predict(&curve, hi);
            prop_assert!(b.iter().all(|i| a.contains(i)));
        }

        #[test]
        fn kde_invariant_to_duplication(points in prop::collection::vec(0usize..60, 1..8), copies in 2usize..4) {
            let dup: Vec<usize> = points.iter().flat_map(|&p| std::iter::repeat_n(p, copies)).collect();
            let a = kde_curve(&points, 60, 5.0);
            let b = kde_curve(&dup, 60, 5.0);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let peak = a.iter().copied().fold(0.0, f64::max);
            prop_assert_eq!(peak, 1.0);
        }

        #[test]
        fn critical_count_matches_threshold(scores in prop::collection::vec(-5.0f64..5.0, 0..40), t in -5.0f64..5.0) {
            let starts: Vec<usize> = (0..scores.len()).collect();
            let n = scores.iter().filter(|&&s| s > t).count();
            prop_assert_eq!(critical_points(&starts, &scores, t, 48).len(), n);
        }

        #[test]
        fn unimodal_curve_gives_one_run(p in 10usize..90, h in 0.05f64..1.0) {
            let pred = predict(&kde_curve(&[p], 100, 5.0), h);
            prop_assert!(pred.windows(2).all(|w| w[1] == w[0] + 1));
            prop_assert!(pred.contains(&p));
        }
    }
}
