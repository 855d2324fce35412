//! Tolerance-based precision, recall and F1.
//!
//! A ground-truth point is a true positive when some prediction lies within
//! `r_t` of it; a prediction is a false positive when no ground-truth point
//! lies within `r_t` of it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub r_t: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Averaged metrics over buildings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Distance from `x` to the nearest element of the sorted slice `sorted`.
fn nearest(sorted: &[u64], x: u64) -> Option<u64> {
    let i = sorted.partition_point(|&v| v < x);
    let after = sorted.get(i).map(|&v| v - x);
    let before = i.checked_sub(1).map(|j| x - sorted[j]);
    match (before, after) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

fn sorted(v: &[u64]) -> Vec<u64> {
    let mut s = v.to_vec();
    s.sort_unstable();
    s
}

/// Matches predictions against ground truth with tolerance `cfg.r_t`.
pub fn match_events(gt: &[u64], pred: &[u64], cfg: &MatchConfig) -> MatchResult {
    let (gt_s, pred_s) = (sorted(gt), sorted(pred));
    let within = |d: Option<u64>| d.is_some_and(|d| d <= cfg.r_t);
    let tp = gt_s.iter().filter(|&&d| within(nearest(&pred_s, d))).count();
    let fp = pred_s.iter().filter(|&&p| !within(nearest(&gt_s, p))).count();
    let fn_ = gt_s.len() - tp;

    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MatchResult {
        tp,
        fn_,
        fp,
        precision,
        recall,
        f1,
    }
}

/// Unweighted mean of each metric.
pub fn aggregate(results: &[MatchResult]) -> Result<Summary> {
    if results.is_empty() {
        return Err(Error::arg("cannot aggregate zero results"));
    }
    let n = results.len() as f64;
    Ok(Summary {
        precision: results.iter().map(|r| r.precision).sum::<f64>() / n,
        recall: results.iter().map(|r| r.recall).sum::<f64>() / n,
        f1: results.iter().map(|r| r.f1).sum::<f64>() / n,
    })
}
