//! Raw meter series, segments and sliding windows.
//!
//! A building's series is cleaned of missing readings, cut into contiguous
//! segments, min-max scaled per segment to `[-1, 1]` and finally windowed with
//! stride 1 to form model inputs.

mod csv;
mod synth;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

pub use self::csv::{load_lead_csv, parse_timestamp, write_lead_csv, TIMESTAMP_FORMAT};
pub use self::synth::{synth_series, Injection, InjectionKind, SynthConfig};

/// One building's hourly meter readings with point-wise anomaly labels.
///
/// Missing readings are stored as `NaN` until [`drop_missing`] removes them.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSeries {
    pub building_id: String,
    pub timestamps: Vec<NaiveDateTime>,
    pub readings: Vec<f64>,
    pub labels: Vec<bool>,
}

impl RawSeries {
    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }

    /// Positions of anomalous readings.
    pub fn anomaly_indices(&self) -> Vec<usize> {
        true_indices(&self.labels)
    }
}

/// A contiguous, not yet normalized slice of a series.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSegment {
    pub values: Vec<f64>,
    pub origin: usize,
    pub labels: Vec<bool>,
}

/// A segment scaled to `[-1, 1]` together with its scaler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub values: Vec<f64>,
    pub raw_min: f64,
    pub raw_max: f64,
    /// Index of the first element in the parent (cleaned) series.
    pub origin: usize,
    pub labels: Vec<bool>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn has_anomaly(&self) -> bool {
        self.labels.iter().any(|&l| l)
    }

    /// Maps normalized values back to meter units.
    pub fn denormalize(&self) -> Vec<f64> {
        if self.raw_max == self.raw_min {
            return vec![self.raw_min; self.values.len()];
        }
        let half = 0.5 * (self.raw_max - self.raw_min);
        self.values
            .iter()
            .map(|&v| self.raw_min + (v + 1.0) * half)
            .collect()
    }

    /// Anomaly positions in parent-series coordinates.
    pub fn anomaly_indices(&self) -> Vec<usize> {
        true_indices(&self.labels)
            .into_iter()
            .map(|i| i + self.origin)
            .collect()
    }
}

/// Overlapping stride-1 windows cut from one segment.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowBatch {
    /// Row-major `(n, w)`.
    pub windows: Vec<f64>,
    pub starts: Vec<usize>,
    pub w: usize,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn window(&self, i: usize) -> &[f64] {
        &self.windows[i * self.w..(i + 1) * self.w]
    }

    /// Model input of shape `(n, 1, w)`.
    pub fn to_tensor(&self) -> Tensor3 {
        Tensor3::from_vec(self.len(), 1, self.w, self.windows.clone())
            .expect("window buffer matches its shape")
    }
}

fn true_indices(labels: &[bool]) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter_map(|(i, &l)| l.then_some(i))
        .collect()
}

/// Removes rows whose reading is missing, keeping labels aligned.
pub fn drop_missing(series: &RawSeries) -> Result<RawSeries> {
    let keep: Vec<usize> = (0..series.len())
        .filter(|&i| series.readings[i].is_finite())
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptySeries(series.building_id.clone()));
    }
    Ok(RawSeries {
        building_id: series.building_id.clone(),
        timestamps: keep.iter().map(|&i| series.timestamps[i]).collect(),
        readings: keep.iter().map(|&i| series.readings[i]).collect(),
        labels: keep.iter().map(|&i| series.labels[i]).collect(),
    })
}

/// Cuts a series into `n_segments` contiguous pieces whose lengths differ by
/// at most one; the leading pieces take the remainder.
pub fn segmentize(series: &RawSeries, n_segments: usize) -> Result<Vec<RawSegment>> {
    let len = series.len();
    if n_segments == 0 || n_segments > len {
        return Err(Error::arg(format!(
            "cannot cut a series of length {len} into {n_segments} segments"
        )));
    }
    let base = len / n_segments;
    let extra = len % n_segments;
    let mut out = Vec::with_capacity(n_segments);
    let mut start = 0;
    for i in 0..n_segments {
        let n = base + usize::from(i < extra);
        out.push(RawSegment {
            values: series.readings[start..start + n].to_vec(),
            origin: start,
            labels: series.labels[start..start + n].to_vec(),
        });
        start += n;
    }
    Ok(out)
}

/// Affine min-max scaling of one segment onto `[-1, 1]`.
///
/// A constant segment maps to all zeros with `raw_min == raw_max`.
pub fn normalize(segment: &RawSegment) -> Result<Segment> {
    if segment.values.is_empty() {
        return Err(Error::arg("cannot normalize an empty segment"));
    }
    let (lo, hi) = segment
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let values = if hi > lo {
        let span = hi - lo;
        segment
            .values
            .iter()
            .map(|&v| (2.0 * (v - lo) / span - 1.0).clamp(-1.0, 1.0))
            .collect()
    } else {
        vec![0.0; segment.values.len()]
    };
    Ok(Segment {
        values,
        raw_min: lo,
        raw_max: hi,
        origin: segment.origin,
        labels: segment.labels.clone(),
    })
}

/// Segments without any anomalous point become training data, the rest is
/// held out for testing.
pub fn split_train_test(segments: Vec<Segment>) -> Result<(Vec<Segment>, Vec<Segment>)> {
    let (train, test): (Vec<_>, Vec<_>) = segments.into_iter().partition(|s| !s.has_anomaly());
    if train.is_empty() {
        return Err(Error::NoTrainingData(
            "every segment contains an anomaly".into(),
        ));
    }
    Ok((train, test))
}

/// All stride-1 windows of length `w`.
pub fn windows(segment: &Segment, w: usize) -> Result<WindowBatch> {
    window_values(&segment.values, w)
}

pub(crate) fn window_values(values: &[f64], w: usize) -> Result<WindowBatch> {
    if w == 0 || w > values.len() {
        return Err(Error::arg(format!(
            "window length {w} does not fit a segment of length {}",
            values.len()
        )));
    }
    let n = values.len() - w + 1;
    let mut flat = Vec::with_capacity(n * w);
    for start in 0..n {
        flat.extend_from_slice(&values[start..start + w]);
    }
    Ok(WindowBatch {
        windows: flat,
        starts: (0..n).collect(),
        w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(readings: Vec<f64>, labels: Vec<bool>) -> RawSeries {
        let t0 = parse_timestamp("2016-01-01T00:00:00").unwrap();
        RawSeries {
            building_id: "b".into(),
            timestamps: (0..readings.len())
                .map(|i| t0 + chrono::Duration::hours(i as i64))
                .collect(),
            readings,
            labels,
        }
    }

    fn raw(values: Vec<f64>) -> RawSegment {
        let n = values.len();
        RawSegment {
            values,
            origin: 0,
            labels: vec![false; n],
        }
    }

    #[test]
    fn drop_missing_keeps_labels_with_readings() {
        let s = series(vec![1.0, f64::NAN, 3.0], vec![false, true, false]);
        let c = drop_missing(&s).unwrap();
        assert_eq!(c.readings, vec![1.0, 3.0]);
        assert_eq!(c.labels, vec![false, false]);
        assert_eq!(c.timestamps, vec![s.timestamps[0], s.timestamps[2]]);

        let clean = series(vec![1.0, 2.0], vec![false, true]);
        assert_eq!(drop_missing(&clean).unwrap(), clean);

        let empty = series(vec![f64::NAN, f64::NAN], vec![false, false]);
        assert!(matches!(drop_missing(&empty), Err(Error::EmptySeries(_))));
    }

    #[test]
    fn segmentize_lengths() {
        let s = series(vec![0.0; 8784], vec![false; 8784]);
        let segs = segmentize(&s, 25).unwrap();
        assert_eq!(segs.len(), 25);
        assert!(segs.iter().all(|g| g.values.len() == 351 || g.values.len() == 352));
        // 8784 = 25 * 351 + 9, so the first nine carry the extra element
        assert!(segs[..9].iter().all(|g| g.values.len() == 352));

        let s = series(vec![0.0; 10], vec![false; 10]);
        let segs = segmentize(&s, 2).unwrap();
        assert_eq!(segs[0].values.len(), 5);
        assert_eq!(segs[1].origin, 5);

        let s = series(vec![0.0; 3], vec![false; 3]);
        assert!(segmentize(&s, 5).is_err());
        assert!(segmentize(&s, 0).is_err());
    }

    #[test]
    fn normalize_examples() {
        let n = normalize(&raw(vec![0.0, 5.0, 10.0])).unwrap();
        assert_eq!(n.values, vec![-1.0, 0.0, 1.0]);
        assert_eq!((n.raw_min, n.raw_max), (0.0, 10.0));

        let already = vec![-1.0, 0.25, 1.0];
        assert_eq!(normalize(&raw(already.clone())).unwrap().values, already);

        let c = normalize(&raw(vec![4.0, 4.0, 4.0])).unwrap();
        assert_eq!(c.values, vec![0.0; 3]);
        assert_eq!(c.raw_min, c.raw_max);
        assert_eq!(c.denormalize(), vec![4.0; 3]);

        assert!(normalize(&raw(vec![])).is_err());
    }

    #[test]
    fn split_examples() {
        let mk = |anom: bool| Segment {
            values: vec![0.0; 3],
            raw_min: 0.0,
            raw_max: 1.0,
            origin: 0,
            labels: vec![false, anom, false],
        };
        let (train, test) = split_train_test(vec![mk(false), mk(true), mk(false)]).unwrap();
        assert_eq!((train.len(), test.len()), (2, 1));
        let (_, test) = split_train_test(vec![mk(false), mk(false)]).unwrap();
        assert!(test.is_empty());
        assert!(matches!(
            split_train_test(vec![mk(true)]),
            Err(Error::NoTrainingData(_))
        ));
    }

    #[test]
    fn window_examples() {
        let seg = normalize(&raw((0..147).map(f64::from).collect())).unwrap();
        assert_eq!(windows(&seg, 48).unwrap().len(), 100);

        let one = windows(&seg, 147).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.window(0), &seg.values[..]);

        let b = window_values(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(b.windows, vec![1.0, 2.0, 2.0, 3.0, 3.0, 4.0]);
        assert_eq!(b.starts, vec![0, 1, 2]);

        assert!(windows(&seg, 0).is_err());
        assert!(windows(&seg, 148).is_err());
    }

    proptest! {
        #[test]
        fn normalize_round_trip(values in prop::collection::vec(-1e4f64..1e4, 1..64)) {
            let seg = normalize(&raw(values.clone())).unwrap();
            prop_assert!(seg.values.iter().all(|v| (-1.0..=1.0).contains(v)));
            for (a, b) in seg.denormalize().iter().zip(&values) {
                let scale = b.abs().max(seg.raw_max.abs()).max(seg.raw_min.abs()).max(1e-300);
                prop_assert!((a - b).abs() <= 1e-9 * scale);
            }
        }

        #[test]
        fn windows_overlay_reproduces_segment(
            values in prop::collection::vec(-1.0f64..1.0, 1..80),
            w in 1usize..20,
        ) {
            prop_assume!(w <= values.len());
            let b = window_values(&values, w).unwrap();
            let mut sum = vec![0.0; values.len()];
            let mut count = vec![0usize; values.len()];
            for (i, &s) in b.starts.iter().enumerate() {
                for (j, &v) in b.window(i).iter().enumerate() {
                    sum[s + j] += v;
                    count[s + j] += 1;
                }
            }
            for i in 0..values.len() {
                prop_assert!(((sum[i] / count[i] as f64) - values[i]).abs() <= 1e-15 * values[i].abs().max(1.0));
            }
        }

        #[test]
        fn segmentize_partitions(len in 1usize..500, n in 1usize..40) {
            prop_assume!(n <= len);
            let s = series(vec![0.0; len], vec![false; len]);
            let segs = segmentize(&s, n).unwrap();
            let mut next = 0;
            for g in &segs {
                prop_assert_eq!(g.origin, next);
                next += g.values.len();
            }
            prop_assert_eq!(next, len);
            let max = segs.iter().map(|g| g.values.len()).max().unwrap();
            let min = segs.iter().map(|g| g.values.len()).min().unwrap();
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn split_is_a_partition(flags in prop::collection::vec(any::<bool>(), 1..20)) {
            let segs: Vec<Segment> = flags.iter().enumerate().map(|(i, &a)| Segment {
                values: vec![0.0; 2], raw_min: 0.0, raw_max: 1.0, origin: i, labels: vec![a, false],
            }).collect();
            match split_train_test(segs.clone()) {
                Ok((train, test)) => {
                    prop_assert_eq!(train.len() + test.len(), segs.len());
                    prop_assert!(train.iter().all(|s| !s.has_anomaly()));
                    prop_assert!(test.iter().all(|s| s.has_anomaly()));
                }
                Err(_) => prop_assert!(flags.iter().all(|&a| a)),
            }
        }
    }
}
