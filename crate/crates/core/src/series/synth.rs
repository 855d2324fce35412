use std::f64::consts::PI;

use chrono::Duration;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{parse_timestamp, RawSeries};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionKind {
    /// Adds `magnitude` to every reading in the range.
    LevelShift,
    /// Replaces the range with a flat line at `base + magnitude`.
    Plateau,
    /// Adds `magnitude` every fourth hour of the range.
    SpikeTrain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub kind: InjectionKind,
    pub start: usize,
    pub duration: usize,
    pub magnitude: f64,
}

/// Profile of a synthetic commercial-building load curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub building_id: String,
    pub start: String,
    pub length: usize,
    pub base: f64,
    pub daily_amp: f64,
    pub weekly_amp: f64,
    pub noise: f64,
    pub seed: u64,
    pub injections: Vec<Injection>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            building_id: "synth-1".into(),
            start: "2016-01-01T00:00:00".into(),
            length: 3600,
            base: 100.0,
            daily_amp: 30.0,
            weekly_amp: 10.0,
            noise: 2.0,
            seed: 7,
            injections: Vec::new(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::arg("synthetic series length must be positive"));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::arg("noise scale must be non-negative"));
        }
        if parse_timestamp(&self.start).is_none() {
            return Err(Error::arg(format!("bad start timestamp `{}`", self.start)));
        }
        let mut ranges: Vec<(usize, usize)> = Vec::new();
        for inj in &self.injections {
            if inj.duration == 0 || inj.start + inj.duration > self.length {
                return Err(Error::arg(format!(
                    "injection at {} (duration {}) does not fit length {}",
                    inj.start, inj.duration, self.length
                )));
            }
            ranges.push((inj.start, inj.start + inj.duration));
        }
        ranges.sort_unstable();
        if let Some(w) = ranges.windows(2).find(|w| w[1].0 < w[0].1) {
            return Err(Error::arg(format!(
                "injections [{}, {}) and [{}, {}) overlap",
                w[0].0, w[0].1, w[1].0, w[1].1
            )));
        }
        Ok(())
    }
}

/// Generates `base + A_d sin(2πt/24) + A_w sin(2πt/168) + noise` with the
/// configured anomalies injected and labelled.
pub fn synth_series(profile: &SynthConfig) -> Result<RawSeries> {
    profile.validate()?;
    let t0 = parse_timestamp(&profile.start).expect("validated");
    let noise = Normal::new(0.0, profile.noise).map_err(|e| Error::arg(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);

    let mut readings: Vec<f64> = (0..profile.length)
        .map(|t| {
            let t = t as f64;
            profile.base
                + profile.daily_amp * (2.0 * PI * t / 24.0).sin()
                + profile.weekly_amp * (2.0 * PI * t / 168.0).sin()
                + noise.sample(&mut rng)
        })
        .collect();
    let mut labels = vec![false; profile.length];

    for inj in &profile.injections {
        let range = inj.start..inj.start + inj.duration;
        for t in range.clone() {
            match inj.kind {
                InjectionKind::LevelShift => readings[t] += inj.magnitude,
                InjectionKind::Plateau => readings[t] = profile.base + inj.magnitude,
                InjectionKind::SpikeTrain => {
                    if (t - inj.start) % 4 == 0 {
                        readings[t] += inj.magnitude;
                    }
                }
            }
        }
        labels[range].fill(true);
    }

    Ok(RawSeries {
        building_id: profile.building_id.clone(),
        timestamps: (0..profile.length)
            .map(|i| t0 + Duration::hours(i as i64))
            .collect(),
        readings,
        labels,
    })
}
