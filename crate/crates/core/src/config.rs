//! Experiment configuration: one JSON document with a section per stage.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::detect::DetectionConfig;
use crate::error::{Error, Result};
use crate::invert::{InvertConfig, ScoreWeights};
use crate::net::WINDOW_LEN;
use crate::sdtw::SdtwConfig;
use crate::series::SynthConfig;
use crate::train::TrainConfig;

pub const CONFIG_ENV: &str = "WATTGAN_CONFIG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// LEAD-schema CSV read by `preprocess` and written by `synth`.
    pub data: PathBuf,
    pub work_dir: PathBuf,
    pub models_dir: PathBuf,
    pub reports_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: "data/lead.csv".into(),
            work_dir: "work".into(),
            models_dir: "models".into(),
            reports_dir: "reports".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub n_segments: usize,
    pub w: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            n_segments: 25,
            w: WINDOW_LEN,
        }
    }
}

/// KDE settings; the window length comes from `preprocess.w` and the score
/// threshold from `score.threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KdeConfig {
    pub bandwidth: f64,
    pub min_height: f64,
}

impl Default for KdeConfig {
    fn default() -> Self {
        let d = DetectionConfig::default();
        Self {
            bandwidth: d.bandwidth,
            min_height: d.min_height,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub tolerances: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tolerances: vec![12, 24],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub paths: Paths,
    pub synth: Vec<SynthConfig>,
    pub preprocess: PreprocessConfig,
    pub train: TrainConfig,
    pub sdtw: SdtwConfig,
    pub invert: InvertConfig,
    pub score: ScoreWeights,
    pub detect: KdeConfig,
    pub eval: EvalConfig,
    /// Upper bound on buildings processed concurrently.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            synth: vec![SynthConfig::default()],
            preprocess: PreprocessConfig::default(),
            train: TrainConfig::default(),
            sdtw: SdtwConfig::default(),
            invert: InvertConfig::default(),
            score: ScoreWeights::default(),
            detect: KdeConfig::default(),
            eval: EvalConfig::default(),
            workers: 1,
        }
    }
}

impl RunConfig {
    /// Reads `path` (or starts from defaults when `None`) and applies
    /// `key.path=value` overrides, then validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => serde_json::to_value(RunConfig::default()).expect("defaults serialize"),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        for s in &self.synth {
            s.validate().map_err(cfg_err)?;
        }
        if self.preprocess.n_segments == 0 {
            return Err(Error::Config("preprocess: n_segments must be positive".into()));
        }
        if self.preprocess.w != WINDOW_LEN {
            return Err(Error::Config(format!(
                "preprocess: w must be {WINDOW_LEN} for this architecture"
            )));
        }
        self.train.validate()?;
        self.sdtw.validate().map_err(cfg_err)?;
        self.invert.validate()?;
        self.score.validate()?;
        self.detection().validate()?;
        if self.eval.tolerances.is_empty() {
            return Err(Error::Config("eval: at least one tolerance is required".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn detection(&self) -> DetectionConfig {
        DetectionConfig {
            w: self.preprocess.w,
            score_threshold: self.score.threshold,
            bandwidth: self.detect.bandwidth,
            min_height: self.detect.min_height,
        }
    }
}

/// Sets `a.b.c=value` inside a JSON object, parsing `value` as JSON when
/// possible and as a plain string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Error::Config(format!("empty override key in `{assignment}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::load(None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.train.lr, 2e-4);
        assert_eq!(cfg.train.ncritic, 5);
        assert_eq!(cfg.eval.tolerances, vec![12, 24]);
    }

    #[test]
    fn overrides_apply() {
        let cfg = RunConfig::load(
            None,
            &[
                "train.epochs=3".into(),
                "invert.loss=euclidean".into(),
                "paths.data=/tmp/x.csv".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.invert.loss, crate::invert::LossKind::Euclidean);
        assert_eq!(cfg.paths.data, PathBuf::from("/tmp/x.csv"));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for bad in ["train.lr=-1", "preprocess.w=24", "detect.min_height=0", "workers=0", "nokey"] {
            let err = RunConfig::load(None, &[bad.into()]).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{bad}: {err}");
            assert_eq!(err.exit_code(), 2);
        }
    }
}
