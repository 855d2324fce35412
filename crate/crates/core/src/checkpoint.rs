//! JSON model checkpoints.
//!
//! Floats are written in shortest round-trip form and parsed back exactly,
//! so a save/load cycle reproduces every parameter bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::net::{CriticNet, GeneratorNet, LayerSpec};
use crate::train::TrainConfig;

pub const FORMAT: &str = "wattgan-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub building_id: String,
    pub config_hash: String,
    pub generator_specs: Vec<LayerSpec>,
    pub critic_specs: Vec<LayerSpec>,
    pub generator: GeneratorNet,
    pub critic: CriticNet,
}

/// SHA-256 of the config's JSON form, hex encoded.
pub fn config_hash(cfg: &TrainConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    Sha256::digest(&json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Checkpoint {
    pub fn new(building_id: &str, cfg: &TrainConfig, generator: GeneratorNet, critic: CriticNet) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            building_id: building_id.into(),
            config_hash: config_hash(cfg),
            generator_specs: generator.net.specs(),
            critic_specs: critic.net.specs(),
            generator,
            critic,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("checkpoint: {e}")))?;
        if value.get("format").and_then(|v| v.as_str()) != Some(FORMAT) {
            return Err(Error::Version("not a wattgan checkpoint".into()));
        }
        let version = value.get("version").and_then(|v| v.as_u64());
        if version != Some(u64::from(VERSION)) {
            return Err(Error::Version(format!(
                "checkpoint version {version:?}, expected {VERSION}"
            )));
        }
        let ckpt: Checkpoint =
            serde_json::from_value(value).map_err(|e| Error::Version(format!("checkpoint schema: {e}")))?;
        if ckpt.generator_specs != ckpt.generator.net.specs() || ckpt.critic_specs != ckpt.critic.net.specs() {
            return Err(Error::Version("layer specs disagree with stored layers".into()));
        }
        Ok(ckpt)
    }

    /// Writes through a temporary file in the target directory, then renames.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_critic, init_generator, Layer};

    #[test]
    fn round_trip_is_bit_exact() {
        let mut g = init_generator(1);
        if let Layer::Batchnorm1d(bn) = &mut g.net.layers[1] {
            bn.running_var[0] = 0.1 + 0.2;
            bn.running_mean[3] = -1.0 / 3.0;
        }
        let ckpt = Checkpoint::new("b1", &TrainConfig::default(), g, init_critic(2));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("models/b1.ckpt");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ckpt);
        let bits = |c: &Checkpoint| -> Vec<u64> {
            c.generator.net.params().iter().flat_map(|p| p.iter().map(|v| v.to_bits())).collect()
        };
        assert_eq!(bits(&back), bits(&ckpt));
        assert_eq!(back.to_json(), ckpt.to_json());
    }

    #[test]
    fn rejects_foreign_or_old_files() {
        let ckpt = Checkpoint::new("b1", &TrainConfig::default(), init_generator(1), init_critic(2));
        let mut v: serde_json::Value = serde_json::from_str(&ckpt.to_json()).unwrap();
        v["version"] = 99.into();
        assert!(matches!(Checkpoint::from_json(&v.to_string()), Err(Error::Version(_))));
        assert!(matches!(Checkpoint::from_json(r#"{"a":1}"#), Err(Error::Version(_))));
        assert!(matches!(Checkpoint::from_json("not json"), Err(Error::Format(_))));
    }

    #[test]
    fn hash_tracks_config() {
        let a = TrainConfig::default();
        let b = TrainConfig { epochs: 3, ..a.clone() };
        assert_eq!(config_hash(&a), config_hash(&a));
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
