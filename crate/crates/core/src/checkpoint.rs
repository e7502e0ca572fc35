//! Versioned checkpoint files: encoder parameters, config and step counter,
//! optionally with the full trainer state (optimizer, replay cache, best
//! validation state) for exact resume.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, EncoderState};
use crate::error::{Error, Result};
use crate::trainer::Trainer;

pub const FORMAT: &str = "fsl-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub encoder: EncoderState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trainer: Option<Trainer>,
}

impl Checkpoint {
    pub fn encoder_only(encoder: EncoderState) -> Self {
        Checkpoint { format: FORMAT.into(), version: VERSION, encoder, trainer: None }
    }

    pub fn with_trainer(trainer: Trainer) -> Self {
        Checkpoint { format: FORMAT.into(), version: VERSION, encoder: trainer.state.clone(), trainer: Some(trainer) }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    /// Reads a checkpoint, refusing unknown formats, other versions and (when
    /// `expected` is given) an encoder whose architecture, embedding size or
    /// input shape differs. The init seed is not compared.
    pub fn load(path: &Path, expected: Option<&EncoderConfig>) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingPath(path.to_path_buf()));
        }
        let raw: serde_json::Value = serde_json::from_slice(&fs::read(path)?)?;
        let format = raw.get("format").and_then(|v| v.as_str()).unwrap_or_default();
        if format != FORMAT {
            return Err(Error::Checkpoint(format!("{} is not a checkpoint (format `{format}`)", path.display())));
        }
        let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if version != u64::from(VERSION) {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}, expected {VERSION}")));
        }
        let ckpt: Checkpoint = serde_json::from_value(raw)?;
        ckpt.encoder.validate()?;
        if let Some(cfg) = expected {
            let got = &ckpt.encoder.config;
            if cfg.arch != got.arch || cfg.embed_dim != got.embed_dim || cfg.input_shape != got.input_shape {
                return Err(Error::Checkpoint(format!(
                    "encoder config mismatch: checkpoint has {:?}, run expects {:?}",
                    got, cfg
                )));
            }
        }
        if let Some(t) = &ckpt.trainer {
            if t.state != ckpt.encoder {
                return Err(Error::Checkpoint("trainer state disagrees with encoder state".into()));
            }
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let mut state = EncoderState::new(EncoderConfig::mlp2(5, 7, 3, 9)).unwrap();
        state.step = 42;
        state.params[0] = 0.1 + 0.2;
        Checkpoint::encoder_only(state.clone()).save(&path).unwrap();
        let back = Checkpoint::load(&path, Some(&state.config)).unwrap();
        assert_eq!(back.encoder, state);

        let other = EncoderConfig::mlp2(5, 8, 3, 9);
        assert!(matches!(Checkpoint::load(&path, Some(&other)), Err(Error::Checkpoint(_))));
        assert!(matches!(Checkpoint::load(&dir.path().join("none.json"), None), Err(Error::MissingPath(_))));

        std::fs::write(&path, br#"{"format":"other","version":1}"#).unwrap();
        assert!(matches!(Checkpoint::load(&path, None), Err(Error::Checkpoint(_))));
    }
}
