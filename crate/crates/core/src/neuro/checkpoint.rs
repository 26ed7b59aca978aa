//! Versioned JSON checkpoints.
//!
//! Layout (version 1):
//!
//! ```text
//! {
//!   "format": "alertq-checkpoint",
//!   "version": 1,
//!   "layer_sizes": [5, 20, 10, 11],
//!   "params": { "layers": [ { "inputs", "outputs", "weights", "biases" }, ... ] },
//!   "adam": { "config": {...}, "t": 0, "m": {...}, "v": {...} },
//!   "seeds": { "root": .., "init": .., "explore": .., "replay": .. },
//!   "config_hash": "<sha256 hex>"
//! }
//! ```
//!
//! Weights are row-major `outputs x inputs`. Floats are written with
//! shortest round-trip formatting, so load(save(x)) == x bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::mlp::MlpParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "alertq-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Seeds that produced a checkpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLineage {
    pub root: u64,
    pub init: u64,
    pub explore: u64,
    pub replay: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub params: MlpParams,
    pub adam: AdamState,
    pub seeds: SeedLineage,
    pub config_hash: String,
}

impl Checkpoint {
    pub fn new(params: MlpParams, adam: AdamState, seeds: SeedLineage, config_hash: String) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            layer_sizes: params.layer_sizes(),
            params,
            adam,
            seeds,
            config_hash,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::format(path, format!("unknown format `{}`", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::format(path, format!("unsupported version {}", ckpt.version)));
        }
        // Re-validate shapes: the file may have been edited by hand.
        let params = MlpParams::from_layers(ckpt.params.layers().to_vec()).map_err(|e| Error::format(path, e))?;
        if params.layer_sizes() != ckpt.layer_sizes {
            return Err(Error::format(path, "layer_sizes disagree with stored layers"));
        }
        if !(params.same_shape(&ckpt.adam.m) && params.same_shape(&ckpt.adam.v)) {
            return Err(Error::format(path, "optimizer moments do not match the network"));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuro::adam::AdamConfig;

    #[test]
    fn round_trip_is_exact() {
        let params = MlpParams::init(&[5, 20, 10, 11], 77).unwrap();
        let mut adam = AdamState::new(&params, AdamConfig::default());
        let mut p = params.clone();
        let mut g = params.zeros_like();
        g.values_mut().enumerate().for_each(|(i, v)| *v = (i as f64).sin());
        adam.step(&mut p, &g).unwrap();
        let seeds = SeedLineage { root: 1, init: 2, explore: 3, replay: 4 };
        let ckpt = Checkpoint::new(p, adam, seeds, "abc".into());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        ckpt.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ckpt);
    }

    #[test]
    fn rejects_wrong_version() {
        let params = MlpParams::init(&[2, 3, 2], 1).unwrap();
        let adam = AdamState::new(&params, AdamConfig::default());
        let mut ckpt = Checkpoint::new(params, adam, SeedLineage::default(), String::new());
        ckpt.version = 99;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        ckpt.save(&path).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Format { .. })));
    }
}
