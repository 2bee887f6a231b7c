use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::dataio::{NormStats, RoomVocabulary};
use crate::error::{Error, Result};
use crate::nn::Tensor2;

pub const CHECKPOINT_FORMAT: &str = "dcmn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing model file: everything needed to normalise, run and
/// decode new recordings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub vocabulary: Vec<String>,
    pub norm_stats: NormStats,
    /// Last completed epoch (1-based); 0 for an untrained model.
    pub epoch: usize,
    /// Room pairs the decoder may never move between, by name.
    #[serde(default)]
    pub forbidden_transitions: Vec<[String; 2]>,
    pub params: BTreeMap<String, Tensor2>,
}

impl Checkpoint {
    pub fn new(
        config: &ModelConfig,
        vocabulary: &RoomVocabulary,
        norm_stats: &NormStats,
        epoch: usize,
        forbidden_transitions: Vec<[String; 2]>,
        params: &ModelParams,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            vocabulary: vocabulary.names().to_vec(),
            norm_stats: norm_stats.clone(),
            epoch,
            forbidden_transitions,
            params: params.named().into_iter().map(|(n, t)| (n, t.clone())).collect(),
        }
    }

    pub fn vocabulary(&self) -> Result<RoomVocabulary> {
        RoomVocabulary::new(self.vocabulary.clone())
    }

    /// Rebuilds the parameter structure for the stored variant and fills it by name.
    pub fn model_params(&self) -> Result<ModelParams> {
        self.config.validate()?;
        let mut params = ModelParams::init(&self.config, &mut ChaCha8Rng::seed_from_u64(0));
        let mut seen = 0;
        for (name, t) in params.named_mut() {
            let stored = self
                .params
                .get(&name)
                .ok_or_else(|| Error::Config(format!("checkpoint is missing parameter `{name}`")))?;
            if stored.shape() != t.shape() {
                return Err(Error::Config(format!(
                    "checkpoint parameter `{name}` has shape {:?}, expected {:?}",
                    stored.shape(),
                    t.shape()
                )));
            }
            t.data_mut().copy_from_slice(stored.data());
            seen += 1;
        }
        if seen != self.params.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} parameters, variant `{}` expects {seen}",
                self.params.len(),
                self.config.variant
            )));
        }
        Ok(params)
    }

    fn check_header(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "not a {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION} file (found `{}` v{})",
                self.format, self.version
            )));
        }
        self.norm_stats.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        ck.check_header()?;
        Ok(ck)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Fails with both vocabularies named when `data` differs from the checkpoint's.
    pub fn check_vocabulary(&self, data: &RoomVocabulary) -> Result<()> {
        if self.vocabulary != data.names() {
            return Err(Error::VocabularyMismatch {
                checkpoint: self.vocabulary.join(", "),
                data: data.names().join(", "),
            });
        }
        Ok(())
    }
}
