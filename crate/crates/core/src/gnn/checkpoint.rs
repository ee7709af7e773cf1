use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::input::Schema;
use super::model::Model;
use crate::error::{Error, Result};
use crate::numkit::ParamSet;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Hex SHA-256 over the JSON of the architecture.
pub fn config_hash(config: &ModelConfig, schema: &Schema) -> String {
    let bytes = serde_json::to_vec(&(config, schema)).expect("config serialises");
    hex::encode(Sha256::digest(bytes))
}

/// Parameters with the architecture they belong to. Each parameter is stored as
/// `{rows, cols, data}` with row-major data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub config: ModelConfig,
    pub schema: Schema,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn new(model: &Model, params: ParamSet) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config_hash: config_hash(model.config(), model.schema()),
            config: model.config().clone(),
            schema: model.schema().clone(),
            tags: BTreeMap::new(),
            params,
        }
    }

    pub fn with_tag(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.tags.insert(key.into(), value.into());
        self
    }

    /// Rebuilds the model and checks version, hash and parameter shapes.
    pub fn model(&self) -> Result<Model> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Input(format!("unsupported checkpoint version {}", self.version)));
        }
        let expected = config_hash(&self.config, &self.schema);
        if expected != self.config_hash {
            return Err(Error::Input(format!(
                "checkpoint config hash {} does not match its config ({expected})",
                self.config_hash
            )));
        }
        let model = Model::new(self.config.clone(), self.schema.clone())?;
        model.check_params(&self.params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        ck.model()?;
        Ok(ck)
    }
}
