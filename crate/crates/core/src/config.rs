//! JSON run configuration: how to read the data and which model to fit.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::data::{load_dataset, DataSchema, Dataset};
use crate::em::ModelSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema: DataSchema,
    pub model: ModelSpec,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Loads `data` with this schema and attaches the model design.
    pub fn load_data(&self, data: &Path) -> Result<Dataset> {
        load_dataset(data, &self.schema)?.with_design(self.model.design.clone())
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}
