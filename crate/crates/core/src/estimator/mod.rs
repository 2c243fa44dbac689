//! Slice QoS estimator: a small MLP with softplus hidden units and a
//! logistic output, trained on MAE, with exact input derivatives for the
//! optimizer.
//!
//! Model files are JSON documents tagged with `format` and `version`; they
//! embed layer sizes, parameters, normalisation statistics and training
//! metadata.

mod model;
mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use model::{Activation, Dense, EstimatorModel, Normalization, TrainingMetadata, DEFAULT_HIDDEN};
pub use train::{mean_absolute_error, TrainConfig, TrainReport};

use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "netslice-estimator";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    layer_sizes: Vec<usize>,
    model: EstimatorModel,
}

impl EstimatorModel {
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            layer_sizes: self.layer_sizes(),
            model: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let head: Header = serde_json::from_str(text)?;
        if head.format != MODEL_FORMAT {
            return Err(Error::InvalidArgument(format!("not an estimator file: `{}`", head.format)));
        }
        if head.version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelVersion {
                found: head.version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_str(text)?;
        let m = file.model;
        let width = m.input_width();
        let consistent = m.layer_sizes() == file.layer_sizes
            && !m.layers.is_empty()
            && m.layers.last().map(|l| l.outputs) == Some(1)
            && m.layers.first().map(|l| l.inputs) == Some(width)
            && m.layers.windows(2).all(|w| w[0].outputs == w[1].inputs)
            && m.layers
                .iter()
                .all(|l| l.weights.len() == l.inputs * l.outputs && l.biases.len() == l.outputs)
            && m.normalization.shift.len() == width
            && m.normalization.scale.len() == width
            && m.normalization.scale.iter().all(|s| *s != 0.0);
        if !consistent {
            return Err(Error::InvalidArgument("estimator file has inconsistent shapes".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
