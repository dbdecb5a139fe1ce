//! JSON model documents.
//!
//! ```json
//! {
//!   "kernel": [[0.0, 0.5], [0.4, 0.0]],
//!   "lambda": [1.0, 1.0],
//!   "sigma":  [0.2, 0.3],
//!   "nu":     [0.5, 0.3],
//!   "labels": ["a", "b"]
//! }
//! ```
//!
//! `kernel` is row-major, `kernel[x][y] = P_{x,y}`. `labels` is optional
//! metadata. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelError, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub kernel: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub sigma: Vec<f64>,
    pub nu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl ModelDocument {
    pub fn into_params(self) -> Result<ModelParams, ModelError> {
        let params = ModelParams::new(self.kernel, self.lambda, self.sigma, self.nu)?;
        match self.labels {
            Some(labels) => params.with_labels(labels),
            None => Ok(params),
        }
    }
}

impl From<&ModelParams> for ModelDocument {
    fn from(p: &ModelParams) -> Self {
        Self {
            kernel: p.kernel_rows(),
            lambda: p.lambda().to_vec(),
            sigma: p.sigma().to_vec(),
            nu: p.nu().to_vec(),
            labels: p.labels().map(<[String]>::to_vec),
        }
    }
}

impl ModelParams {
    /// Parses a model document. Shapes are checked; numeric invariants are not.
    pub fn from_json_str(s: &str) -> Result<Self, ModelError> {
        let doc: ModelDocument =
            serde_json::from_str(s).map_err(|e| ModelError::Malformed(e.to_string()))?;
        doc.into_params()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ModelDocument::from(self)).expect("model document serializes")
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelParams, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    ModelParams::from_json_str(&text)
}
