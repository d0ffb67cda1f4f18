//! Model parameters as one flat JSON document: a shape header followed by
//! row-major value arrays.

use std::path::Path;

use nuce_core::losses::AnchorSet;
use nuce_core::trainer::{Extractor, ModelParams};
use nuce_core::DenseMatrix;
use serde::{Deserialize, Serialize};

use crate::csv_io::write_file;
use crate::error::{LabError, Result};

pub const FORMAT: &str = "nuce-model/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelShape {
    pub input_dim: usize,
    /// Width of the tanh layer, absent when features feed the head directly.
    pub hidden_dim: Option<usize>,
    pub classes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format: String,
    pub shape: ModelShape,
    /// input_dim × hidden_dim
    #[serde(default)]
    pub extractor_weights: Vec<f64>,
    #[serde(default)]
    pub extractor_bias: Vec<f64>,
    /// classes × embed_dim
    pub head: Vec<f64>,
    /// classes × embed_dim
    pub anchors: Vec<f64>,
}

impl ModelDocument {
    pub fn from_params(p: &ModelParams) -> Self {
        let (weights, bias, hidden) = match &p.extractor {
            Some(e) => (
                e.weights.as_slice().to_vec(),
                e.bias.clone(),
                Some(p.embed_dim()),
            ),
            None => (Vec::new(), Vec::new(), None),
        };
        Self {
            format: FORMAT.to_string(),
            shape: ModelShape {
                input_dim: p.input_dim(),
                hidden_dim: hidden,
                classes: p.num_classes(),
            },
            extractor_weights: weights,
            extractor_bias: bias,
            head: p.head_w.as_slice().to_vec(),
            anchors: p.anchors.matrix().as_slice().to_vec(),
        }
    }

    pub fn into_params(self) -> nuce_core::Result<ModelParams> {
        let s = &self.shape;
        let embed = s.hidden_dim.unwrap_or(s.input_dim);
        let extractor = match s.hidden_dim {
            Some(h) => Some(Extractor {
                weights: DenseMatrix::new(s.input_dim, h, self.extractor_weights)?,
                bias: self.extractor_bias,
            }),
            None => {
                if !self.extractor_weights.is_empty() || !self.extractor_bias.is_empty() {
                    return Err(nuce_core::Error::Data(
                        "extractor values present without hidden_dim".into(),
                    ));
                }
                None
            }
        };
        let head = DenseMatrix::new(s.classes, embed, self.head)?;
        let anchors = AnchorSet::new(DenseMatrix::new(s.classes, embed, self.anchors)?)?;
        ModelParams::new(extractor, head, anchors)
    }
}

pub fn to_json(p: &ModelParams) -> String {
    let mut s = serde_json::to_string_pretty(&ModelDocument::from_params(p))
        .expect("model document serializes");
    s.push('\n');
    s
}

pub fn save_model(p: &ModelParams, path: &Path) -> Result<()> {
    write_file(path, to_json(p).as_bytes())
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let doc: ModelDocument = serde_json::from_str(&text).map_err(|e| LabError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if doc.format != FORMAT {
        return Err(LabError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unknown format `{}`, expected `{FORMAT}`", doc.format),
        });
    }
    doc.into_params().map_err(|e| LabError::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })
}
