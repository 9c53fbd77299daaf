//! Weight file format: a JSON document mapping parameter name -> shape ->
//! values, written with sorted keys so identical parameters always produce
//! identical bytes.
//!
//! ```json
//! {
//!   "format": "bi-isca-weights",
//!   "version": 1,
//!   "params": {
//!     "head.out.b": { "shape": [1], "values": [0.0] }
//!   }
//! }
//! ```
//!
//! Values are `f64` serialized with shortest-round-trip formatting, so a
//! save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Param;

pub const FORMAT_NAME: &str = "bi-isca-weights";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: expected format {FORMAT_NAME} v{FORMAT_VERSION}, found {found}")]
    WrongFormat { path: String, found: String },
    #[error("parameter {name}: file has shape {file_shape:?}, model has shape {model_shape:?}")]
    ShapeMismatch { name: String, file_shape: Vec<usize>, model_shape: Vec<usize> },
    #[error("parameter {name} is missing from the file")]
    MissingParam { name: String },
    #[error("parameter {name}: shape {shape:?} does not match {got} values")]
    CorruptEntry { name: String, shape: Vec<usize>, got: usize },
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightEntry {
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightFile {
    format: String,
    version: u32,
    params: BTreeMap<String, WeightEntry>,
}

/// Serialize named parameters to the documented JSON container.
pub fn save_weights(
    path: impl AsRef<Path>,
    named: &[(String, Param)],
) -> Result<(), WeightsError> {
    let path = path.as_ref();
    let file = WeightFile {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        params: named
            .iter()
            .map(|(name, p)| {
                let t = p.borrow();
                (
                    name.clone(),
                    WeightEntry { shape: t.shape().to_vec(), values: t.values().to_vec() },
                )
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file).expect("weight maps always serialize");
    std::fs::write(path, text)
        .map_err(|source| WeightsError::Io { path: path.display().to_string(), source })
}

/// Load a weight file into existing parameters. Every model parameter must
/// be present with a matching shape; shape disagreements name the parameter
/// and both shapes.
pub fn load_weights(
    path: impl AsRef<Path>,
    named: &[(String, Param)],
) -> Result<(), WeightsError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|source| WeightsError::Io { path: display.clone(), source })?;
    let file: WeightFile = serde_json::from_str(&text)
        .map_err(|source| WeightsError::Json { path: display.clone(), source })?;
    if file.format != FORMAT_NAME || file.version != FORMAT_VERSION {
        return Err(WeightsError::WrongFormat {
            path: display,
            found: format!("{} v{}", file.format, file.version),
        });
    }
    for (name, entry) in &file.params {
        let numel: usize = entry.shape.iter().product();
        if numel != entry.values.len() {
            return Err(WeightsError::CorruptEntry {
                name: name.clone(),
                shape: entry.shape.clone(),
                got: entry.values.len(),
            });
        }
    }
    for (name, param) in named {
        let entry = file
            .params
            .get(name)
            .ok_or_else(|| WeightsError::MissingParam { name: name.clone() })?;
        let model_shape = param.shape();
        if entry.shape != model_shape {
            return Err(WeightsError::ShapeMismatch {
                name: name.clone(),
                file_shape: entry.shape.clone(),
                model_shape,
            });
        }
        param.borrow_mut().values_mut().copy_from_slice(&entry.values);
    }
    Ok(())
}
