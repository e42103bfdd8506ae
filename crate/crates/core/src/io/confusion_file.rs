//! Confusion matrix JSON: `{"num_classes": C, "entries": [C*C row-major]}`,
//! entry `[z][c] = P(observed z | true c)`.

use super::IoError;
use crate::grid::ConfusionMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct ConfusionJson {
    num_classes: usize,
    entries: Vec<f64>,
}

pub fn write_confusion(path: &Path, cm: &ConfusionMatrix) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| IoError::io(path, e))?;
    }
    let json = ConfusionJson {
        num_classes: cm.num_classes(),
        entries: cm.entries().to_vec(),
    };
    let text =
        serde_json::to_string_pretty(&json).map_err(|e| IoError::parse(path, e.to_string()))?;
    std::fs::write(path, text).map_err(|e| IoError::io(path, e))
}

pub fn read_confusion(path: &Path) -> Result<ConfusionMatrix, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let json: ConfusionJson = serde_json::from_str(&text)
        .map_err(|e| IoError::parse_at(path, e.line(), e.to_string()))?;
    ConfusionMatrix::new(json.entries, json.num_classes)
        .map_err(|e| IoError::invalid(path, e.to_string()))
}
