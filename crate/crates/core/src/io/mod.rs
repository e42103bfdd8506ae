//! File formats and sequence loading.
//!
//! Formats are deliberately minimal and dataset-agnostic; dataset-native
//! ingestion (nuScenes, Argoverse 2, ...) belongs in out-of-tree converter
//! scripts that emit these files.

pub mod calibration;
pub mod confusion_file;
pub mod pgm;
pub mod point_cloud;
pub mod snapshot;
pub mod trajectory;
pub mod vector_map_file;

use crate::association::{PointCloud, SemanticMask};
use crate::geometry::{Pose, SensorRig};
use crate::grid::WorldExtent;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}{}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("{path}: {message}")]
    InvalidData { path: PathBuf, message: String },
}

impl IoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        IoError::Parse {
            path: path.into(),
            line: None,
            message: message.into(),
        }
    }

    pub(crate) fn parse_at(
        path: impl Into<PathBuf>,
        line: usize,
        message: impl Into<String>,
    ) -> Self {
        IoError::Parse {
            path: path.into(),
            line: Some(line),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        IoError::InvalidData {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// One frame record of a manifest: file references only, decoded on demand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameRecord {
    pub timestamp: f64,
    pub cloud: PathBuf,
    /// camera id -> mask path
    pub masks: std::collections::BTreeMap<String, PathBuf>,
}

/// A sequence manifest: ordered frames plus rig calibration, trajectory and
/// the class palette.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub calibration: PathBuf,
    pub trajectory: PathBuf,
    pub palette: Vec<String>,
    #[serde(default)]
    pub world_extent: Option<WorldExtent>,
    #[serde(default)]
    pub cell_size: Option<f64>,
    pub frames: Vec<FrameRecord>,
}

/// A fully decoded frame.
pub struct LoadedFrame {
    pub timestamp: f64,
    pub cloud: PointCloud,
    pub masks: HashMap<String, SemanticMask>,
    pub pose: Pose,
}

/// A loaded sequence: metadata up front, frame payloads decoded lazily.
pub struct Sequence {
    pub manifest: SequenceManifest,
    pub rig: SensorRig,
    pub poses: Vec<Pose>,
    root: PathBuf,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.manifest.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.frames.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.palette.len()
    }

    /// Decode one frame.
    pub fn load_frame(&self, index: usize) -> Result<LoadedFrame, IoError> {
        let record = &self.manifest.frames[index];
        let cloud = point_cloud::read_point_cloud(&self.root.join(&record.cloud))?;
        let mut masks = HashMap::new();
        for (camera_id, mask_path) in &record.masks {
            let path = self.root.join(mask_path);
            let (width, height, data) = pgm::read_pgm(&path)?;
            let mask = SemanticMask::new(width, height, data, self.num_classes())
                .map_err(|e| IoError::invalid(&path, e.to_string()))?;
            masks.insert(camera_id.clone(), mask);
        }
        Ok(LoadedFrame {
            timestamp: record.timestamp,
            cloud,
            masks,
            pose: self.poses[index],
        })
    }

    /// Frames in timestamp order.
    pub fn frames(&self) -> impl Iterator<Item = Result<LoadedFrame, IoError>> + '_ {
        (0..self.len()).map(|i| self.load_frame(i))
    }
}

/// Load and validate a sequence manifest. Every referenced file must exist;
/// trajectory entries must line up one-to-one with frame records.
pub fn load_sequence(manifest_path: &Path) -> Result<Sequence, IoError> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| IoError::io(manifest_path, e))?;
    let manifest: SequenceManifest = serde_json::from_str(&text)
        .map_err(|e| IoError::parse_at(manifest_path, e.line(), e.to_string()))?;
    let root = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();

    let mut referenced: Vec<PathBuf> =
        vec![root.join(&manifest.calibration), root.join(&manifest.trajectory)];
    for frame in &manifest.frames {
        referenced.push(root.join(&frame.cloud));
        for mask in frame.masks.values() {
            referenced.push(root.join(mask));
        }
    }
    for path in &referenced {
        if !path.exists() {
            return Err(IoError::MissingFile(path.clone()));
        }
    }

    for pair in manifest.frames.windows(2) {
        if pair[1].timestamp <= pair[0].timestamp {
            return Err(IoError::invalid(
                manifest_path,
                format!(
                    "frame timestamps not strictly increasing: {} then {}",
                    pair[0].timestamp, pair[1].timestamp
                ),
            ));
        }
    }

    let rig = calibration::read_calibration(&root.join(&manifest.calibration))?;
    let poses = trajectory::read_trajectory(&root.join(&manifest.trajectory))?;
    if poses.len() != manifest.frames.len() {
        return Err(IoError::invalid(
            manifest_path,
            format!(
                "trajectory has {} poses but the manifest lists {} frames",
                poses.len(),
                manifest.frames.len()
            ),
        ));
    }
    for (i, (pose, frame)) in poses.iter().zip(&manifest.frames).enumerate() {
        if (pose.timestamp - frame.timestamp).abs() > 1e-6 {
            return Err(IoError::invalid(
                manifest_path,
                format!(
                    "frame {i} timestamp {} does not match trajectory timestamp {}",
                    frame.timestamp, pose.timestamp
                ),
            ));
        }
    }

    Ok(Sequence {
        manifest,
        rig,
        poses,
        root,
    })
}

/// Write a manifest next to its data files.
pub fn write_manifest(path: &Path, manifest: &SequenceManifest) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| IoError::parse(path, e.to_string()))?;
    std::fs::write(path, text).map_err(|e| IoError::io(path, e))
}
