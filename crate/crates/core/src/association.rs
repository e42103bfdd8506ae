//! Tags LiDAR points with semantic classes by projecting them into per-camera
//! semantic masks.

use crate::geometry::{project_point, SensorRig};
use nalgebra::Vector3;
use rayon::prelude::*;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssociationError {
    #[error("point cloud contains a non-finite coordinate")]
    NonFinite,
    #[error("intensity {0} outside [0, 1]")]
    IntensityOutOfRange(f64),
    #[error("mask class id {class_id} >= num_classes {num_classes}")]
    ClassIdOutOfRange { class_id: u8, num_classes: usize },
    #[error("mask for camera `{0}` which is not in the rig")]
    UnknownCamera(String),
    #[error("mask is {mask_w}x{mask_h} but camera `{camera}` expects {cam_w}x{cam_h}")]
    DimensionMismatch {
        camera: String,
        mask_w: u32,
        mask_h: u32,
        cam_w: u32,
        cam_h: u32,
    },
}

/// A raw LiDAR return in the LiDAR frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub position: Vector3<f64>,
    pub intensity: f64,
}

/// One LiDAR sweep.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<LidarPoint>,
    pub timestamp: f64,
}

impl PointCloud {
    pub fn new(points: Vec<LidarPoint>, timestamp: f64) -> Result<Self, AssociationError> {
        for p in &points {
            if !p.position.iter().all(|v| v.is_finite()) {
                return Err(AssociationError::NonFinite);
            }
            if !(0.0..=1.0).contains(&p.intensity) {
                return Err(AssociationError::IntensityOutOfRange(p.intensity));
            }
        }
        Ok(Self { points, timestamp })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A dense per-pixel class-id image produced by a segmenter.
#[derive(Debug, Clone)]
pub struct SemanticMask {
    pub width: u32,
    pub height: u32,
    pub class_ids: Vec<u8>,
    pub num_classes: usize,
}

impl SemanticMask {
    pub fn new(
        width: u32,
        height: u32,
        class_ids: Vec<u8>,
        num_classes: usize,
    ) -> Result<Self, AssociationError> {
        debug_assert_eq!(class_ids.len(), (width * height) as usize);
        if let Some(&bad) = class_ids.iter().find(|&&c| (c as usize) >= num_classes) {
            return Err(AssociationError::ClassIdOutOfRange {
                class_id: bad,
                num_classes,
            });
        }
        Ok(Self {
            width,
            height,
            class_ids,
            num_classes,
        })
    }

    #[inline]
    pub fn class_at(&self, x: u32, y: u32) -> u8 {
        self.class_ids[(y * self.width + x) as usize]
    }
}

/// A LiDAR point with its class label and the camera that supplied it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticPoint {
    pub position: Vector3<f64>,
    pub class_id: u8,
    pub intensity: f64,
    /// Index into the rig's camera list.
    pub camera_index: usize,
}

/// LiDAR points tagged with semantic classes; positions stay in the LiDAR
/// frame, the world transform is applied during grid integration.
#[derive(Debug, Clone, Default)]
pub struct SemanticPointCloud {
    pub entries: Vec<SemanticPoint>,
    pub timestamp: f64,
}

impl SemanticPointCloud {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Project every point into the cameras in rig priority order; the first
/// camera whose projection succeeds supplies the class at the
/// nearest-integer pixel. Points visible in no camera are dropped.
///
/// Output order equals input order regardless of internal parallelism.
pub fn associate(
    cloud: &PointCloud,
    masks: &HashMap<String, SemanticMask>,
    rig: &SensorRig,
) -> Result<SemanticPointCloud, AssociationError> {
    for (camera_id, mask) in masks {
        let cam = rig
            .camera(camera_id)
            .ok_or_else(|| AssociationError::UnknownCamera(camera_id.clone()))?;
        if mask.width != cam.intrinsics.width || mask.height != cam.intrinsics.height {
            return Err(AssociationError::DimensionMismatch {
                camera: camera_id.clone(),
                mask_w: mask.width,
                mask_h: mask.height,
                cam_w: cam.intrinsics.width,
                cam_h: cam.intrinsics.height,
            });
        }
    }

    // Cameras in rig order, keeping only those with a mask this frame.
    let cams: Vec<(usize, &crate::geometry::RigCamera, &SemanticMask)> = rig
        .cameras()
        .iter()
        .enumerate()
        .filter_map(|(i, cam)| masks.get(&cam.id).map(|m| (i, cam, m)))
        .collect();

    let entries: Vec<Option<SemanticPoint>> = cloud
        .points
        .par_iter()
        .map(|point| {
            for (camera_index, cam, mask) in &cams {
                if let Ok(img) = project_point(&cam.intrinsics, &cam.camera_from_lidar, &point.position)
                {
                    // Nearest pixel, round half up; a coordinate that rounds
                    // onto the border clamps to the last pixel.
                    let px = ((img.u + 0.5).floor() as u32).min(mask.width - 1);
                    let py = ((img.v + 0.5).floor() as u32).min(mask.height - 1);
                    return Some(SemanticPoint {
                        position: point.position,
                        class_id: mask.class_at(px, py),
                        intensity: point.intensity,
                        camera_index: *camera_index,
                    });
                }
            }
            None
        })
        .collect();

    Ok(SemanticPointCloud {
        entries: entries.into_iter().flatten().collect(),
        timestamp: cloud.timestamp,
    })
}

/// Fraction of input points that received a class. An empty input counts as
/// fully associated.
pub fn association_coverage(result: &SemanticPointCloud, input: &PointCloud) -> f64 {
    if input.is_empty() {
        return 1.0;
    }
    result.len() as f64 / input.len() as f64
}
