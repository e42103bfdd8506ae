//! Grid snapshots: a P5 class-id image plus a JSON sidecar carrying cell
//! size, extent, palette and pose.

use super::{pgm, IoError};
use crate::geometry::{Pose, RigidTransform};
use crate::grid::{ClassRaster, EgoExtent, SemanticMap};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExtentJson {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PoseJson {
    timestamp: f64,
    translation: [f64; 3],
    /// scalar-last (qx, qy, qz, qw)
    quaternion: [f64; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapshotSidecar {
    cell_size: f64,
    /// `ego` snapshots use vehicle coordinates, `world` snapshots world ones.
    frame: String,
    extent: ExtentJson,
    palette: Vec<String>,
    pose: Option<PoseJson>,
}

fn sidecar_path(image_path: &Path) -> PathBuf {
    image_path.with_extension("json")
}

/// Write an ego-centric semantic map snapshot (`<stem>.pgm` + `<stem>.json`).
pub fn write_semantic_map(image_path: &Path, map: &SemanticMap) -> Result<(), IoError> {
    pgm::write_pgm(
        image_path,
        map.cols as u32,
        map.rows as u32,
        &map.class_ids,
    )?;
    let (qx, qy, qz, qw) = map.pose.world_from_vehicle.to_quaternion();
    let t = map.pose.world_from_vehicle.translation();
    let sidecar = SnapshotSidecar {
        cell_size: map.cell_size,
        frame: "ego".to_string(),
        extent: ExtentJson {
            x_min: -map.ego_extent.backward,
            y_min: -map.ego_extent.right,
            x_max: map.ego_extent.forward,
            y_max: map.ego_extent.left,
        },
        palette: map.palette.clone(),
        pose: Some(PoseJson {
            timestamp: map.pose.timestamp,
            translation: [t.x, t.y, t.z],
            quaternion: [qx, qy, qz, qw],
        }),
    };
    let path = sidecar_path(image_path);
    let text = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| IoError::parse(&path, e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| IoError::io(&path, e))
}

/// Read an ego-centric snapshot back. Cells classed 0 are treated as
/// unobserved; the snapshot format does not carry a separate observation
/// channel.
pub fn read_semantic_map(image_path: &Path) -> Result<SemanticMap, IoError> {
    let (width, height, data) = pgm::read_pgm(image_path)?;
    let path = sidecar_path(image_path);
    let text = std::fs::read_to_string(&path).map_err(|e| IoError::io(&path, e))?;
    let sidecar: SnapshotSidecar = serde_json::from_str(&text)
        .map_err(|e| IoError::parse_at(&path, e.line(), e.to_string()))?;
    if sidecar.frame != "ego" {
        return Err(IoError::invalid(
            &path,
            format!("expected an ego snapshot, found frame `{}`", sidecar.frame),
        ));
    }
    let pose_json = sidecar
        .pose
        .ok_or_else(|| IoError::invalid(&path, "ego snapshot is missing its pose"))?;
    let [qx, qy, qz, qw] = pose_json.quaternion;
    let [tx, ty, tz] = pose_json.translation;
    let pose = Pose {
        timestamp: pose_json.timestamp,
        world_from_vehicle: RigidTransform::from_quaternion(
            qx,
            qy,
            qz,
            qw,
            Vector3::new(tx, ty, tz),
        ),
    };
    let observed = data.iter().map(|&c| c != 0).collect();
    Ok(SemanticMap::new(
        height as usize,
        width as usize,
        sidecar.cell_size,
        EgoExtent {
            forward: sidecar.extent.x_max,
            backward: -sidecar.extent.x_min,
            left: sidecar.extent.y_max,
            right: -sidecar.extent.y_min,
        },
        data,
        observed,
        sidecar.palette,
        pose,
    ))
}

/// Write a world-frame class raster snapshot.
pub fn write_world_raster(
    image_path: &Path,
    raster: &ClassRaster,
    palette: &[String],
) -> Result<(), IoError> {
    pgm::write_pgm(
        image_path,
        raster.width as u32,
        raster.height as u32,
        &raster.data,
    )?;
    let sidecar = SnapshotSidecar {
        cell_size: raster.cell_size,
        frame: "world".to_string(),
        extent: ExtentJson {
            x_min: raster.x_min,
            y_min: raster.y_min,
            x_max: raster.x_min + raster.width as f64 * raster.cell_size,
            y_max: raster.y_min + raster.height as f64 * raster.cell_size,
        },
        palette: palette.to_vec(),
        pose: None,
    };
    let path = sidecar_path(image_path);
    let text = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| IoError::parse(&path, e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| IoError::io(&path, e))
}

pub fn read_world_raster(image_path: &Path) -> Result<(ClassRaster, Vec<String>), IoError> {
    let (width, height, data) = pgm::read_pgm(image_path)?;
    let path = sidecar_path(image_path);
    let text = std::fs::read_to_string(&path).map_err(|e| IoError::io(&path, e))?;
    let sidecar: SnapshotSidecar = serde_json::from_str(&text)
        .map_err(|e| IoError::parse_at(&path, e.line(), e.to_string()))?;
    if sidecar.frame != "world" {
        return Err(IoError::invalid(
            &path,
            format!("expected a world snapshot, found frame `{}`", sidecar.frame),
        ));
    }
    Ok((
        ClassRaster {
            width: width as usize,
            height: height as usize,
            cell_size: sidecar.cell_size,
            x_min: sidecar.extent.x_min,
            y_min: sidecar.extent.y_min,
            data,
        },
        sidecar.palette,
    ))
}
