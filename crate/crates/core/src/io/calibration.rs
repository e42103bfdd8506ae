//! Calibration JSON: camera list with intrinsics and a row-major 4x4
//! `camera_from_lidar`, plus the 4x4 `lidar_to_vehicle` mounting transform.

use super::IoError;
use crate::geometry::{CameraIntrinsics, RigCamera, RigidTransform, SensorRig};
use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct CameraJson {
    id: String,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    camera_from_lidar: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CalibrationJson {
    cameras: Vec<CameraJson>,
    lidar_to_vehicle: Vec<f64>,
}

fn transform_to_row_major(t: &RigidTransform) -> Vec<f64> {
    let m = t.to_matrix4();
    (0..4)
        .flat_map(|r| (0..4).map(move |c| m[(r, c)]))
        .collect()
}

fn transform_from_row_major(values: &[f64], path: &Path, what: &str) -> Result<RigidTransform, IoError> {
    if values.len() != 16 {
        return Err(IoError::invalid(
            path,
            format!("{what}: expected 16 matrix entries, found {}", values.len()),
        ));
    }
    let mut m = Matrix4::zeros();
    for r in 0..4 {
        for c in 0..4 {
            m[(r, c)] = values[r * 4 + c];
        }
    }
    let bottom_ok = (m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]) == (0.0, 0.0, 0.0, 1.0);
    if !bottom_ok {
        return Err(IoError::invalid(
            path,
            format!("{what}: bottom row must be 0 0 0 1"),
        ));
    }
    RigidTransform::from_matrix4(&m).map_err(|e| IoError::invalid(path, format!("{what}: {e}")))
}

pub fn write_calibration(path: &Path, rig: &SensorRig) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| IoError::io(path, e))?;
    }
    let json = CalibrationJson {
        cameras: rig
            .cameras()
            .iter()
            .map(|cam| CameraJson {
                id: cam.id.clone(),
                fx: cam.intrinsics.fx,
                fy: cam.intrinsics.fy,
                cx: cam.intrinsics.cx,
                cy: cam.intrinsics.cy,
                width: cam.intrinsics.width,
                height: cam.intrinsics.height,
                camera_from_lidar: transform_to_row_major(&cam.camera_from_lidar),
            })
            .collect(),
        lidar_to_vehicle: transform_to_row_major(&rig.lidar_to_vehicle),
    };
    let text =
        serde_json::to_string_pretty(&json).map_err(|e| IoError::parse(path, e.to_string()))?;
    std::fs::write(path, text).map_err(|e| IoError::io(path, e))
}

pub fn read_calibration(path: &Path) -> Result<SensorRig, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let json: CalibrationJson = serde_json::from_str(&text)
        .map_err(|e| IoError::parse_at(path, e.line(), e.to_string()))?;
    let mut cameras = Vec::with_capacity(json.cameras.len());
    for cam in &json.cameras {
        let intrinsics =
            CameraIntrinsics::new(cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height)
                .map_err(|e| IoError::invalid(path, format!("camera `{}`: {e}", cam.id)))?;
        let camera_from_lidar = transform_from_row_major(
            &cam.camera_from_lidar,
            path,
            &format!("camera `{}` extrinsics", cam.id),
        )?;
        cameras.push(RigCamera {
            id: cam.id.clone(),
            intrinsics,
            camera_from_lidar,
        });
    }
    let lidar_to_vehicle =
        transform_from_row_major(&json.lidar_to_vehicle, path, "lidar_to_vehicle")?;
    SensorRig::new(cameras, lidar_to_vehicle).map_err(|e| IoError::invalid(path, e.to_string()))
}
