//! Trajectory text format: one pose per line,
//! `timestamp tx ty tz qx qy qz qw` (quaternion scalar-last,
//! world_from_vehicle).

use super::IoError;
use crate::geometry::{Pose, RigidTransform};
use nalgebra::Vector3;
use std::fmt::Write as _;
use std::path::Path;

pub fn write_trajectory(path: &Path, poses: &[Pose]) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| IoError::io(path, e))?;
    }
    let mut text = String::new();
    for pose in poses {
        let t = pose.world_from_vehicle.translation();
        let (qx, qy, qz, qw) = pose.world_from_vehicle.to_quaternion();
        writeln!(
            text,
            "{} {} {} {} {} {} {} {}",
            pose.timestamp, t.x, t.y, t.z, qx, qy, qz, qw
        )
        .expect("writing to a String cannot fail");
    }
    std::fs::write(path, text).map_err(|e| IoError::io(path, e))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<Pose>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut poses = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| {
                    IoError::parse_at(path, line_no + 1, format!("bad number `{tok}`"))
                })
            })
            .collect::<Result<_, _>>()?;
        if fields.len() != 8 {
            return Err(IoError::parse_at(
                path,
                line_no + 1,
                format!("expected 8 fields, found {}", fields.len()),
            ));
        }
        let pose = Pose {
            timestamp: fields[0],
            world_from_vehicle: RigidTransform::from_quaternion(
                fields[4],
                fields[5],
                fields[6],
                fields[7],
                Vector3::new(fields[1], fields[2], fields[3]),
            ),
        };
        if let Some(last) = poses.last() {
            let last: &Pose = last;
            if pose.timestamp <= last.timestamp {
                return Err(IoError::parse_at(
                    path,
                    line_no + 1,
                    format!(
                        "timestamps must be strictly increasing: {} after {}",
                        pose.timestamp, last.timestamp
                    ),
                ));
            }
        }
        poses.push(pose);
    }
    Ok(poses)
}
