//! Binary point cloud format: 8-byte magic `SVPCLD01`, little-endian u32
//! point count, then per point f32 x, y, z, intensity.

use super::IoError;
use crate::association::{LidarPoint, PointCloud};
use nalgebra::Vector3;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"SVPCLD01";

pub fn write_point_cloud(path: &Path, cloud: &PointCloud) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| IoError::io(path, e))?;
    }
    let mut buf = Vec::with_capacity(12 + cloud.len() * 16);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    for p in &cloud.points {
        buf.extend_from_slice(&(p.position.x as f32).to_le_bytes());
        buf.extend_from_slice(&(p.position.y as f32).to_le_bytes());
        buf.extend_from_slice(&(p.position.z as f32).to_le_bytes());
        buf.extend_from_slice(&(p.intensity as f32).to_le_bytes());
    }
    let mut file = std::fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    file.write_all(&buf).map_err(|e| IoError::io(path, e))
}

pub fn read_point_cloud(path: &Path) -> Result<PointCloud, IoError> {
    let mut file = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut data = Vec::new();
    file.read_to_end(&mut data).map_err(|e| IoError::io(path, e))?;

    if data.len() < 12 || &data[..8] != MAGIC {
        return Err(IoError::parse(path, "bad magic, not an SVPCLD01 file"));
    }
    let count = u32::from_le_bytes(data[8..12].try_into().unwrap()) as usize;
    let expected = 12 + count * 16;
    if data.len() != expected {
        return Err(IoError::parse(
            path,
            format!("expected {expected} bytes for {count} points, found {}", data.len()),
        ));
    }

    let mut points = Vec::with_capacity(count);
    for i in 0..count {
        let at = |off: usize| -> f32 {
            let start = 12 + i * 16 + off * 4;
            f32::from_le_bytes(data[start..start + 4].try_into().unwrap())
        };
        points.push(LidarPoint {
            position: Vector3::new(at(0) as f64, at(1) as f64, at(2) as f64),
            intensity: (at(3) as f64).clamp(0.0, 1.0),
        });
    }
    PointCloud::new(points, 0.0).map_err(|e| IoError::invalid(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn magic_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pc.bin");
        let cloud = PointCloud::new(
            vec![LidarPoint {
                position: Vector3::new(1.5, -2.25, 0.125),
                intensity: 0.5,
            }],
            0.0,
        )
        .unwrap();
        write_point_cloud(&path, &cloud).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(bytes.len(), 12 + 16);
        // Exactly representable values survive bit-exactly.
        let back = read_point_cloud(&path).unwrap();
        assert_eq!(back.points[0].position, Vector3::new(1.5, -2.25, 0.125));
        assert_eq!(back.points[0].intensity, 0.5);
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&5u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 7]);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_point_cloud(&path),
            Err(IoError::Parse { .. })
        ));
    }

    proptest! {
        /// One write/read pass quantizes to f32; a second pass is exact.
        #[test]
        fn round_trip_is_stable_after_quantization(
            coords in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0, -10.0f64..10.0, 0.0f64..1.0), 0..50)
        ) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("pc.bin");
            let cloud = PointCloud::new(
                coords
                    .iter()
                    .map(|&(x, y, z, i)| LidarPoint {
                        position: Vector3::new(x, y, z),
                        intensity: i,
                    })
                    .collect(),
                0.0,
            )
            .unwrap();
            write_point_cloud(&path, &cloud).unwrap();
            let once = read_point_cloud(&path).unwrap();
            prop_assert_eq!(once.len(), cloud.len());
            for (a, b) in once.points.iter().zip(&cloud.points) {
                // f32 quantization bound.
                prop_assert!((a.position - b.position).abs().max() <= 1e-5);
                prop_assert!((a.intensity - b.intensity).abs() <= 1e-6);
            }
            write_point_cloud(&path, &once).unwrap();
            let twice = read_point_cloud(&path).unwrap();
            for (a, b) in twice.points.iter().zip(&once.points) {
                prop_assert_eq!(a.position, b.position);
                prop_assert_eq!(a.intensity, b.intensity);
            }
        }
    }
}
