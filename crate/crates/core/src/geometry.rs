//! Rigid-body transforms, the pinhole camera model, and LiDAR-to-image
//! projection.
//!
//! Everything here is pure and immutable after construction; values can be
//! shared freely across threads.

use nalgebra::{Matrix3, Matrix4, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Points closer than this to the image plane are rejected as unprojectable.
pub const MIN_DEPTH: f64 = 0.1;

/// Tolerance for the R^T R = I orthonormality invariant.
pub const ORTHONORMALITY_TOL: f64 = 1e-9;

/// Drift level at which `compose` re-orthonormalizes its result.
const RENORM_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not orthonormal with det +1 (max deviation {max_dev:.3e})")]
    NonOrthonormalRotation { max_dev: f64 },
    #[error("duplicate camera id `{0}` in rig")]
    DuplicateCameraId(String),
    #[error("non-positive depth {0}")]
    NonPositiveDepth(f64),
}

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("point behind camera: depth {depth:.3} <= {min_depth}")]
    BehindCamera { depth: f64, min_depth: f64 },
    #[error("projected pixel ({u:.2}, {v:.2}) outside image bounds")]
    OutOfBounds { u: f64, v: f64 },
}

/// Pinhole intrinsics; no lens distortion (inputs are rectified images).
/// A distortion model would slot in between the camera-frame point and the
/// pixel mapping below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(0.0..(width as f64)).contains(&cx) || !(0.0..(height as f64)).contains(&cy) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }
}

/// A rotation + translation, applied as `R x + t`.
///
/// Rotations are stored as matrices; quaternions are accepted only at the
/// I/O boundary and converted once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

fn orthonormality_deviation(r: &Matrix3<f64>) -> f64 {
    let gram = r.transpose() * r;
    let mut dev: f64 = (r.determinant() - 1.0).abs();
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((gram[(i, j)] - target).abs());
        }
    }
    dev
}

/// Rebuild a right-handed orthonormal basis from a slightly drifted rotation.
fn reorthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let c0 = r.column(0).normalize();
    let c2 = c0.cross(&r.column(1).into_owned()).normalize();
    let c1 = c2.cross(&c0);
    Matrix3::from_columns(&[c0, c1, c2])
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let max_dev = orthonormality_deviation(&rotation);
        if max_dev > ORTHONORMALITY_TOL {
            return Err(GeometryError::NonOrthonormalRotation { max_dev });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Build from a scalar-last quaternion `(qx, qy, qz, qw)`, the trajectory
    /// file convention.
    pub fn from_quaternion(
        qx: f64,
        qy: f64,
        qz: f64,
        qw: f64,
        translation: Vector3<f64>,
    ) -> Self {
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(qw, qx, qy, qz));
        Self {
            rotation: q.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by `angle` radians about +z.
    pub fn from_yaw(angle: f64, translation: Vector3<f64>) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Homogeneous 4x4, row-major when flattened (the calibration JSON layout).
    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_matrix4(m: &Matrix4<f64>) -> Result<Self, GeometryError> {
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn to_quaternion(&self) -> (f64, f64, f64, f64) {
        let q = UnitQuaternion::from_matrix(&self.rotation);
        (q.i, q.j, q.k, q.w)
    }
}

/// `compose(a, b)` applies `b` first, then `a`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    let mut rotation = a.rotation * b.rotation;
    if orthonormality_deviation(&rotation) > RENORM_THRESHOLD {
        rotation = reorthonormalize(&rotation);
    }
    RigidTransform {
        rotation,
        translation: a.rotation * b.translation + a.translation,
    }
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    let rotation = t.rotation.transpose();
    RigidTransform {
        rotation,
        translation: -(rotation * t.translation),
    }
}

/// Result of projecting a 3D point into an image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Project a LiDAR-frame point into pixel coordinates.
///
/// The point is moved into the camera frame, dehomogenized by its depth and
/// mapped through the intrinsics. Points at or behind the near plane and
/// pixels outside `[0, width) x [0, height)` are rejected.
pub fn project_point(
    k: &CameraIntrinsics,
    cam_from_lidar: &RigidTransform,
    point_lidar: &Vector3<f64>,
) -> Result<ImagePoint, ProjectionError> {
    let p_cam = cam_from_lidar.transform_point(point_lidar);
    let depth = p_cam.z;
    if depth <= MIN_DEPTH {
        return Err(ProjectionError::BehindCamera {
            depth,
            min_depth: MIN_DEPTH,
        });
    }
    let u = k.fx * p_cam.x / depth + k.cx;
    let v = k.fy * p_cam.y / depth + k.cy;
    if !(0.0..k.width as f64).contains(&u) || !(0.0..k.height as f64).contains(&v) {
        return Err(ProjectionError::OutOfBounds { u, v });
    }
    Ok(ImagePoint { u, v, depth })
}

/// Inverse of [`project_point`]: lift a pixel at a known depth back into the
/// LiDAR frame.
pub fn back_project(
    k: &CameraIntrinsics,
    cam_from_lidar: &RigidTransform,
    u: f64,
    v: f64,
    depth: f64,
) -> Result<Vector3<f64>, GeometryError> {
    if depth <= 0.0 {
        return Err(GeometryError::NonPositiveDepth(depth));
    }
    let p_cam = Vector3::new(
        (u - k.cx) / k.fx * depth,
        (v - k.cy) / k.fy * depth,
        depth,
    );
    Ok(invert(cam_from_lidar).transform_point(&p_cam))
}

/// One camera of a sensor rig: identity, intrinsics and its extrinsic pose
/// relative to the LiDAR.
#[derive(Debug, Clone)]
pub struct RigCamera {
    pub id: String,
    pub intrinsics: CameraIntrinsics,
    pub camera_from_lidar: RigidTransform,
}

/// The calibration the pipeline generalizes over: an ordered camera list and
/// the LiDAR mounting transform. List order defines association priority.
#[derive(Debug, Clone)]
pub struct SensorRig {
    cameras: Vec<RigCamera>,
    pub lidar_to_vehicle: RigidTransform,
}

impl SensorRig {
    pub fn new(
        cameras: Vec<RigCamera>,
        lidar_to_vehicle: RigidTransform,
    ) -> Result<Self, GeometryError> {
        for (i, cam) in cameras.iter().enumerate() {
            if cameras[..i].iter().any(|c| c.id == cam.id) {
                return Err(GeometryError::DuplicateCameraId(cam.id.clone()));
            }
        }
        Ok(Self {
            cameras,
            lidar_to_vehicle,
        })
    }

    pub fn cameras(&self) -> &[RigCamera] {
        &self.cameras
    }

    pub fn camera(&self, id: &str) -> Option<&RigCamera> {
        self.cameras.iter().find(|c| c.id == id)
    }
}

/// A timestamped vehicle pose in the world frame.
#[derive(Debug, Clone, Copy)]
pub struct Pose {
    pub timestamp: f64,
    pub world_from_vehicle: RigidTransform,
}
