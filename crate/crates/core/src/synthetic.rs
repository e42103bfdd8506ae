//! Synthetic straight-road scene generator: ray-cast LiDAR sweeps, rendered
//! per-camera class masks with optional confusion noise, a ground-truth
//! vector map and its BEV rasterization. Everything is deterministic for a
//! fixed seed, which makes the generated scenes usable as test oracles.
//!
//! The world is a flat plane. The road runs along +x with lanes centered on
//! y = 0; paint classes are laid out so every class edge falls exactly on a
//! grid cell boundary.

use crate::association::{LidarPoint, PointCloud};
use crate::geometry::{
    compose, invert, CameraIntrinsics, Pose, RigCamera, RigidTransform, SensorRig,
};
use crate::grid::{ClassRaster, ConfusionMatrix, EgoExtent, WorldExtent};
use crate::io::{self, FrameRecord, IoError, SequenceManifest};
use crate::vector::{clip_to_rect, ClipRect, MapClass, MapInstance, Polyline, VectorMap};
use nalgebra::{Matrix3, Point2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic scene spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

pub const CLASS_UNKNOWN: u8 = 0;
pub const CLASS_OFFROAD: u8 = 1;
pub const CLASS_ROAD: u8 = 2;
pub const CLASS_DIVIDER: u8 = 3;
pub const CLASS_BOUNDARY: u8 = 4;
pub const CLASS_CROSSWALK: u8 = 5;
pub const CLASS_CENTERLINE: u8 = 6;

/// Painted lines cover `2 * LINE_HALF_WIDTH` of ground.
pub const LINE_HALF_WIDTH: f64 = 0.2;

/// Crosswalk rectangles stop this far short of the lane span on each side so
/// the road boundaries stay continuous.
const CROSSWALK_Y_MARGIN: f64 = 0.4;

/// Camera pixels whose ground intersection is farther than this render as
/// unknown.
const MAX_RENDER_DISTANCE: f64 = 120.0;

pub fn scene_palette() -> Vec<String> {
    ["unknown", "offroad", "road", "divider", "boundary", "crosswalk", "centerline"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

#[derive(Debug, Clone)]
pub struct SyntheticSceneSpec {
    pub road_length: f64,
    pub road_width: f64,
    pub lane_count: usize,
    /// Divider spacing; also the lane width.
    pub lane_width: f64,
    /// Crosswalk centers along x.
    pub crosswalk_positions: Vec<f64>,
    /// Crosswalk extent along x.
    pub crosswalk_length: f64,
    pub lidar_channels: usize,
    pub lidar_azimuth_step_deg: f64,
    /// Elevation fan (degrees, both negative: the sensor looks down).
    pub lidar_elevation_deg: (f64, f64),
    pub lidar_max_range: f64,
    pub lidar_height: f64,
    /// Number of cameras, 1 to 7, spaced evenly over 360 degrees with the
    /// first one facing forward.
    pub camera_count: usize,
    pub image_width: u32,
    pub image_height: u32,
    pub focal_length: f64,
    pub camera_height: f64,
    /// Row-major C x C mask confusion `P(z|c)`; None means noise-free masks.
    pub mask_confusion: Option<Vec<f64>>,
    pub frames: usize,
    pub frame_dt: f64,
    pub speed_mps: f64,
    pub start_x: f64,
    pub cell_size: f64,
    pub ego_extent: EgoExtent,
    pub seed: u64,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self {
            road_length: 120.0,
            road_width: 18.0,
            lane_count: 4,
            lane_width: 3.2,
            crosswalk_positions: vec![30.0, 60.0, 90.0],
            crosswalk_length: 4.0,
            lidar_channels: 32,
            lidar_azimuth_step_deg: 0.35,
            lidar_elevation_deg: (-21.0, -6.5),
            lidar_max_range: 40.0,
            lidar_height: 2.0,
            camera_count: 6,
            image_width: 960,
            image_height: 540,
            focal_length: 600.0,
            camera_height: 2.2,
            mask_confusion: None,
            frames: 20,
            frame_dt: 0.5,
            speed_mps: 4.0,
            start_x: 25.0,
            cell_size: 0.2,
            ego_extent: EgoExtent::default(),
            seed: 0,
        }
    }
}

impl SyntheticSceneSpec {
    pub fn with_symmetric_noise(mut self, error_rate: f64) -> Self {
        let c = scene_palette().len();
        self.mask_confusion = Some(
            ConfusionMatrix::symmetric_noise(c, error_rate)
                .expect("valid symmetric noise rate")
                .entries()
                .to_vec(),
        );
        self
    }

    pub fn num_classes(&self) -> usize {
        scene_palette().len()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let span = self.lane_count as f64 * self.lane_width;
        if span > self.road_width + 1e-9 {
            return Err(SynthError::InvalidSpec(format!(
                "{} lanes of {} m do not fit a {} m road",
                self.lane_count, self.lane_width, self.road_width
            )));
        }
        if !(1..=7).contains(&self.camera_count) {
            return Err(SynthError::InvalidSpec(format!(
                "camera count {} outside 1..=7",
                self.camera_count
            )));
        }
        if self.lane_count == 0
            || self.frames == 0
            || self.lidar_channels == 0
            || self.lidar_azimuth_step_deg <= 0.0
        {
            return Err(SynthError::InvalidSpec(
                "counts and step sizes must be positive".into(),
            ));
        }
        if self.lidar_elevation_deg.0 >= 0.0 || self.lidar_elevation_deg.1 >= 0.0 {
            return Err(SynthError::InvalidSpec(
                "lidar elevations must look down (negative degrees)".into(),
            ));
        }
        if self.cell_size <= 0.0 {
            return Err(SynthError::InvalidSpec("cell size must be positive".into()));
        }
        for &cx in &self.crosswalk_positions {
            if cx - self.crosswalk_length / 2.0 < 0.0
                || cx + self.crosswalk_length / 2.0 > self.road_length
            {
                return Err(SynthError::InvalidSpec(format!(
                    "crosswalk at {cx} m leaves the road"
                )));
            }
        }
        Ok(())
    }

    pub fn confusion_matrix(&self) -> Result<ConfusionMatrix, SynthError> {
        let c = self.num_classes();
        match &self.mask_confusion {
            Some(entries) => ConfusionMatrix::new(entries.clone(), c)
                .map_err(|e| SynthError::InvalidSpec(e.to_string())),
            None => Ok(ConfusionMatrix::identity(c)),
        }
    }

    /// World extent: the road plus enough margin for the ego window and the
    /// LiDAR annulus.
    pub fn world_extent(&self) -> WorldExtent {
        let margin = 40.0;
        WorldExtent {
            x_min: -margin,
            y_min: -(self.road_width / 2.0 + margin),
            x_max: self.road_length + margin,
            y_max: self.road_width / 2.0 + margin,
        }
    }

    /// Straight-line trajectory down the second lane center.
    pub fn trajectory(&self) -> Vec<Pose> {
        let y = self.vehicle_y();
        (0..self.frames)
            .map(|i| Pose {
                timestamp: i as f64 * self.frame_dt,
                world_from_vehicle: RigidTransform::from_translation(Vector3::new(
                    self.start_x + i as f64 * self.frame_dt * self.speed_mps,
                    y,
                    0.0,
                )),
            })
            .collect()
    }

    fn vehicle_y(&self) -> f64 {
        let span = self.lane_count as f64 * self.lane_width;
        if self.lane_count >= 2 {
            span / 2.0 - 1.5 * self.lane_width
        } else {
            0.0
        }
    }
}

/// Rotation of a camera mounted on the vehicle, optical axis along the
/// vehicle-frame heading `yaw`, image x right, image y down.
fn camera_rotation_from_yaw(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    // Columns: camera x (right), y (down), z (forward) in vehicle coords.
    Matrix3::new(s, 0.0, c, -c, 0.0, s, 0.0, -1.0, 0.0)
}

/// Build the sensor rig: cameras spaced evenly over 360 degrees (front
/// first, defining association priority) and the LiDAR mounting transform.
pub fn build_rig(spec: &SyntheticSceneSpec) -> Result<SensorRig, SynthError> {
    spec.validate()?;
    let lidar_to_vehicle =
        RigidTransform::from_translation(Vector3::new(0.0, 0.0, spec.lidar_height));
    let intrinsics = CameraIntrinsics::new(
        spec.focal_length,
        spec.focal_length,
        spec.image_width as f64 / 2.0,
        spec.image_height as f64 / 2.0,
        spec.image_width,
        spec.image_height,
    )
    .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;

    let mut cameras = Vec::with_capacity(spec.camera_count);
    for i in 0..spec.camera_count {
        let yaw = 2.0 * std::f64::consts::PI * i as f64 / spec.camera_count as f64;
        let mount = Vector3::new(0.3 * yaw.cos(), 0.3 * yaw.sin(), spec.camera_height);
        let vehicle_from_camera = RigidTransform::new(camera_rotation_from_yaw(yaw), mount)
            .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        let camera_from_lidar = compose(&invert(&vehicle_from_camera), &lidar_to_vehicle);
        cameras.push(RigCamera {
            id: format!("cam_{i}"),
            intrinsics,
            camera_from_lidar,
        });
    }
    SensorRig::new(cameras, lidar_to_vehicle).map_err(|e| SynthError::InvalidSpec(e.to_string()))
}

/// Analytic scene geometry: the single source of truth for ground classes,
/// the vector map and the raster.
pub struct SceneGeometry {
    road_length: f64,
    road_half_width: f64,
    lane_span_half: f64,
    divider_ys: Vec<f64>,
    centerline_ys: Vec<f64>,
    crosswalks: Vec<(f64, f64)>, // (x_min, x_max)
    crosswalk_y_half: f64,
}

impl SceneGeometry {
    pub fn new(spec: &SyntheticSceneSpec) -> Self {
        let span_half = spec.lane_count as f64 * spec.lane_width / 2.0;
        let divider_ys = (1..spec.lane_count)
            .map(|k| span_half - k as f64 * spec.lane_width)
            .collect();
        let centerline_ys = (0..spec.lane_count)
            .map(|k| span_half - (k as f64 + 0.5) * spec.lane_width)
            .collect();
        let crosswalks = spec
            .crosswalk_positions
            .iter()
            .map(|&cx| {
                (
                    cx - spec.crosswalk_length / 2.0,
                    cx + spec.crosswalk_length / 2.0,
                )
            })
            .collect();
        Self {
            road_length: spec.road_length,
            road_half_width: spec.road_width / 2.0,
            lane_span_half: span_half,
            divider_ys,
            centerline_ys,
            crosswalks,
            crosswalk_y_half: span_half - CROSSWALK_Y_MARGIN,
        }
    }

    fn in_crosswalk_x(&self, x: f64) -> bool {
        self.crosswalks.iter().any(|&(x0, x1)| x > x0 && x < x1)
    }

    /// Ground-truth class of a ground point. Priority: boundary over
    /// crosswalk over divider over centerline over road; painted lines are
    /// interrupted where a crosswalk crosses them.
    pub fn class_at_ground(&self, x: f64, y: f64) -> u8 {
        let on_road = (0.0..=self.road_length).contains(&x) && y.abs() <= self.road_half_width;
        if !on_road {
            return CLASS_OFFROAD;
        }
        if (0.0..=self.road_length).contains(&x)
            && ((y - self.lane_span_half).abs() < LINE_HALF_WIDTH
                || (y + self.lane_span_half).abs() < LINE_HALF_WIDTH)
        {
            return CLASS_BOUNDARY;
        }
        if self.in_crosswalk_x(x) && y.abs() < self.crosswalk_y_half {
            return CLASS_CROSSWALK;
        }
        if !self.in_crosswalk_x(x) {
            if self
                .divider_ys
                .iter()
                .any(|&dy| (y - dy).abs() < LINE_HALF_WIDTH)
            {
                return CLASS_DIVIDER;
            }
            if self
                .centerline_ys
                .iter()
                .any(|&cy| (y - cy).abs() < LINE_HALF_WIDTH)
            {
                return CLASS_CENTERLINE;
            }
        }
        CLASS_ROAD
    }

    /// The x-intervals of a painted line, split at crosswalks.
    fn line_segments(&self) -> Vec<(f64, f64)> {
        let mut cuts: Vec<(f64, f64)> = self.crosswalks.clone();
        cuts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut segments = Vec::new();
        let mut x = 0.0;
        for &(x0, x1) in &cuts {
            if x0 > x {
                segments.push((x, x0));
            }
            x = x1;
        }
        if x < self.road_length {
            segments.push((x, self.road_length));
        }
        segments
    }

    /// The world-frame ground-truth vector map.
    pub fn ground_truth_vector_map(&self) -> VectorMap {
        let mut instances = Vec::new();
        let open_line = |y: f64, x0: f64, x1: f64| {
            Polyline::open(vec![Point2::new(x0, y), Point2::new(x1, y)]).expect("two points")
        };
        for sign in [-1.0, 1.0] {
            instances.push(
                MapInstance::new(
                    MapClass::Boundary,
                    open_line(sign * self.lane_span_half, 0.0, self.road_length),
                    1.0,
                )
                .unwrap(),
            );
        }
        for &dy in &self.divider_ys {
            for (x0, x1) in self.line_segments() {
                instances.push(
                    MapInstance::new(MapClass::Divider, open_line(dy, x0, x1), 1.0).unwrap(),
                );
            }
        }
        for &cy in &self.centerline_ys {
            for (x0, x1) in self.line_segments() {
                instances.push(
                    MapInstance::new(MapClass::Centerline, open_line(cy, x0, x1), 1.0).unwrap(),
                );
            }
        }
        let yh = self.crosswalk_y_half;
        for &(x0, x1) in &self.crosswalks {
            instances.push(
                MapInstance::new(
                    MapClass::PedCrossing,
                    Polyline::closed(vec![
                        Point2::new(x0, -yh),
                        Point2::new(x1, -yh),
                        Point2::new(x1, yh),
                        Point2::new(x0, yh),
                    ])
                    .unwrap(),
                    1.0,
                )
                .unwrap(),
            );
        }
        VectorMap::new(instances)
    }

    /// Rasterize the analytic scene into a world-frame class raster.
    pub fn rasterize(&self, extent: &WorldExtent, cell_size: f64) -> ClassRaster {
        let nx = ((extent.x_max - extent.x_min) / cell_size).ceil() as usize;
        let ny = ((extent.y_max - extent.y_min) / cell_size).ceil() as usize;
        let mut data = vec![0u8; nx * ny];
        for iy in 0..ny {
            let y = extent.y_min + (iy as f64 + 0.5) * cell_size;
            let row = ny - 1 - iy;
            for ix in 0..nx {
                let x = extent.x_min + (ix as f64 + 0.5) * cell_size;
                data[row * nx + ix] = self.class_at_ground(x, y);
            }
        }
        ClassRaster {
            width: nx,
            height: ny,
            cell_size,
            x_min: extent.x_min,
            y_min: extent.y_min,
            data,
        }
    }
}

/// Rasterize a vector map alone (no road fill): flat-capped line bands for
/// open classes, filled polygons for crossings. Independent of
/// [`SceneGeometry::rasterize`]; used to check the two stay consistent.
pub fn rasterize_vector_map(
    map: &VectorMap,
    extent: &WorldExtent,
    cell_size: f64,
    line_half_width: f64,
) -> ClassRaster {
    let nx = ((extent.x_max - extent.x_min) / cell_size).ceil() as usize;
    let ny = ((extent.y_max - extent.y_min) / cell_size).ceil() as usize;
    let mut data = vec![0u8; nx * ny];

    let paint_class = |class: MapClass, data: &mut Vec<u8>| {
        let value = match class {
            MapClass::Centerline => CLASS_CENTERLINE,
            MapClass::Divider => CLASS_DIVIDER,
            MapClass::PedCrossing => CLASS_CROSSWALK,
            MapClass::Boundary => CLASS_BOUNDARY,
        };
        for inst in map.instances_of(class) {
            for iy in 0..ny {
                let y = extent.y_min + (iy as f64 + 0.5) * cell_size;
                let row = ny - 1 - iy;
                for ix in 0..nx {
                    let x = extent.x_min + (ix as f64 + 0.5) * cell_size;
                    let p = Point2::new(x, y);
                    let hit = if class == MapClass::PedCrossing {
                        point_in_polygon(&p, inst.polyline.points())
                    } else {
                        inst.polyline.edges().any(|(a, b)| {
                            flat_cap_distance(&p, &a, &b)
                                .map(|d| d < line_half_width)
                                .unwrap_or(false)
                        })
                    };
                    if hit {
                        data[row * nx + ix] = value;
                    }
                }
            }
        }
    };

    // Reverse priority order so later paints win.
    paint_class(MapClass::Centerline, &mut data);
    paint_class(MapClass::Divider, &mut data);
    paint_class(MapClass::PedCrossing, &mut data);
    paint_class(MapClass::Boundary, &mut data);

    ClassRaster {
        width: nx,
        height: ny,
        cell_size,
        x_min: extent.x_min,
        y_min: extent.y_min,
        data,
    }
}

/// Perpendicular distance to a segment, or None when the projection falls
/// outside the segment (no end caps).
fn flat_cap_distance(p: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> Option<f64> {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 < 1e-18 {
        return None;
    }
    let t = (p - a).dot(&ab) / len2;
    if !(0.0..=1.0).contains(&t) {
        return None;
    }
    Some((p - (a + ab * t)).norm())
}

fn point_in_polygon(p: &Point2<f64>, ring: &[Point2<f64>]) -> bool {
    let mut inside = false;
    let n = ring.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y)
            && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x
        {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn intensity_for_class(class: u8, rng: &mut impl Rng) -> f64 {
    let base: f64 = match class {
        CLASS_DIVIDER | CLASS_BOUNDARY | CLASS_CROSSWALK | CLASS_CENTERLINE => 0.85,
        CLASS_ROAD => 0.35,
        _ => 0.12,
    };
    (base + rng.gen_range(-0.1..0.1)).clamp(0.0, 1.0)
}

/// One ideal LiDAR sweep: rays on a regular elevation x azimuth lattice
/// intersected with the ground plane. Points are returned in the LiDAR
/// frame with class-dependent intensities.
pub fn cast_lidar_sweep(
    scene: &SceneGeometry,
    spec: &SyntheticSceneSpec,
    world_from_lidar: &RigidTransform,
    timestamp: f64,
    rng: &mut impl Rng,
) -> PointCloud {
    let azimuth_steps = (360.0 / spec.lidar_azimuth_step_deg).round() as usize;
    let (elev_lo, elev_hi) = spec.lidar_elevation_deg;
    let origin_z = world_from_lidar.translation().z;
    let mut points = Vec::with_capacity(spec.lidar_channels * azimuth_steps);
    for channel in 0..spec.lidar_channels {
        let frac = if spec.lidar_channels > 1 {
            channel as f64 / (spec.lidar_channels - 1) as f64
        } else {
            0.5
        };
        let elevation = (elev_lo + frac * (elev_hi - elev_lo)).to_radians();
        let (se, ce) = elevation.sin_cos();
        for step in 0..azimuth_steps {
            let azimuth = (step as f64 * spec.lidar_azimuth_step_deg).to_radians();
            let (sa, ca) = azimuth.sin_cos();
            let dir_lidar = Vector3::new(ce * ca, ce * sa, se);
            let dir_world = world_from_lidar.rotation() * dir_lidar;
            if dir_world.z >= -1e-9 {
                continue;
            }
            let t = -origin_z / dir_world.z;
            if t <= 0.0 || t > spec.lidar_max_range {
                continue;
            }
            let hit = world_from_lidar.translation() + dir_world * t;
            let class = scene.class_at_ground(hit.x, hit.y);
            points.push(LidarPoint {
                position: dir_lidar * t,
                intensity: intensity_for_class(class, rng),
            });
        }
    }
    PointCloud::new(points, timestamp).expect("ray-cast points are finite")
}

/// Render a camera's class mask by intersecting each pixel's ray with the
/// ground plane. Pixel (ix, iy) uses the continuous image point (ix, iy),
/// matching the nearest-integer lookup used during association.
pub fn render_camera_mask(
    scene: &SceneGeometry,
    intrinsics: &CameraIntrinsics,
    world_from_camera: &RigidTransform,
    max_distance: f64,
) -> Vec<u8> {
    let (w, h) = (intrinsics.width as usize, intrinsics.height as usize);
    let origin = *world_from_camera.translation();
    let rotation = *world_from_camera.rotation();
    let mut mask = vec![CLASS_UNKNOWN; w * h];
    mask.par_chunks_mut(w).enumerate().for_each(|(iy, row)| {
        for (ix, out) in row.iter_mut().enumerate() {
            let dir_cam = Vector3::new(
                (ix as f64 - intrinsics.cx) / intrinsics.fx,
                (iy as f64 - intrinsics.cy) / intrinsics.fy,
                1.0,
            );
            let dir = rotation * dir_cam;
            if dir.z >= -1e-12 {
                continue; // above the horizon
            }
            let t = -origin.z / dir.z;
            let hit = origin + dir * t;
            if (hit - origin).norm() > max_distance {
                continue;
            }
            *out = scene.class_at_ground(hit.x, hit.y);
        }
    });
    mask
}

/// Resample every pixel through a confusion matrix column: the synthetic
/// stand-in for segmentation error.
pub fn apply_confusion_noise(mask: &mut [u8], cm: &ConfusionMatrix, rng: &mut impl Rng) {
    let c = cm.num_classes();
    for value in mask.iter_mut() {
        let truth = *value as usize;
        let draw: f64 = rng.gen();
        let mut acc = 0.0;
        let mut sampled = c - 1;
        for z in 0..c {
            acc += cm.p(z as u8, truth);
            if draw < acc {
                sampled = z;
                break;
            }
        }
        *value = sampled as u8;
    }
}

/// Everything `generate_synthetic` produces.
pub struct SynthOutput {
    pub manifest_path: PathBuf,
    pub ground_truth_vector_map: VectorMap,
    pub ground_truth_raster: ClassRaster,
    pub gt_vector_world_path: PathBuf,
    pub gt_raster_path: PathBuf,
    /// Per-frame ego-frame ground truth, clipped to the ego window.
    pub gt_frame_paths: Vec<PathBuf>,
    pub confusion_path: PathBuf,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream))
}

/// Per-frame ground truth: the world vector map moved into the ego frame and
/// clipped to the ego window.
pub fn ego_ground_truth(
    world_map: &VectorMap,
    pose: &Pose,
    ego: &EgoExtent,
    cell_size: f64,
) -> VectorMap {
    let ego_from_world = invert(&pose.world_from_vehicle);
    let rect = ClipRect {
        x_min: -ego.backward,
        x_max: ego.forward,
        y_min: -ego.right,
        y_max: ego.left,
    };
    clip_to_rect(&world_map.transformed(&ego_from_world), &rect, 2.0 * cell_size)
        .with_timestamp(pose.timestamp)
}

/// Generate the full on-disk dataset: manifest, calibration, trajectory,
/// point clouds, masks, ground-truth vector maps (world and per frame), the
/// BEV raster and the mask confusion matrix.
pub fn generate_synthetic(spec: &SyntheticSceneSpec, out_dir: &Path) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| IoError::io(out_dir, e))?;

    let scene = SceneGeometry::new(spec);
    let rig = build_rig(spec)?;
    let poses = spec.trajectory();
    let palette = scene_palette();
    let extent = spec.world_extent();
    let confusion = spec.confusion_matrix()?;
    let noisy = spec.mask_confusion.is_some();

    io::calibration::write_calibration(&out_dir.join("calibration.json"), &rig)?;
    io::trajectory::write_trajectory(&out_dir.join("trajectory.txt"), &poses)?;

    let mut frames = Vec::with_capacity(spec.frames);
    for (frame_idx, pose) in poses.iter().enumerate() {
        let world_from_lidar = compose(&pose.world_from_vehicle, &rig.lidar_to_vehicle);
        let mut rng = stream_rng(spec.seed, frame_idx as u64);
        let cloud = cast_lidar_sweep(&scene, spec, &world_from_lidar, pose.timestamp, &mut rng);
        let cloud_rel = format!("clouds/{frame_idx:06}.bin");
        io::point_cloud::write_point_cloud(&out_dir.join(&cloud_rel), &cloud)?;

        let mut masks = std::collections::BTreeMap::new();
        for (cam_idx, cam) in rig.cameras().iter().enumerate() {
            let world_from_camera = compose(&world_from_lidar, &invert(&cam.camera_from_lidar));
            let mut mask = render_camera_mask(
                &scene,
                &cam.intrinsics,
                &world_from_camera,
                MAX_RENDER_DISTANCE,
            );
            if noisy {
                let mut noise_rng =
                    stream_rng(spec.seed, 1_000_000 + (frame_idx * 16 + cam_idx) as u64);
                apply_confusion_noise(&mut mask, &confusion, &mut noise_rng);
            }
            let mask_rel = format!("masks/{}/{frame_idx:06}.pgm", cam.id);
            io::pgm::write_pgm(
                &out_dir.join(&mask_rel),
                cam.intrinsics.width,
                cam.intrinsics.height,
                &mask,
            )?;
            masks.insert(cam.id.clone(), PathBuf::from(mask_rel));
        }
        frames.push(FrameRecord {
            timestamp: pose.timestamp,
            cloud: cloud_rel.into(),
            masks,
        });
    }

    let manifest = SequenceManifest {
        calibration: "calibration.json".into(),
        trajectory: "trajectory.txt".into(),
        palette: palette.clone(),
        world_extent: Some(extent),
        cell_size: Some(spec.cell_size),
        frames,
    };
    let manifest_path = out_dir.join("manifest.json");
    io::write_manifest(&manifest_path, &manifest)?;

    let gt_map = scene.ground_truth_vector_map();
    let gt_vector_world_path = out_dir.join("gt/vector_world.json");
    io::vector_map_file::write_vector_map(&gt_vector_world_path, &gt_map)?;

    let raster = scene.rasterize(&extent, spec.cell_size);
    let gt_raster_path = out_dir.join("gt/bev_raster.pgm");
    io::snapshot::write_world_raster(&gt_raster_path, &raster, &palette)?;

    let confusion_path = out_dir.join("gt/confusion.json");
    io::confusion_file::write_confusion(&confusion_path, &confusion)?;

    let mut gt_frame_paths = Vec::with_capacity(poses.len());
    for (frame_idx, pose) in poses.iter().enumerate() {
        let ego_gt = ego_ground_truth(&gt_map, pose, &spec.ego_extent, spec.cell_size);
        let path = out_dir.join(format!("gt/frames/{frame_idx:06}.json"));
        io::vector_map_file::write_vector_map(&path, &ego_gt)?;
        gt_frame_paths.push(path);
    }

    Ok(SynthOutput {
        manifest_path,
        ground_truth_vector_map: gt_map,
        ground_truth_raster: raster,
        gt_vector_world_path,
        gt_raster_path,
        gt_frame_paths,
        confusion_path,
    })
}
