//! World-anchored probabilistic BEV semantic grid with per-cell Bayesian
//! updates, argmax rendering, and ego-centric cropping.
//!
//! Cell state is a categorical distribution over semantic classes, stored in
//! log space and renormalized on every update so long sequences cannot
//! underflow. Class id 0 is reserved for "unknown" when rendering.

use crate::association::SemanticPointCloud;
use crate::geometry::{compose, Pose, SensorRig};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("all posterior products underflowed to zero")]
    DegenerateEvidence,
}

/// World extent of the grid in meters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WorldExtent {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

/// Ego-centric crop window in meters around the vehicle (+x forward, +y left).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EgoExtent {
    pub forward: f64,
    pub backward: f64,
    pub left: f64,
    pub right: f64,
}

impl Default for EgoExtent {
    fn default() -> Self {
        Self {
            forward: 30.0,
            backward: 30.0,
            left: 15.0,
            right: 15.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridMapConfig {
    pub cell_size: f64,
    pub world_extent: WorldExtent,
    pub num_classes: usize,
    pub ego_extent: EgoExtent,
    pub intensity_bins: usize,
}

impl GridMapConfig {
    pub fn new(
        cell_size: f64,
        world_extent: WorldExtent,
        num_classes: usize,
    ) -> Result<Self, GridError> {
        let config = Self {
            cell_size,
            world_extent,
            num_classes,
            ego_extent: EgoExtent::default(),
            intensity_bins: 8,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_ego_extent(mut self, ego_extent: EgoExtent) -> Self {
        self.ego_extent = ego_extent;
        self
    }

    pub fn with_intensity_bins(mut self, bins: usize) -> Self {
        self.intensity_bins = bins;
        self
    }

    fn validate(&self) -> Result<(), GridError> {
        if self.cell_size <= 0.0 {
            return Err(GridError::InvalidConfig(format!(
                "cell_size {} must be positive",
                self.cell_size
            )));
        }
        if self.world_extent.x_max <= self.world_extent.x_min
            || self.world_extent.y_max <= self.world_extent.y_min
        {
            return Err(GridError::InvalidConfig("degenerate world extent".into()));
        }
        if self.num_classes < 2 {
            return Err(GridError::InvalidConfig(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.intensity_bins == 0 {
            return Err(GridError::InvalidConfig("need at least 1 intensity bin".into()));
        }
        Ok(())
    }

    /// Number of cells along x (columns) and y (rows of the math grid).
    pub fn dimensions(&self) -> (usize, usize) {
        let nx = ((self.world_extent.x_max - self.world_extent.x_min) / self.cell_size).ceil();
        let ny = ((self.world_extent.y_max - self.world_extent.y_min) / self.cell_size).ceil();
        (nx as usize, ny as usize)
    }

    #[inline]
    fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (nx, ny) = self.dimensions();
        let ix = ((x - self.world_extent.x_min) / self.cell_size).floor();
        let iy = ((y - self.world_extent.y_min) / self.cell_size).floor();
        if ix < 0.0 || iy < 0.0 || ix >= nx as f64 || iy >= ny as f64 {
            return None;
        }
        Some((ix as usize, iy as usize))
    }
}

fn validate_columns(
    entries: &[f64],
    rows: usize,
    cols: usize,
    what: &str,
) -> Result<(), GridError> {
    if entries.len() != rows * cols {
        return Err(GridError::InvalidDistribution(format!(
            "{what} has {} entries, expected {rows}x{cols}",
            entries.len()
        )));
    }
    if entries.iter().any(|&p| p < 0.0) {
        return Err(GridError::InvalidDistribution(format!(
            "{what} has a negative entry"
        )));
    }
    for c in 0..cols {
        let sum: f64 = (0..rows).map(|r| entries[r * cols + c]).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(GridError::InvalidDistribution(format!(
                "{what} column {c} sums to {sum}, expected 1"
            )));
        }
    }
    Ok(())
}

/// P(observed label z | true class c), columns normalized. Log entries are
/// precomputed once.
#[derive(Debug, Clone)]
pub struct ConfusionMatrix {
    num_classes: usize,
    entries: Vec<f64>,
    log_entries: Vec<f64>,
}

impl ConfusionMatrix {
    /// `entries[z * num_classes + c] = P(z | c)`.
    pub fn new(entries: Vec<f64>, num_classes: usize) -> Result<Self, GridError> {
        validate_columns(&entries, num_classes, num_classes, "confusion matrix")?;
        let log_entries = entries.iter().map(|&p| p.ln()).collect();
        Ok(Self {
            num_classes,
            entries,
            log_entries,
        })
    }

    pub fn identity(num_classes: usize) -> Self {
        let mut entries = vec![0.0; num_classes * num_classes];
        for c in 0..num_classes {
            entries[c * num_classes + c] = 1.0;
        }
        Self::new(entries, num_classes).expect("identity is a valid confusion matrix")
    }

    pub fn column_uniform(num_classes: usize) -> Self {
        let p = 1.0 / num_classes as f64;
        Self::new(vec![p; num_classes * num_classes], num_classes)
            .expect("uniform is a valid confusion matrix")
    }

    /// Diagonal `1 - error_rate`, remainder spread evenly off-diagonal.
    pub fn symmetric_noise(num_classes: usize, error_rate: f64) -> Result<Self, GridError> {
        if !(0.0..1.0).contains(&error_rate) {
            return Err(GridError::InvalidDistribution(format!(
                "error rate {error_rate} outside [0, 1)"
            )));
        }
        let off = error_rate / (num_classes - 1) as f64;
        let mut entries = vec![off; num_classes * num_classes];
        for c in 0..num_classes {
            entries[c * num_classes + c] = 1.0 - error_rate;
        }
        Self::new(entries, num_classes)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn p(&self, z: u8, c: usize) -> f64 {
        self.entries[z as usize * self.num_classes + c]
    }

    #[inline]
    pub fn log_p(&self, z: u8, c: usize) -> f64 {
        self.log_entries[z as usize * self.num_classes + c]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// P(intensity bin b | true class c), columns normalized over bins.
#[derive(Debug, Clone)]
pub struct IntensityPrior {
    num_bins: usize,
    num_classes: usize,
    entries: Vec<f64>,
    log_entries: Vec<f64>,
}

impl IntensityPrior {
    /// `entries[b * num_classes + c] = P(bin b | c)`.
    pub fn new(entries: Vec<f64>, num_bins: usize, num_classes: usize) -> Result<Self, GridError> {
        validate_columns(&entries, num_bins, num_classes, "intensity prior")?;
        let log_entries = entries.iter().map(|&p| p.ln()).collect();
        Ok(Self {
            num_bins,
            num_classes,
            entries,
            log_entries,
        })
    }

    /// The disabled default: every class sees every bin equally often, so the
    /// intensity factor cancels in the posterior.
    pub fn column_uniform(num_bins: usize, num_classes: usize) -> Self {
        let p = 1.0 / num_bins as f64;
        Self::new(vec![p; num_bins * num_classes], num_bins, num_classes)
            .expect("uniform is a valid intensity prior")
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    #[inline]
    pub fn log_p(&self, bin: usize, c: usize) -> f64 {
        self.log_entries[bin * self.num_classes + c]
    }

    #[inline]
    pub fn p(&self, bin: usize, c: usize) -> f64 {
        self.entries[bin * self.num_classes + c]
    }
}

/// Discretize an intensity in [0, 1] into one of `bins` uniform bins.
#[inline]
pub fn intensity_bin(intensity: f64, bins: usize) -> usize {
    ((intensity * bins as f64) as usize).min(bins - 1)
}

/// One Bayes step on a cell's log-distribution. Returns false (and leaves the
/// state untouched) when every product underflows to zero.
fn bayes_step_log(
    log_probs: &mut [f64],
    z: u8,
    i_bin: usize,
    cm: &ConfusionMatrix,
    ip: &IntensityPrior,
    scratch: &mut Vec<f64>,
) -> bool {
    scratch.clear();
    scratch.extend(
        log_probs
            .iter()
            .enumerate()
            .map(|(c, &lp)| lp + cm.log_p(z, c) + ip.log_p(i_bin, c)),
    );
    let max = scratch.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return false;
    }
    let norm = max + scratch.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    for (lp, &s) in log_probs.iter_mut().zip(scratch.iter()) {
        *lp = s - norm;
    }
    true
}

/// Single-cell Bayesian update: `posterior[c] ∝ P(z|c) P(i|c) prior[c]`,
/// computed in log space and renormalized.
pub fn update_cell(
    prior: &[f64],
    z: u8,
    i_bin: usize,
    cm: &ConfusionMatrix,
    ip: &IntensityPrior,
) -> Result<Vec<f64>, GridError> {
    debug_assert!(
        (prior.iter().sum::<f64>() - 1.0).abs() <= 1e-9,
        "prior must sum to 1"
    );
    let mut log_probs: Vec<f64> = prior.iter().map(|&p| p.ln()).collect();
    let mut scratch = Vec::with_capacity(prior.len());
    if !bayes_step_log(&mut log_probs, z, i_bin, cm, ip, &mut scratch) {
        return Err(GridError::DegenerateEvidence);
    }
    Ok(log_probs.iter().map(|&l| l.exp()).collect())
}

const TILE_SHIFT: usize = 5;
const TILE_SIZE: usize = 1 << TILE_SHIFT;

struct Tile {
    log_probs: Vec<f64>,
    observed: Vec<bool>,
}

impl Tile {
    fn new(num_classes: usize) -> Self {
        let uniform = (1.0 / num_classes as f64).ln();
        Self {
            log_probs: vec![uniform; TILE_SIZE * TILE_SIZE * num_classes],
            observed: vec![false; TILE_SIZE * TILE_SIZE],
        }
    }
}

/// Counters produced by one [`ProbGrid::integrate`] call.
#[derive(Debug, Clone, Copy, Default)]
pub struct IntegrateStats {
    pub integrated: usize,
    pub out_of_extent: usize,
    pub degenerate: usize,
}

/// World-anchored sparse probability grid. Tiles are allocated on first
/// touch, so kilometre-scale extents only pay for visited cells.
pub struct ProbGrid {
    config: GridMapConfig,
    tiles: HashMap<(usize, usize), Tile>,
    degenerate_updates: u64,
}

impl ProbGrid {
    pub fn new(config: GridMapConfig) -> Result<Self, GridError> {
        config.validate()?;
        Ok(Self {
            config,
            tiles: HashMap::new(),
            degenerate_updates: 0,
        })
    }

    pub fn config(&self) -> &GridMapConfig {
        &self.config
    }

    pub fn degenerate_updates(&self) -> u64 {
        self.degenerate_updates
    }

    pub fn num_observed_cells(&self) -> usize {
        self.tiles
            .values()
            .map(|t| t.observed.iter().filter(|&&o| o).count())
            .sum()
    }

    /// Class probabilities of a cell, or None when the cell was never
    /// observed (it implicitly holds the uniform distribution).
    pub fn cell_probabilities(&self, ix: usize, iy: usize) -> Option<Vec<f64>> {
        let tile = self.tiles.get(&(ix >> TILE_SHIFT, iy >> TILE_SHIFT))?;
        let local = (iy & (TILE_SIZE - 1)) * TILE_SIZE + (ix & (TILE_SIZE - 1));
        if !tile.observed[local] {
            return None;
        }
        let c = self.config.num_classes;
        Some(
            tile.log_probs[local * c..(local + 1) * c]
                .iter()
                .map(|&l| l.exp())
                .collect(),
        )
    }

    fn cell_argmax(&self, ix: usize, iy: usize) -> u8 {
        let tile = match self.tiles.get(&(ix >> TILE_SHIFT, iy >> TILE_SHIFT)) {
            Some(t) => t,
            None => return 0,
        };
        let local = (iy & (TILE_SIZE - 1)) * TILE_SIZE + (ix & (TILE_SIZE - 1));
        if !tile.observed[local] {
            return 0;
        }
        let c = self.config.num_classes;
        let lp = &tile.log_probs[local * c..(local + 1) * c];
        let mut best = 0usize;
        for k in 1..c {
            if lp[k] > lp[best] {
                best = k;
            }
        }
        best as u8
    }

    fn observed_at(&self, ix: usize, iy: usize) -> bool {
        self.tiles
            .get(&(ix >> TILE_SHIFT, iy >> TILE_SHIFT))
            .map(|t| t.observed[(iy & (TILE_SIZE - 1)) * TILE_SIZE + (ix & (TILE_SIZE - 1))])
            .unwrap_or(false)
    }

    /// Rendered class at a world position; unknown (0) outside the extent or
    /// on unobserved cells.
    pub fn class_at_world(&self, x: f64, y: f64) -> u8 {
        match self.config.cell_of(x, y) {
            Some((ix, iy)) => self.cell_argmax(ix, iy),
            None => 0,
        }
    }

    pub fn observed_at_world(&self, x: f64, y: f64) -> bool {
        match self.config.cell_of(x, y) {
            Some((ix, iy)) => self.observed_at(ix, iy),
            None => false,
        }
    }

    /// Fold a semantic point cloud into the grid: LiDAR -> vehicle -> world,
    /// one Bayes step per point on the cell the point falls into.
    pub fn integrate(
        &mut self,
        spc: &SemanticPointCloud,
        pose: &Pose,
        rig: &SensorRig,
        cm: &ConfusionMatrix,
        ip: &IntensityPrior,
    ) -> IntegrateStats {
        let world_from_lidar = compose(&pose.world_from_vehicle, &rig.lidar_to_vehicle);
        let num_classes = self.config.num_classes;
        let bins = self.config.intensity_bins;
        let mut stats = IntegrateStats::default();
        let mut scratch = Vec::with_capacity(num_classes);

        for entry in &spc.entries {
            let p_world = world_from_lidar.transform_point(&entry.position);
            let (ix, iy) = match self.config.cell_of(p_world.x, p_world.y) {
                Some(cell) => cell,
                None => {
                    stats.out_of_extent += 1;
                    continue;
                }
            };
            let bin = intensity_bin(entry.intensity, bins);
            let tile = self
                .tiles
                .entry((ix >> TILE_SHIFT, iy >> TILE_SHIFT))
                .or_insert_with(|| Tile::new(num_classes));
            let local = (iy & (TILE_SIZE - 1)) * TILE_SIZE + (ix & (TILE_SIZE - 1));
            let lp = &mut tile.log_probs[local * num_classes..(local + 1) * num_classes];
            if bayes_step_log(lp, entry.class_id, bin, cm, ip, &mut scratch) {
                tile.observed[local] = true;
                stats.integrated += 1;
            } else {
                self.degenerate_updates += 1;
                stats.degenerate += 1;
            }
        }
        stats
    }

    /// Render the full world extent into a class-id raster. Observed cells
    /// take their argmax class (ties to the lowest id); unobserved cells take
    /// the reserved unknown class 0.
    pub fn render(&self) -> ClassRaster {
        let (nx, ny) = self.config.dimensions();
        let mut data = vec![0u8; nx * ny];
        for ((tx, ty), tile) in &self.tiles {
            for local in 0..TILE_SIZE * TILE_SIZE {
                if !tile.observed[local] {
                    continue;
                }
                let ix = (tx << TILE_SHIFT) + (local & (TILE_SIZE - 1));
                let iy = (ty << TILE_SHIFT) + (local >> TILE_SHIFT);
                if ix >= nx || iy >= ny {
                    continue;
                }
                let row = ny - 1 - iy;
                data[row * nx + ix] = self.cell_argmax(ix, iy);
            }
        }
        ClassRaster {
            width: nx,
            height: ny,
            cell_size: self.config.cell_size,
            x_min: self.config.world_extent.x_min,
            y_min: self.config.world_extent.y_min,
            data,
        }
    }

    /// Sample an ego-centric semantic map around the pose by nearest-neighbor
    /// lookup of each ego-cell center in the world grid. The vehicle sits at
    /// the configured origin with +x forward. Cells whose center leaves the
    /// world extent are filled with unknown and a warning is emitted.
    pub fn crop_ego(&self, pose: &Pose) -> SemanticMap {
        let ego = self.config.ego_extent;
        let cs = self.config.cell_size;
        let rows = ((ego.forward + ego.backward) / cs).round() as usize;
        let cols = ((ego.left + ego.right) / cs).round() as usize;
        let mut class_ids = vec![0u8; rows * cols];
        let mut observed = vec![false; rows * cols];
        let mut left_world = 0usize;
        for r in 0..rows {
            let x = ego.forward - (r as f64 + 0.5) * cs;
            for c in 0..cols {
                let y = ego.left - (c as f64 + 0.5) * cs;
                let p = pose
                    .world_from_vehicle
                    .transform_point(&nalgebra::Vector3::new(x, y, 0.0));
                match self.config.cell_of(p.x, p.y) {
                    Some((ix, iy)) => {
                        class_ids[r * cols + c] = self.cell_argmax(ix, iy);
                        observed[r * cols + c] = self.observed_at(ix, iy);
                    }
                    None => left_world += 1,
                }
            }
        }
        if left_world > 0 {
            log::warn!(
                "ego window leaves the world extent: {left_world} of {} cells filled with unknown",
                rows * cols
            );
        }
        SemanticMap {
            rows,
            cols,
            cell_size: cs,
            ego_extent: ego,
            class_ids,
            observed,
            palette: (0..self.config.num_classes)
                .map(|c| format!("class_{c}"))
                .collect(),
            pose: *pose,
        }
    }
}

/// A class-id image over a world-frame rectangle. Row 0 is the top of the
/// image (maximum y), column 0 the minimum x.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRaster {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub x_min: f64,
    pub y_min: f64,
    pub data: Vec<u8>,
}

impl ClassRaster {
    pub fn class_at_world(&self, x: f64, y: f64) -> Option<u8> {
        let ix = ((x - self.x_min) / self.cell_size).floor();
        let iy = ((y - self.y_min) / self.cell_size).floor();
        if ix < 0.0 || iy < 0.0 || ix >= self.width as f64 || iy >= self.height as f64 {
            return None;
        }
        let row = self.height - 1 - iy as usize;
        Some(self.data[row * self.width + ix as usize])
    }
}

/// Ego-centric rendered semantic map. Row 0 faces forward (+x), column 0
/// faces left (+y); the vehicle sits between the forward and backward halves.
#[derive(Debug, Clone)]
pub struct SemanticMap {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
    pub ego_extent: EgoExtent,
    pub class_ids: Vec<u8>,
    pub observed: Vec<bool>,
    pub palette: Vec<String>,
    pub pose: Pose,
}

impl SemanticMap {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rows: usize,
        cols: usize,
        cell_size: f64,
        ego_extent: EgoExtent,
        class_ids: Vec<u8>,
        observed: Vec<bool>,
        palette: Vec<String>,
        pose: Pose,
    ) -> Self {
        debug_assert_eq!(class_ids.len(), rows * cols);
        debug_assert_eq!(observed.len(), rows * cols);
        Self {
            rows,
            cols,
            cell_size,
            ego_extent,
            class_ids,
            observed,
            palette,
            pose,
        }
    }

    pub fn with_palette(mut self, palette: Vec<String>) -> Self {
        self.palette = palette;
        self
    }

    #[inline]
    pub fn class_at(&self, row: usize, col: usize) -> u8 {
        self.class_ids[row * self.cols + col]
    }

    /// Center of a cell in ego coordinates.
    #[inline]
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.ego_extent.forward - (row as f64 + 0.5) * self.cell_size,
            self.ego_extent.left - (col as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn observed_fraction(&self) -> f64 {
        if self.observed.is_empty() {
            return 0.0;
        }
        self.observed.iter().filter(|&&o| o).count() as f64 / self.observed.len() as f64
    }

    /// Histogram over class ids of observed cells, normalized to fractions.
    pub fn class_histogram(&self, num_classes: usize) -> Vec<f64> {
        let mut counts = vec![0usize; num_classes];
        let mut total = 0usize;
        for (idx, &observed) in self.observed.iter().enumerate() {
            if observed {
                counts[self.class_ids[idx] as usize] += 1;
                total += 1;
            }
        }
        if total == 0 {
            return vec![0.0; num_classes];
        }
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::{SemanticPoint, SemanticPointCloud};
    use crate::geometry::RigidTransform;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_config() -> GridMapConfig {
        GridMapConfig::new(
            0.2,
            WorldExtent {
                x_min: -50.0,
                y_min: -50.0,
                x_max: 50.0,
                y_max: 50.0,
            },
            4,
        )
        .unwrap()
    }

    fn empty_rig() -> SensorRig {
        SensorRig::new(vec![], RigidTransform::identity()).unwrap()
    }

    fn identity_pose() -> Pose {
        Pose {
            timestamp: 0.0,
            world_from_vehicle: RigidTransform::identity(),
        }
    }

    fn point(x: f64, y: f64, class_id: u8, intensity: f64) -> SemanticPoint {
        SemanticPoint {
            position: Vector3::new(x, y, 0.0),
            class_id,
            intensity,
            camera_index: 0,
        }
    }

    #[test]
    fn update_with_identity_confusion_is_one_hot() {
        let cm = ConfusionMatrix::identity(4);
        let ip = IntensityPrior::column_uniform(8, 4);
        let prior = vec![0.25; 4];
        let post = update_cell(&prior, 2, 0, &cm, &ip).unwrap();
        assert_abs_diff_eq!(post[2], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(post[0] + post[1] + post[3], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn uninformative_evidence_is_a_fixpoint() {
        let cm = ConfusionMatrix::column_uniform(4);
        let ip = IntensityPrior::column_uniform(8, 4);
        let prior = vec![0.1, 0.2, 0.3, 0.4];
        let post = update_cell(&prior, 1, 3, &cm, &ip).unwrap();
        for (a, b) in post.iter().zip(prior.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_class_hand_bayes_case() {
        // prior (0.5, 0.5), cm [[0.9, 0.2], [0.1, 0.8]], z = 0:
        // posterior = (0.45, 0.10) / 0.55 = (9/11, 2/11).
        let cm = ConfusionMatrix::new(vec![0.9, 0.2, 0.1, 0.8], 2).unwrap();
        let ip = IntensityPrior::column_uniform(8, 2);
        let post = update_cell(&[0.5, 0.5], 0, 0, &cm, &ip).unwrap();
        assert_abs_diff_eq!(post[0], 9.0 / 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(post[1], 2.0 / 11.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_evidence_is_reported() {
        // Identity confusion: observing z = 1 against a prior that only
        // supports class 0 zeroes every product.
        let cm = ConfusionMatrix::identity(2);
        let ip = IntensityPrior::column_uniform(2, 2);
        assert!(matches!(
            update_cell(&[1.0, 0.0], 1, 0, &cm, &ip),
            Err(GridError::DegenerateEvidence)
        ));
    }

    #[test]
    fn confusion_matrix_validation() {
        assert!(ConfusionMatrix::new(vec![0.5, 0.5, 0.4, 0.5], 2).is_err());
        assert!(ConfusionMatrix::new(vec![1.1, 0.0, -0.1, 1.0], 2).is_err());
        let cm = ConfusionMatrix::symmetric_noise(4, 0.2).unwrap();
        assert_abs_diff_eq!(cm.p(0, 0), 0.8);
        assert_abs_diff_eq!(cm.p(1, 0), 0.2 / 3.0);
    }

    #[test]
    fn intensity_binning() {
        assert_eq!(intensity_bin(0.0, 8), 0);
        assert_eq!(intensity_bin(0.124, 8), 0);
        assert_eq!(intensity_bin(0.125, 8), 1);
        assert_eq!(intensity_bin(1.0, 8), 7);
    }

    #[test]
    fn integrate_empty_cloud_changes_nothing() {
        let mut grid = ProbGrid::new(test_config()).unwrap();
        let cm = ConfusionMatrix::identity(4);
        let ip = IntensityPrior::column_uniform(8, 4);
        let stats = grid.integrate(
            &SemanticPointCloud::default(),
            &identity_pose(),
            &empty_rig(),
            &cm,
            &ip,
        );
        assert_eq!(stats.integrated, 0);
        assert_eq!(grid.num_observed_cells(), 0);
    }

    #[test]
    fn single_point_renders_its_class() {
        let mut grid = ProbGrid::new(test_config()).unwrap();
        let cm = ConfusionMatrix::identity(4);
        let ip = IntensityPrior::column_uniform(8, 4);
        let spc = SemanticPointCloud {
            entries: vec![point(3.0, 5.0, 2, 0.5)],
            timestamp: 0.0,
        };
        grid.integrate(&spc, &identity_pose(), &empty_rig(), &cm, &ip);
        assert_eq!(grid.class_at_world(3.0, 5.0), 2);
        assert!(grid.observed_at_world(3.0, 5.0));
        assert!(!grid.observed_at_world(3.0, 6.0));
    }

    #[test]
    fn twenty_point_cell_matches_sequential_oracle() {
        // 80% class 1, 20% class 0 into one cell; posterior must equal the
        // hand product of 20 sequential Bayes updates in linear space.
        let config = GridMapConfig::new(
            0.2,
            WorldExtent {
                x_min: -50.0,
                y_min: -50.0,
                x_max: 50.0,
                y_max: 50.0,
            },
            2,
        )
        .unwrap();
        let mut grid = ProbGrid::new(config).unwrap();
        let cm = ConfusionMatrix::new(vec![0.8, 0.2, 0.2, 0.8], 2).unwrap();
        let ip = IntensityPrior::column_uniform(8, 2);
        let labels: Vec<u8> = (0..20).map(|i| if i % 5 == 0 { 0 } else { 1 }).collect();
        let entries: Vec<SemanticPoint> =
            labels.iter().map(|&z| point(1.05, 1.05, z, 0.3)).collect();
        grid.integrate(
            &SemanticPointCloud {
                entries,
                timestamp: 0.0,
            },
            &identity_pose(),
            &empty_rig(),
            &cm,
            &ip,
        );

        // Linear-space oracle.
        let mut oracle = vec![0.5f64, 0.5];
        for &z in &labels {
            let mut next: Vec<f64> = (0..2).map(|c| cm.p(z, c) * oracle[c]).collect();
            let norm: f64 = next.iter().sum();
            for v in &mut next {
                *v /= norm;
            }
            oracle = next;
        }

        let (ix, iy) = grid.config().cell_of(1.05, 1.05).unwrap();
        let probs = grid.cell_probabilities(ix, iy).unwrap();
        assert!(oracle[1] > oracle[0]);
        assert_eq!(grid.class_at_world(1.05, 1.05), 1);
        for (a, b) in probs.iter().zip(oracle.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn render_fresh_grid_is_all_unknown() {
        let grid = ProbGrid::new(test_config()).unwrap();
        let raster = grid.render();
        assert!(raster.data.iter().all(|&c| c == 0));
    }

    #[test]
    fn render_argmax_and_tie_break() {
        // Cell with posterior (0.1, 0.7, 0.2) renders class 1.
        let config = GridMapConfig::new(
            0.2,
            WorldExtent {
                x_min: 0.0,
                y_min: 0.0,
                x_max: 10.0,
                y_max: 10.0,
            },
            3,
        )
        .unwrap();
        let mut grid = ProbGrid::new(config).unwrap();
        let cm = ConfusionMatrix::new(
            vec![0.1, 0.1, 0.1, 0.7, 0.7, 0.7, 0.2, 0.2, 0.2],
            3,
        )
        .unwrap();
        let ip = IntensityPrior::column_uniform(8, 3);
        // One observation with a column-constant confusion row leaves the
        // posterior at the row values regardless of the uniform prior.
        let spc = SemanticPointCloud {
            entries: vec![point(5.0, 5.0, 1, 0.5)],
            timestamp: 0.0,
        };
        grid.integrate(&spc, &identity_pose(), &empty_rig(), &cm, &ip);
        // cm column c for z=1 is 0.7 for every c -> posterior stays uniform.
        // That exercises the tie-break instead: argmax of a uniform cell is 0.
        assert_eq!(grid.class_at_world(5.0, 5.0), 0);

        // Now a genuinely peaked posterior.
        let cm2 = ConfusionMatrix::new(
            vec![0.1, 0.7, 0.2, 0.7, 0.2, 0.1, 0.2, 0.1, 0.7],
            3,
        )
        .unwrap();
        let spc2 = SemanticPointCloud {
            entries: vec![point(7.0, 7.0, 0, 0.5)],
            timestamp: 0.0,
        };
        grid.integrate(&spc2, &identity_pose(), &empty_rig(), &cm2, &ip);
        // Posterior after z=0: proportional to (0.1, 0.7, 0.2) -> class 1.
        assert_eq!(grid.class_at_world(7.0, 7.0), 1);
    }

    #[test]
    fn exact_two_way_tie_renders_lowest_class() {
        let config = GridMapConfig::new(
            0.2,
            WorldExtent {
                x_min: 0.0,
                y_min: 0.0,
                x_max: 10.0,
                y_max: 10.0,
            },
            2,
        )
        .unwrap();
        let mut grid = ProbGrid::new(config).unwrap();
        // Column-uniform evidence keeps the cell at (0.5, 0.5) but marks it
        // observed; the tie goes to class 0.
        let cm = ConfusionMatrix::column_uniform(2);
        let ip = IntensityPrior::column_uniform(8, 2);
        let spc = SemanticPointCloud {
            entries: vec![point(5.0, 5.0, 1, 0.5)],
            timestamp: 0.0,
        };
        grid.integrate(&spc, &identity_pose(), &empty_rig(), &cm, &ip);
        assert!(grid.observed_at_world(5.0, 5.0));
        assert_eq!(grid.class_at_world(5.0, 5.0), 0);
    }

    #[test]
    fn normalization_holds_after_many_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let mut grid = ProbGrid::new(test_config()).unwrap();
        let cm = ConfusionMatrix::symmetric_noise(4, 0.25).unwrap();
        let ip = IntensityPrior::column_uniform(8, 4);
        let entries: Vec<SemanticPoint> = (0..2000)
            .map(|_| {
                point(
                    rng.gen_range(-49.0..49.0),
                    rng.gen_range(-49.0..49.0),
                    rng.gen_range(0..4) as u8,
                    rng.gen_range(0.0..1.0),
                )
            })
            .collect();
        grid.integrate(
            &SemanticPointCloud {
                entries,
                timestamp: 0.0,
            },
            &identity_pose(),
            &empty_rig(),
            &cm,
            &ip,
        );
        let (nx, ny) = grid.config().dimensions();
        let mut checked = 0;
        for ix in 0..nx {
            for iy in 0..ny {
                if let Some(probs) = grid.cell_probabilities(ix, iy) {
                    let sum: f64 = probs.iter().sum();
                    assert!((sum - 1.0).abs() < 1e-9, "cell sums to {sum}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn observation_order_commutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let cm = ConfusionMatrix::symmetric_noise(4, 0.3).unwrap();
        let ip = IntensityPrior::column_uniform(4, 4);
        for _ in 0..50 {
            let obs: Vec<(u8, usize)> = (0..20)
                .map(|_| (rng.gen_range(0..4) as u8, rng.gen_range(0..4)))
                .collect();
            let mut shuffled = obs.clone();
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.gen_range(0..=i));
            }
            let run = |seq: &[(u8, usize)]| -> Vec<f64> {
                let mut lp = vec![(0.25f64).ln(); 4];
                let mut scratch = Vec::new();
                for &(z, bin) in seq {
                    assert!(bayes_step_log(&mut lp, z, bin, &cm, &ip, &mut scratch));
                }
                lp
            };
            let a = run(&obs);
            let b = run(&shuffled);
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-9, "log posterior differs: {x} vs {y}");
            }
        }
    }

    #[test]
    fn crop_ego_uniform_region() {
        let mut grid = ProbGrid::new(test_config()).unwrap();
        let cm = ConfusionMatrix::identity(4);
        let ip = IntensityPrior::column_uniform(8, 4);
        // Blanket the whole ego window with class 3 points on a half-cell
        // lattice.
        let mut entries = Vec::new();
        let mut x = -35.0;
        while x < 35.0 {
            let mut y = -20.0;
            while y < 20.0 {
                entries.push(point(x, y, 3, 0.5));
                y += 0.1;
            }
            x += 0.1;
        }
        grid.integrate(
            &SemanticPointCloud {
                entries,
                timestamp: 0.0,
            },
            &identity_pose(),
            &empty_rig(),
            &cm,
            &ip,
        );
        let map = grid.crop_ego(&identity_pose());
        assert_eq!(map.rows, 300);
        assert_eq!(map.cols, 150);
        assert!(map.class_ids.iter().all(|&c| c == 3));
        assert_eq!(map.observed_fraction(), 1.0);
    }

    #[test]
    fn crop_ego_rotates_with_pose() {
        // Class boundary along x = 0 in world; a 90 degree yaw pose must see
        // it rotated: the boundary becomes a function of ego y instead.
        let mut grid = ProbGrid::new(test_config()).unwrap();
        let cm = ConfusionMatrix::identity(4);
        let ip = IntensityPrior::column_uniform(8, 4);
        let mut entries = Vec::new();
        let mut x = -40.0;
        while x < 40.0 {
            let mut y = -40.0;
            while y < 40.0 {
                let class = if x < 0.0 { 1 } else { 2 };
                entries.push(point(x, y, class, 0.5));
                y += 0.1;
            }
            x += 0.1;
        }
        grid.integrate(
            &SemanticPointCloud {
                entries,
                timestamp: 0.0,
            },
            &identity_pose(),
            &empty_rig(),
            &cm,
            &ip,
        );

        let straight = grid.crop_ego(&identity_pose());
        // Identity pose: rows in front (x > 0) are class 2, rows behind class 1.
        assert_eq!(straight.class_at(0, 75), 2);
        assert_eq!(straight.class_at(299, 75), 1);

        let yawed = Pose {
            timestamp: 0.0,
            world_from_vehicle: RigidTransform::from_yaw(
                std::f64::consts::FRAC_PI_2,
                Vector3::zeros(),
            ),
        };
        let rotated = grid.crop_ego(&yawed);
        // After +90 degrees yaw, ego +y (left, col 0) points along world -x.
        assert_eq!(rotated.class_at(150, 0), 1);
        assert_eq!(rotated.class_at(150, 149), 2);
    }

    #[test]
    fn crop_ego_outside_world_fills_unknown() {
        let grid = ProbGrid::new(test_config()).unwrap();
        let far_pose = Pose {
            timestamp: 0.0,
            world_from_vehicle: RigidTransform::from_translation(Vector3::new(45.0, 0.0, 0.0)),
        };
        let map = grid.crop_ego(&far_pose);
        // Forward half of the window leaves the 50 m extent.
        assert!(map.class_ids.iter().all(|&c| c == 0));
        assert_eq!(map.observed_fraction(), 0.0);
    }

    #[test]
    fn raster_lookup_round_trip() {
        let mut grid = ProbGrid::new(test_config()).unwrap();
        let cm = ConfusionMatrix::identity(4);
        let ip = IntensityPrior::column_uniform(8, 4);
        let spc = SemanticPointCloud {
            entries: vec![point(10.1, -20.3, 3, 0.5), point(-30.0, 42.0, 1, 0.5)],
            timestamp: 0.0,
        };
        grid.integrate(&spc, &identity_pose(), &empty_rig(), &cm, &ip);
        let raster = grid.render();
        assert_eq!(raster.class_at_world(10.1, -20.3), Some(3));
        assert_eq!(raster.class_at_world(-30.0, 42.0), Some(1));
        assert_eq!(raster.class_at_world(0.0, 0.0), Some(0));
        assert_eq!(raster.class_at_world(1000.0, 0.0), None);
    }

    #[test]
    fn out_of_extent_points_are_counted_not_fatal() {
        let mut grid = ProbGrid::new(test_config()).unwrap();
        let cm = ConfusionMatrix::identity(4);
        let ip = IntensityPrior::column_uniform(8, 4);
        let spc = SemanticPointCloud {
            entries: vec![point(500.0, 0.0, 1, 0.5), point(0.0, 0.0, 1, 0.5)],
            timestamp: 0.0,
        };
        let stats = grid.integrate(&spc, &identity_pose(), &empty_rig(), &cm, &ip);
        assert_eq!(stats.integrated, 1);
        assert_eq!(stats.out_of_extent, 1);
    }
}
