//! The mapping stage: drive a sequence through association, grid
//! integration and ego-centric cropping, frame by frame in timestamp order.

use crate::association::{associate, association_coverage, AssociationError};
use crate::geometry::Pose;
use crate::grid::{
    ConfusionMatrix, GridError, GridMapConfig, IntegrateStats, IntensityPrior, ProbGrid,
    SemanticMap, WorldExtent,
};
use crate::io::{IoError, Sequence};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Association(#[from] AssociationError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Per-frame mapping output handed to the frame callback.
pub struct FrameOutput {
    pub index: usize,
    pub pose: Pose,
    pub ego_map: SemanticMap,
    pub coverage: f64,
    pub stats: IntegrateStats,
    pub association_ms: f64,
    pub integration_ms: f64,
}

/// Aggregate timing and counters over a mapping run.
#[derive(Debug, Clone, Default)]
pub struct MappingSummary {
    pub frames: usize,
    pub total_points: usize,
    pub integrated_points: usize,
    pub association_ms: Vec<f64>,
    pub integration_ms: Vec<f64>,
}

impl MappingSummary {
    pub fn mean_integration_ms(&self) -> f64 {
        if self.integration_ms.is_empty() {
            return 0.0;
        }
        self.integration_ms.iter().sum::<f64>() / self.integration_ms.len() as f64
    }

    pub fn mean_association_ms(&self) -> f64 {
        if self.association_ms.is_empty() {
            return 0.0;
        }
        self.association_ms.iter().sum::<f64>() / self.association_ms.len() as f64
    }
}

/// Grid configuration for a sequence: explicit extent/cell size when the
/// manifest carries them, otherwise an extent derived from the trajectory
/// plus the ego window.
pub fn grid_config_for_sequence(
    seq: &Sequence,
    cell_size_override: Option<f64>,
) -> Result<GridMapConfig, GridError> {
    let cell_size = cell_size_override
        .or(seq.manifest.cell_size)
        .unwrap_or(0.2);
    let extent = seq.manifest.world_extent.unwrap_or_else(|| {
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for pose in &seq.poses {
            let t = pose.world_from_vehicle.translation();
            x_min = x_min.min(t.x);
            x_max = x_max.max(t.x);
            y_min = y_min.min(t.y);
            y_max = y_max.max(t.y);
        }
        if !x_min.is_finite() {
            (x_min, x_max, y_min, y_max) = (0.0, 1.0, 0.0, 1.0);
        }
        let margin = 60.0;
        WorldExtent {
            x_min: x_min - margin,
            y_min: y_min - margin,
            x_max: x_max + margin,
            y_max: y_max + margin,
        }
    });
    GridMapConfig::new(cell_size, extent, seq.num_classes().max(2))
}

/// Run the sequential mapping loop. The grid is single-writer by design;
/// `on_frame` observes each frame's ego map as it is produced.
pub fn run_mapping(
    seq: &Sequence,
    grid_config: GridMapConfig,
    confusion: &ConfusionMatrix,
    intensity_prior: &IntensityPrior,
    mut on_frame: impl FnMut(FrameOutput),
) -> Result<(ProbGrid, MappingSummary), PipelineError> {
    let mut grid = ProbGrid::new(grid_config)?;
    let mut summary = MappingSummary::default();
    let palette = seq.manifest.palette.clone();

    for (index, frame) in seq.frames().enumerate() {
        let frame = frame?;
        summary.total_points += frame.cloud.len();

        let assoc_start = Instant::now();
        let semantic = associate(&frame.cloud, &frame.masks, &seq.rig)?;
        let association_ms = assoc_start.elapsed().as_secs_f64() * 1000.0;
        let coverage = association_coverage(&semantic, &frame.cloud);

        let integrate_start = Instant::now();
        let stats = grid.integrate(&semantic, &frame.pose, &seq.rig, confusion, intensity_prior);
        let integration_ms = integrate_start.elapsed().as_secs_f64() * 1000.0;

        summary.integrated_points += stats.integrated;
        summary.association_ms.push(association_ms);
        summary.integration_ms.push(integration_ms);
        summary.frames += 1;

        let ego_map = grid.crop_ego(&frame.pose).with_palette(palette.clone());
        on_frame(FrameOutput {
            index,
            pose: frame.pose,
            ego_map,
            coverage,
            stats,
            association_ms,
            integration_ms,
        });
    }

    Ok((grid, summary))
}

/// Cap rayon's worker count from `SEMGRID_THREADS`; silently keeps the
/// current pool when one is already installed.
pub fn init_thread_pool() {
    if let Ok(value) = std::env::var("SEMGRID_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::load_sequence;
    use crate::synthetic::{generate_synthetic, SyntheticSceneSpec};

    #[test]
    fn mapping_runs_over_a_small_synthetic_sequence() {
        let spec = SyntheticSceneSpec {
            frames: 3,
            camera_count: 2,
            lidar_channels: 12,
            lidar_azimuth_step_deg: 1.0,
            image_width: 240,
            image_height: 135,
            focal_length: 150.0,
            ..SyntheticSceneSpec::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let out = generate_synthetic(&spec, dir.path()).unwrap();
        let seq = load_sequence(&out.manifest_path).unwrap();
        let config = grid_config_for_sequence(&seq, None).unwrap();
        let cm = ConfusionMatrix::identity(seq.num_classes());
        let ip = IntensityPrior::column_uniform(8, seq.num_classes());

        let mut frames_seen = 0;
        let (grid, summary) = run_mapping(&seq, config, &cm, &ip, |frame| {
            frames_seen += 1;
            assert!(frame.coverage > 0.0);
            assert!(frame.stats.integrated > 0);
            assert_eq!(frame.ego_map.palette.len(), seq.num_classes());
        })
        .unwrap();
        assert_eq!(frames_seen, 3);
        assert_eq!(summary.frames, 3);
        assert!(summary.total_points > 0);
        assert!(grid.num_observed_cells() > 100);
        assert!(summary.mean_integration_ms() >= 0.0);
    }
}
