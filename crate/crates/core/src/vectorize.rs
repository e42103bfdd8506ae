//! Classical SemanticMap -> VectorMap baseline: connected components,
//! morphological thinning, path tracing, simplification and resampling.
//!
//! The learned decoder this stands in for consumes the identical semantic
//! map artifact, so alternative implementations plug in behind
//! [`Vectorizer`] and the registry.

use crate::grid::SemanticMap;
use crate::vector::{resample, MapClass, MapInstance, Polyline, VectorMap};
use nalgebra::Point2;
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VectorizeError {
    #[error("a vectorizer named `{0}` is already registered")]
    DuplicateName(String),
    #[error("unknown vectorizer `{0}`")]
    UnknownVectorizer(String),
    #[error("invalid vectorizer configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone)]
pub struct VectorizerConfig {
    /// Components smaller than this many cells are discarded.
    pub min_component_cells: usize,
    /// Ramer-Douglas-Peucker tolerance in meters.
    pub simplify_tolerance: f64,
    /// Point count of every emitted polyline.
    pub output_points_n: usize,
    /// Grid class id -> vector map class. Grid classes not listed here are
    /// ignored.
    pub class_to_mapclass: BTreeMap<u8, MapClass>,
}

impl Default for VectorizerConfig {
    fn default() -> Self {
        Self {
            min_component_cells: 20,
            simplify_tolerance: 0.3,
            output_points_n: 20,
            class_to_mapclass: BTreeMap::new(),
        }
    }
}

impl VectorizerConfig {
    pub fn validate(&self) -> Result<(), VectorizeError> {
        if self.simplify_tolerance <= 0.0 {
            return Err(VectorizeError::InvalidConfig(
                "simplify_tolerance must be positive".into(),
            ));
        }
        if self.output_points_n < 2 {
            return Err(VectorizeError::InvalidConfig(
                "output_points_n must be at least 2".into(),
            ));
        }
        Ok(())
    }

    /// Derive the class table from a palette by name: `divider`, `boundary`,
    /// `centerline` map directly, `crosswalk`/`ped_crossing` map to
    /// PedCrossing.
    pub fn map_classes_from_palette(mut self, palette: &[String]) -> Self {
        let mut table = BTreeMap::new();
        for (id, name) in palette.iter().enumerate() {
            let class = match name.as_str() {
                "divider" => Some(MapClass::Divider),
                "boundary" => Some(MapClass::Boundary),
                "centerline" => Some(MapClass::Centerline),
                "crosswalk" | "ped_crossing" => Some(MapClass::PedCrossing),
                _ => None,
            };
            if let Some(c) = class {
                table.insert(id as u8, c);
            }
        }
        self.class_to_mapclass = table;
        self
    }
}

struct CellGrid {
    rows: usize,
    cols: usize,
    cells: Vec<bool>,
}

impl CellGrid {
    fn get(&self, r: i64, c: i64) -> bool {
        if r < 0 || c < 0 || r >= self.rows as i64 || c >= self.cols as i64 {
            return false;
        }
        self.cells[r as usize * self.cols + c as usize]
    }

    fn set(&mut self, r: usize, c: usize, v: bool) {
        self.cells[r * self.cols + c] = v;
    }
}

/// 8-connected components of the target class, seeds visited in row-major
/// order so labeling is deterministic.
fn connected_components(map: &SemanticMap, target: u8) -> Vec<Vec<(usize, usize)>> {
    let (rows, cols) = (map.rows, map.cols);
    let mut visited = vec![false; rows * cols];
    let mut components = Vec::new();
    for seed in 0..rows * cols {
        if visited[seed] || map.class_ids[seed] != target {
            continue;
        }
        let mut cells = Vec::new();
        let mut stack = vec![seed];
        visited[seed] = true;
        while let Some(idx) = stack.pop() {
            let (r, c) = (idx / cols, idx % cols);
            cells.push((r, c));
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                        continue;
                    }
                    let nidx = nr as usize * cols + nc as usize;
                    if !visited[nidx] && map.class_ids[nidx] == target {
                        visited[nidx] = true;
                        stack.push(nidx);
                    }
                }
            }
        }
        cells.sort_unstable();
        components.push(cells);
    }
    components
}

/// Binary grid over the component's bounding box with a 1-cell pad; returns
/// the offset that maps local coordinates back to map coordinates.
fn component_grid(cells: &[(usize, usize)]) -> (CellGrid, (i64, i64)) {
    let r0 = cells.iter().map(|&(r, _)| r).min().unwrap();
    let r1 = cells.iter().map(|&(r, _)| r).max().unwrap();
    let c0 = cells.iter().map(|&(_, c)| c).min().unwrap();
    let c1 = cells.iter().map(|&(_, c)| c).max().unwrap();
    let rows = r1 - r0 + 3;
    let cols = c1 - c0 + 3;
    let mut grid = CellGrid {
        rows,
        cols,
        cells: vec![false; rows * cols],
    };
    for &(r, c) in cells {
        grid.set(r - r0 + 1, c - c0 + 1, true);
    }
    (grid, (r0 as i64 - 1, c0 as i64 - 1))
}

/// Zhang-Suen thinning to a 1-cell-wide skeleton.
fn thin(grid: &mut CellGrid) {
    let neighbors = |g: &CellGrid, r: i64, c: i64| -> [bool; 8] {
        // P2..P9 clockwise from north.
        [
            g.get(r - 1, c),
            g.get(r - 1, c + 1),
            g.get(r, c + 1),
            g.get(r + 1, c + 1),
            g.get(r + 1, c),
            g.get(r + 1, c - 1),
            g.get(r, c - 1),
            g.get(r - 1, c - 1),
        ]
    };
    loop {
        let mut changed = false;
        for phase in 0..2 {
            let mut to_clear = Vec::new();
            for r in 0..grid.rows {
                for c in 0..grid.cols {
                    if !grid.get(r as i64, c as i64) {
                        continue;
                    }
                    let p = neighbors(grid, r as i64, c as i64);
                    let b: usize = p.iter().filter(|&&v| v).count();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let mut a = 0;
                    for i in 0..8 {
                        if !p[i] && p[(i + 1) % 8] {
                            a += 1;
                        }
                    }
                    if a != 1 {
                        continue;
                    }
                    let (p2, p4, p6, p8) = (p[0], p[2], p[4], p[6]);
                    let ok = if phase == 0 {
                        !(p2 && p4 && p6) && !(p4 && p6 && p8)
                    } else {
                        !(p2 && p4 && p8) && !(p2 && p6 && p8)
                    };
                    if ok {
                        to_clear.push((r, c));
                    }
                }
            }
            if !to_clear.is_empty() {
                changed = true;
                for (r, c) in to_clear {
                    grid.set(r, c, false);
                }
            }
        }
        if !changed {
            break;
        }
    }
}

const NEIGHBORS_8: [(i64, i64); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Split the skeleton at junction cells and trace the remaining simple
/// chains endpoint-to-endpoint. Isolated cycles are broken at their
/// row-major first cell.
fn trace_chains(grid: &CellGrid) -> Vec<Vec<(usize, usize)>> {
    let degree = |r: usize, c: usize| -> usize {
        NEIGHBORS_8
            .iter()
            .filter(|&&(dr, dc)| grid.get(r as i64 + dr, c as i64 + dc))
            .count()
    };

    let mut keep = vec![false; grid.rows * grid.cols];
    let mut skeleton_cells = Vec::new();
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            if grid.get(r as i64, c as i64) {
                if degree(r, c) <= 2 {
                    keep[r * grid.cols + c] = true;
                    skeleton_cells.push((r, c));
                }
            }
        }
    }

    let kept = |keep: &[bool], r: i64, c: i64| -> bool {
        if r < 0 || c < 0 || r >= grid.rows as i64 || c >= grid.cols as i64 {
            return false;
        }
        keep[r as usize * grid.cols + c as usize]
    };
    let kept_neighbors = |keep: &[bool], r: usize, c: usize| -> Vec<(usize, usize)> {
        NEIGHBORS_8
            .iter()
            .filter_map(|&(dr, dc)| {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                kept(keep, nr, nc).then(|| (nr as usize, nc as usize))
            })
            .collect()
    };

    let mut visited = vec![false; grid.rows * grid.cols];
    let mut chains = Vec::new();
    let walk = |start: (usize, usize), visited: &mut Vec<bool>, keep: &[bool]| {
        let mut chain = vec![start];
        visited[start.0 * grid.cols + start.1] = true;
        let mut current = start;
        loop {
            let next = kept_neighbors(keep, current.0, current.1)
                .into_iter()
                .find(|&(r, c)| !visited[r * grid.cols + c]);
            match next {
                Some(cell) => {
                    visited[cell.0 * grid.cols + cell.1] = true;
                    chain.push(cell);
                    current = cell;
                }
                None => break,
            }
        }
        chain
    };

    // Endpoints first, then any remaining cycles.
    for &(r, c) in &skeleton_cells {
        if visited[r * grid.cols + c] {
            continue;
        }
        if kept_neighbors(&keep, r, c).len() <= 1 {
            chains.push(walk((r, c), &mut visited, &keep));
        }
    }
    for &(r, c) in &skeleton_cells {
        if !visited[r * grid.cols + c] {
            chains.push(walk((r, c), &mut visited, &keep));
        }
    }
    chains.retain(|chain| chain.len() >= 2);
    chains
}

/// Moore-neighbor boundary trace of a component's outer contour, clockwise.
/// `start` must be the row-major first cell so its west neighbor is outside.
fn trace_boundary(grid: &CellGrid, start: (usize, usize), num_cells: usize) -> Vec<(usize, usize)> {
    // Clockwise Moore neighborhood starting west.
    let dirs: [(i64, i64); 8] = [
        (0, -1),
        (-1, -1),
        (-1, 0),
        (-1, 1),
        (0, 1),
        (1, 1),
        (1, 0),
        (1, -1),
    ];
    let mut contour = Vec::new();
    let mut current = start;
    // Backtrack direction: start is row-major first so its west neighbor is
    // outside the component.
    let mut enter = 0usize;
    loop {
        contour.push(current);
        let mut found = None;
        for step in 0..8 {
            let dir = (enter + 1 + step) % 8;
            let (dr, dc) = dirs[dir];
            let (nr, nc) = (current.0 as i64 + dr, current.1 as i64 + dc);
            if grid.get(nr, nc) {
                found = Some((dir, (nr as usize, nc as usize)));
                break;
            }
        }
        match found {
            Some((dir, cell)) => {
                // The new backtrack points from the new cell toward the old
                // one: opposite of the move, nudged back one slot.
                enter = (dir + 4) % 8;
                current = cell;
                if current == start && contour.len() > 1 {
                    break;
                }
                if contour.len() > 4 * num_cells + 8 {
                    break;
                }
            }
            None => break, // isolated cell
        }
    }
    contour.dedup();
    contour
}

fn point_segment_distance(p: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 < 1e-18 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn rdp(points: &[Point2<f64>], tolerance: f64) -> Vec<Point2<f64>> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let first = points[0];
    let last = points[points.len() - 1];
    let (mut max_dist, mut max_idx) = (0.0f64, 0usize);
    for (i, p) in points.iter().enumerate().skip(1).take(points.len() - 2) {
        let d = point_segment_distance(p, &first, &last);
        if d > max_dist {
            max_dist = d;
            max_idx = i;
        }
    }
    if max_dist <= tolerance {
        return vec![first, last];
    }
    let mut left = rdp(&points[..=max_idx], tolerance);
    let right = rdp(&points[max_idx..], tolerance);
    left.pop();
    left.extend(right);
    left
}

/// Simplify a closed ring by splitting it at its two mutually farthest
/// anchor points and simplifying each half.
fn rdp_closed(points: &[Point2<f64>], tolerance: f64) -> Vec<Point2<f64>> {
    if points.len() <= 4 {
        return points.to_vec();
    }
    let mut far = 1;
    let mut far_dist = 0.0;
    for (i, p) in points.iter().enumerate().skip(1) {
        let d = (p - points[0]).norm();
        if d > far_dist {
            far_dist = d;
            far = i;
        }
    }
    let first_half: Vec<Point2<f64>> = points[..=far].to_vec();
    let mut second_half: Vec<Point2<f64>> = points[far..].to_vec();
    second_half.push(points[0]);
    let mut simplified = rdp(&first_half, tolerance);
    let second = rdp(&second_half, tolerance);
    simplified.pop();
    simplified.extend(second);
    simplified.pop(); // drop the duplicated ring start
    simplified
}

struct TracedComponent {
    map_class: MapClass,
    cell_count: usize,
    polylines: Vec<Polyline>,
}

/// Convert a rendered semantic map into vector map elements.
///
/// Per target class: component extraction, size filtering, skeleton or
/// boundary tracing, simplification and fixed-count resampling. Instance
/// scores are the component cell count over the largest component cell
/// count, a deterministic rank proxy.
pub fn vectorize(map: &SemanticMap, config: &VectorizerConfig) -> VectorMap {
    debug_assert!(config.validate().is_ok());
    let mut traced: Vec<TracedComponent> = Vec::new();

    for (&grid_class, &map_class) in &config.class_to_mapclass {
        for cells in connected_components(map, grid_class) {
            if cells.len() < config.min_component_cells {
                continue;
            }
            let (mut grid, offset) = component_grid(&cells);
            let cell_path_to_points = |path: &[(usize, usize)]| -> Vec<Point2<f64>> {
                path.iter()
                    .map(|&(r, c)| {
                        let (x, y) = map.cell_center(
                            (r as i64 + offset.0) as usize,
                            (c as i64 + offset.1) as usize,
                        );
                        Point2::new(x, y)
                    })
                    .collect()
            };

            let mut polylines = Vec::new();
            if map_class == MapClass::PedCrossing {
                let local_start = (
                    (cells[0].0 as i64 - offset.0) as usize,
                    (cells[0].1 as i64 - offset.1) as usize,
                );
                let ring = trace_boundary(&grid, local_start, cells.len());
                if ring.len() >= 3 {
                    let mut points = cell_path_to_points(&ring);
                    points = rdp_closed(&points, config.simplify_tolerance);
                    points.dedup_by(|a, b| (*a - *b).norm() < 1e-9);
                    if points.len() >= 3 {
                        if let Ok(poly) = Polyline::closed(points) {
                            if let Ok(resampled) = resample(&poly, config.output_points_n) {
                                polylines.push(resampled);
                            }
                        }
                    }
                }
            } else {
                thin(&mut grid);
                for chain in trace_chains(&grid) {
                    let points = rdp(&cell_path_to_points(&chain), config.simplify_tolerance);
                    if let Ok(poly) = Polyline::open(points) {
                        if let Ok(resampled) = resample(&poly, config.output_points_n) {
                            polylines.push(resampled);
                        }
                    }
                }
            }
            if !polylines.is_empty() {
                traced.push(TracedComponent {
                    map_class,
                    cell_count: cells.len(),
                    polylines,
                });
            }
        }
    }

    let largest = traced.iter().map(|t| t.cell_count).max().unwrap_or(1) as f64;
    let mut instances = Vec::new();
    for component in traced {
        let score = component.cell_count as f64 / largest;
        for polyline in component.polylines {
            instances.push(
                MapInstance::new(component.map_class, polyline, score)
                    .expect("score is in [0, 1] by construction"),
            );
        }
    }
    VectorMap::new(instances).with_timestamp(map.pose.timestamp)
}

/// A named SemanticMap -> VectorMap implementation.
pub trait Vectorizer: Send + Sync {
    fn vectorize(&self, map: &SemanticMap) -> VectorMap;
}

/// The classical baseline.
pub struct BaselineVectorizer {
    pub config: VectorizerConfig,
}

impl Vectorizer for BaselineVectorizer {
    fn vectorize(&self, map: &SemanticMap) -> VectorMap {
        vectorize(map, &self.config)
    }
}

/// Named vectorizer implementations selectable at run time.
#[derive(Default)]
pub struct VectorizerRegistry {
    entries: Vec<(String, Arc<dyn Vectorizer>)>,
}

impl VectorizerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry holding the baseline under the name `baseline`.
    pub fn with_baseline(config: VectorizerConfig) -> Self {
        let mut registry = Self::new();
        registry
            .register("baseline", Arc::new(BaselineVectorizer { config }))
            .expect("empty registry cannot collide");
        registry
    }

    pub fn register(
        &mut self,
        name: &str,
        implementation: Arc<dyn Vectorizer>,
    ) -> Result<(), VectorizeError> {
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(VectorizeError::DuplicateName(name.to_string()));
        }
        self.entries.push((name.to_string(), implementation));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Arc<dyn Vectorizer>, VectorizeError> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .ok_or_else(|| VectorizeError::UnknownVectorizer(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, RigidTransform};
    use crate::grid::EgoExtent;

    fn map_from_grid(rows: usize, cols: usize, cell_size: f64, class_ids: Vec<u8>) -> SemanticMap {
        let ego = EgoExtent {
            forward: rows as f64 * cell_size / 2.0,
            backward: rows as f64 * cell_size / 2.0,
            left: cols as f64 * cell_size / 2.0,
            right: cols as f64 * cell_size / 2.0,
        };
        let observed = class_ids.iter().map(|&c| c != 0).collect();
        SemanticMap::new(
            rows,
            cols,
            cell_size,
            ego,
            class_ids,
            observed,
            vec![
                "unknown".to_string(),
                "divider".to_string(),
                "crosswalk".to_string(),
            ],
            Pose {
                timestamp: 0.0,
                world_from_vehicle: RigidTransform::identity(),
            },
        )
    }

    fn test_config() -> VectorizerConfig {
        let mut table = BTreeMap::new();
        table.insert(1u8, MapClass::Divider);
        table.insert(2u8, MapClass::PedCrossing);
        VectorizerConfig {
            min_component_cells: 5,
            simplify_tolerance: 0.3,
            output_points_n: 10,
            class_to_mapclass: table,
        }
    }

    #[test]
    fn all_unknown_map_gives_empty_vector_map() {
        let map = map_from_grid(20, 20, 0.2, vec![0; 400]);
        let vm = vectorize(&map, &test_config());
        assert!(vm.instances.is_empty());
    }

    #[test]
    fn straight_divider_traces_to_centerline_points() {
        // A 50-cell 1-wide divider along +x (one column of rows? rows run
        // along x, so a line along +x is one column fixed, rows varying).
        let (rows, cols, cs) = (60, 20, 0.2);
        let mut grid = vec![0u8; rows * cols];
        for r in 5..55 {
            grid[r * cols + 10] = 1;
        }
        let map = map_from_grid(rows, cols, cs, grid);
        let vm = vectorize(&map, &test_config());
        assert_eq!(vm.instances.len(), 1);
        let inst = &vm.instances[0];
        assert_eq!(inst.map_class, MapClass::Divider);
        assert_eq!(inst.score, 1.0);
        assert!(!inst.polyline.is_closed());
        assert_eq!(inst.polyline.num_points(), 10);

        let (_, y_line) = map.cell_center(0, 10);
        let (x_start, _) = map.cell_center(5, 10);
        let (x_end, _) = map.cell_center(54, 10);
        for p in inst.polyline.points() {
            assert!((p.y - y_line).abs() < cs, "point off the centerline");
            assert!(p.x <= x_start + cs && p.x >= x_end - cs);
        }
        // Endpoints at the traced extremes.
        let xs: Vec<f64> = inst.polyline.points().iter().map(|p| p.x).collect();
        assert!((xs.first().unwrap() - x_start).abs() < cs
            || (xs.first().unwrap() - x_end).abs() < cs);
    }

    #[test]
    fn crosswalk_component_becomes_closed_polygon() {
        let (rows, cols, cs) = (40, 40, 0.2);
        let mut grid = vec![0u8; rows * cols];
        for r in 10..20 {
            for c in 5..35 {
                grid[r * cols + c] = 2;
            }
        }
        let map = map_from_grid(rows, cols, cs, grid);
        let vm = vectorize(&map, &test_config());
        assert_eq!(vm.instances.len(), 1);
        let inst = &vm.instances[0];
        assert_eq!(inst.map_class, MapClass::PedCrossing);
        assert!(inst.polyline.is_closed());
        // All polygon points lie on the component's boundary ring.
        let (x_hi, y_hi) = map.cell_center(10, 5);
        let (x_lo, y_lo) = map.cell_center(19, 34);
        for p in inst.polyline.points() {
            assert!(p.x <= x_hi + 1e-9 && p.x >= x_lo - 1e-9);
            assert!(p.y <= y_hi + 1e-9 && p.y >= y_lo - 1e-9);
        }
    }

    #[test]
    fn small_components_are_filtered() {
        let (rows, cols) = (20, 20);
        let mut grid = vec![0u8; rows * cols];
        grid[5 * cols + 5] = 1;
        grid[5 * cols + 6] = 1;
        let map = map_from_grid(rows, cols, 0.2, grid);
        let vm = vectorize(&map, &test_config());
        assert!(vm.instances.is_empty());
    }

    #[test]
    fn branching_skeleton_splits_at_junction() {
        // A plus sign: two 21-cell strokes crossing in the middle.
        let (rows, cols) = (30, 30);
        let mut grid = vec![0u8; rows * cols];
        for r in 5..26 {
            grid[r * cols + 15] = 1;
        }
        for c in 5..26 {
            grid[15 * cols + c] = 1;
        }
        let map = map_from_grid(rows, cols, 0.2, grid);
        let vm = vectorize(&map, &test_config());
        // The junction cell is removed, leaving four arms.
        assert!(
            vm.instances.len() >= 3,
            "expected the plus to split, got {} instances",
            vm.instances.len()
        );
        assert!(vm.instances.iter().all(|i| i.map_class == MapClass::Divider));
    }

    #[test]
    fn deterministic_output() {
        let (rows, cols) = (40, 40);
        let mut grid = vec![0u8; rows * cols];
        for r in 5..35 {
            grid[r * cols + 8] = 1;
            grid[r * cols + 20] = 1;
        }
        for r in 25..33 {
            for c in 25..35 {
                grid[r * cols + c] = 2;
            }
        }
        let map = map_from_grid(rows, cols, 0.2, grid);
        let a = vectorize(&map, &test_config());
        let b = vectorize(&map, &test_config());
        assert_eq!(a.instances.len(), b.instances.len());
        for (x, y) in a.instances.iter().zip(b.instances.iter()) {
            assert_eq!(x.map_class, y.map_class);
            assert_eq!(x.score, y.score);
            assert_eq!(x.polyline.points(), y.polyline.points());
        }
    }

    #[test]
    fn scores_rank_components_by_size() {
        let (rows, cols) = (60, 20);
        let mut grid = vec![0u8; rows * cols];
        for r in 2..42 {
            grid[r * cols + 5] = 1; // 40 cells
        }
        for r in 45..55 {
            grid[r * cols + 12] = 1; // 10 cells
        }
        let map = map_from_grid(rows, cols, 0.2, grid);
        let vm = vectorize(&map, &test_config());
        assert_eq!(vm.instances.len(), 2);
        let mut scores: Vec<f64> = vm.instances.iter().map(|i| i.score).collect();
        scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_eq!(scores[0], 1.0);
        assert!((scores[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn simplification_stays_within_tolerance_of_skeleton() {
        // A gently wiggly diagonal; every traced cell must stay within the
        // tolerance of the simplified polyline.
        let (rows, cols, cs) = (50, 50, 0.2);
        let mut grid = vec![0u8; rows * cols];
        let mut traced_cells = Vec::new();
        for r in 5..45 {
            let c = 10 + ((r as f64 / 4.0).sin() * 3.0).round() as usize + r / 4;
            grid[r * cols + c] = 1;
            traced_cells.push((r, c));
        }
        let map = map_from_grid(rows, cols, cs, grid.clone());
        let config = VectorizerConfig {
            simplify_tolerance: 0.5,
            ..test_config()
        };
        let vm = vectorize(&map, &config);
        assert!(!vm.instances.is_empty());
        // Hausdorff check against all emitted polylines together.
        for &(r, c) in &traced_cells {
            let (x, y) = map.cell_center(r, c);
            let p = Point2::new(x, y);
            let mut best = f64::INFINITY;
            for inst in &vm.instances {
                let pts = inst.polyline.points();
                for w in pts.windows(2) {
                    best = best.min(point_segment_distance(&p, &w[0], &w[1]));
                }
            }
            assert!(
                best <= config.simplify_tolerance + cs,
                "cell ({r},{c}) is {best:.3} m from the simplified polyline"
            );
        }
    }

    #[test]
    fn registry_register_select_and_errors() {
        let mut registry = VectorizerRegistry::with_baseline(test_config());
        assert!(registry.get("baseline").is_ok());
        assert!(matches!(
            registry.get("learned"),
            Err(VectorizeError::UnknownVectorizer(_))
        ));
        assert!(matches!(
            registry.register("baseline", Arc::new(BaselineVectorizer { config: test_config() })),
            Err(VectorizeError::DuplicateName(_))
        ));

        // A second implementation produces an independent result on the same
        // input; both are evaluable.
        struct NullVectorizer;
        impl Vectorizer for NullVectorizer {
            fn vectorize(&self, _map: &SemanticMap) -> VectorMap {
                VectorMap::default()
            }
        }
        registry.register("null", Arc::new(NullVectorizer)).unwrap();
        assert_eq!(registry.names(), vec!["baseline", "null"]);

        let (rows, cols) = (30, 30);
        let mut grid = vec![0u8; rows * cols];
        for r in 5..25 {
            grid[r * cols + 15] = 1;
        }
        let map = map_from_grid(rows, cols, 0.2, grid);
        let from_baseline = registry.get("baseline").unwrap().vectorize(&map);
        let from_null = registry.get("null").unwrap().vectorize(&map);
        assert!(!from_baseline.instances.is_empty());
        assert!(from_null.instances.is_empty());
    }
}
