//! Polyline map elements and the permutation machinery that makes point-set
//! comparisons ordering-free.
//!
//! Map elements are 2D only; everything lives in the ego frame (+x forward,
//! +y left, meters).

use crate::geometry::RigidTransform;
use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VectorError {
    #[error("polyline needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("polyline contains a non-finite coordinate")]
    NonFinite,
    #[error("closed polyline repeats its first point at the end")]
    RepeatedEndpoint,
    #[error("polyline length {0:.3e} m is below the degeneracy threshold")]
    DegenerateLength(f64),
    #[error("resampling needs at least 2 output points, got {0}")]
    TooFewOutputPoints(usize),
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("unknown map class `{0}`")]
    UnknownClass(String),
}

/// The four evaluated vector-map element classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum MapClass {
    PedCrossing = 0,
    Divider = 1,
    Boundary = 2,
    Centerline = 3,
}

impl MapClass {
    pub const ALL: [MapClass; 4] = [
        MapClass::PedCrossing,
        MapClass::Divider,
        MapClass::Boundary,
        MapClass::Centerline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MapClass::PedCrossing => "ped_crossing",
            MapClass::Divider => "divider",
            MapClass::Boundary => "boundary",
            MapClass::Centerline => "centerline",
        }
    }

    /// Short column label used in report tables.
    pub fn short_label(self) -> &'static str {
        match self {
            MapClass::PedCrossing => "ped.",
            MapClass::Divider => "div.",
            MapClass::Boundary => "bou.",
            MapClass::Centerline => "cent.",
        }
    }

    pub fn from_str_name(name: &str) -> Result<Self, VectorError> {
        match name {
            "ped_crossing" => Ok(MapClass::PedCrossing),
            "divider" => Ok(MapClass::Divider),
            "boundary" => Ok(MapClass::Boundary),
            "centerline" => Ok(MapClass::Centerline),
            other => Err(VectorError::UnknownClass(other.to_string())),
        }
    }
}

/// An ordered 2D point set. Closed polylines carry an implicit segment from
/// the last point back to the first and never repeat the first point.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Point2<f64>>,
    closed: bool,
}

impl Polyline {
    pub fn new(points: Vec<Point2<f64>>, closed: bool) -> Result<Self, VectorError> {
        if points.len() < 2 {
            return Err(VectorError::TooFewPoints(points.len()));
        }
        if points
            .iter()
            .any(|p| !p.x.is_finite() || !p.y.is_finite())
        {
            return Err(VectorError::NonFinite);
        }
        if closed && points.first() == points.last() {
            return Err(VectorError::RepeatedEndpoint);
        }
        Ok(Self { points, closed })
    }

    pub fn open(points: Vec<Point2<f64>>) -> Result<Self, VectorError> {
        Self::new(points, false)
    }

    pub fn closed(points: Vec<Point2<f64>>) -> Result<Self, VectorError> {
        Self::new(points, true)
    }

    pub fn points(&self) -> &[Point2<f64>] {
        &self.points
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    /// The edges of the polyline in traversal order; closed polylines include
    /// the wrap-around edge.
    pub fn edges(&self) -> impl Iterator<Item = (Point2<f64>, Point2<f64>)> + '_ {
        let n = self.points.len();
        let count = if self.closed { n } else { n - 1 };
        (0..count).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    pub fn transformed(&self, t: &RigidTransform) -> Polyline {
        let points = self
            .points
            .iter()
            .map(|p| {
                let q = t.transform_point(&Vector3::new(p.x, p.y, 0.0));
                Point2::new(q.x, q.y)
            })
            .collect();
        Polyline {
            points,
            closed: self.closed,
        }
    }
}

pub fn polyline_length(p: &Polyline) -> f64 {
    p.edges().map(|(a, b)| (b - a).norm()).sum()
}

/// All point orderings that describe the same polyline: direction flips for
/// open lines, cyclic shifts times direction flips for closed ones.
pub fn equivalent_orderings(p: &Polyline) -> Vec<Vec<usize>> {
    let n = p.num_points();
    if !p.is_closed() {
        let forward: Vec<usize> = (0..n).collect();
        let reversed: Vec<usize> = (0..n).rev().collect();
        return vec![forward, reversed];
    }
    let mut orderings = Vec::with_capacity(2 * n);
    for shift in 0..n {
        orderings.push((0..n).map(|j| (shift + j) % n).collect());
    }
    for shift in 0..n {
        orderings.push((0..n).map(|j| (shift + n - j % n) % n).collect());
    }
    orderings
}

/// Resample to `n_out` points equally spaced by arc length.
///
/// Open polylines keep their endpoints exactly; closed polylines distribute
/// points around the full loop including the closing segment.
pub fn resample(p: &Polyline, n_out: usize) -> Result<Polyline, VectorError> {
    if n_out < 2 {
        return Err(VectorError::TooFewOutputPoints(n_out));
    }
    let total = polyline_length(p);
    if total < 1e-9 {
        return Err(VectorError::DegenerateLength(total));
    }

    let segments: Vec<(Point2<f64>, Point2<f64>, f64)> = p
        .edges()
        .map(|(a, b)| (a, b, (b - a).norm()))
        .collect();

    let step = if p.is_closed() {
        total / n_out as f64
    } else {
        total / (n_out - 1) as f64
    };

    let mut out = Vec::with_capacity(n_out);
    let mut seg_idx = 0;
    let mut seg_start_arc = 0.0;
    for k in 0..n_out {
        if !p.is_closed() && k == n_out - 1 {
            out.push(*p.points.last().unwrap());
            break;
        }
        if k == 0 {
            out.push(p.points[0]);
            continue;
        }
        let target = step * k as f64;
        while seg_idx < segments.len() - 1 && seg_start_arc + segments[seg_idx].2 < target {
            seg_start_arc += segments[seg_idx].2;
            seg_idx += 1;
        }
        let (a, b, len) = segments[seg_idx];
        let t = if len > 0.0 {
            ((target - seg_start_arc) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(a + (b - a) * t);
    }

    Ok(Polyline {
        points: out,
        closed: p.closed,
    })
}

/// A classified polyline with a ranking score.
#[derive(Debug, Clone)]
pub struct MapInstance {
    pub map_class: MapClass,
    pub polyline: Polyline,
    pub score: f64,
}

impl MapInstance {
    pub fn new(map_class: MapClass, polyline: Polyline, score: f64) -> Result<Self, VectorError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(VectorError::ScoreOutOfRange(score));
        }
        Ok(Self {
            map_class,
            polyline,
            score,
        })
    }
}

/// A frame's worth of vector map elements.
#[derive(Debug, Clone, Default)]
pub struct VectorMap {
    pub instances: Vec<MapInstance>,
    pub timestamp: f64,
}

impl VectorMap {
    pub fn new(instances: Vec<MapInstance>) -> Self {
        Self {
            instances,
            timestamp: 0.0,
        }
    }

    pub fn with_timestamp(mut self, timestamp: f64) -> Self {
        self.timestamp = timestamp;
        self
    }

    pub fn instances_of(&self, class: MapClass) -> impl Iterator<Item = &MapInstance> {
        self.instances
            .iter()
            .filter(move |i| i.map_class == class)
    }

    /// Apply a rigid transform to every instance (e.g. world -> ego).
    pub fn transformed(&self, t: &RigidTransform) -> VectorMap {
        VectorMap {
            instances: self
                .instances
                .iter()
                .map(|i| MapInstance {
                    map_class: i.map_class,
                    polyline: i.polyline.transformed(t),
                    score: i.score,
                })
                .collect(),
            timestamp: self.timestamp,
        }
    }
}

/// Axis-aligned clipping window in ego meters.
#[derive(Debug, Clone, Copy)]
pub struct ClipRect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl ClipRect {
    fn contains(&self, p: &Point2<f64>) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }
}

fn clip_segment(a: Point2<f64>, b: Point2<f64>, rect: &ClipRect) -> Option<(Point2<f64>, Point2<f64>)> {
    // Liang-Barsky.
    let d = b - a;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    let checks = [
        (-d.x, a.x - rect.x_min),
        (d.x, rect.x_max - a.x),
        (-d.y, a.y - rect.y_min),
        (d.y, rect.y_max - a.y),
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                if r > t1 {
                    return None;
                }
                t0 = t0.max(r);
            } else {
                if r < t0 {
                    return None;
                }
                t1 = t1.min(r);
            }
        }
    }
    if t0 > t1 {
        return None;
    }
    Some((a + d * t0, a + d * t1))
}

/// Clip an open polyline against a rectangle, splitting it into the pieces
/// that remain inside. Pieces shorter than `min_length` are dropped.
fn clip_open_polyline(p: &Polyline, rect: &ClipRect, min_length: f64) -> Vec<Polyline> {
    let mut pieces: Vec<Vec<Point2<f64>>> = Vec::new();
    let mut current: Vec<Point2<f64>> = Vec::new();
    for (a, b) in p.edges() {
        match clip_segment(a, b, rect) {
            Some((ca, cb)) => {
                if ca == cb {
                    continue;
                }
                match current.last() {
                    Some(last) if (last - ca).norm() < 1e-12 => current.push(cb),
                    Some(_) => {
                        pieces.push(std::mem::take(&mut current));
                        current.push(ca);
                        current.push(cb);
                    }
                    None => {
                        current.push(ca);
                        current.push(cb);
                    }
                }
            }
            None => {
                if !current.is_empty() {
                    pieces.push(std::mem::take(&mut current));
                }
            }
        }
    }
    if !current.is_empty() {
        pieces.push(current);
    }
    pieces
        .into_iter()
        .filter_map(|pts| Polyline::open(pts).ok())
        .filter(|pl| polyline_length(pl) >= min_length)
        .collect()
}

/// Clip a closed polygon against a rectangle (Sutherland-Hodgman).
fn clip_closed_polygon(p: &Polyline, rect: &ClipRect) -> Option<Polyline> {
    let inside = |p: &Point2<f64>, edge: usize| -> bool {
        match edge {
            0 => p.x >= rect.x_min,
            1 => p.x <= rect.x_max,
            2 => p.y >= rect.y_min,
            _ => p.y <= rect.y_max,
        }
    };
    let intersect = |a: &Point2<f64>, b: &Point2<f64>, edge: usize| -> Point2<f64> {
        let (va, vb) = (*a, *b);
        let t = match edge {
            0 => (rect.x_min - va.x) / (vb.x - va.x),
            1 => (rect.x_max - va.x) / (vb.x - va.x),
            2 => (rect.y_min - va.y) / (vb.y - va.y),
            _ => (rect.y_max - va.y) / (vb.y - va.y),
        };
        va + (vb - va) * t
    };

    let mut pts: Vec<Point2<f64>> = p.points().to_vec();
    for edge in 0..4 {
        if pts.is_empty() {
            return None;
        }
        let mut next = Vec::with_capacity(pts.len() + 4);
        for i in 0..pts.len() {
            let a = pts[i];
            let b = pts[(i + 1) % pts.len()];
            let a_in = inside(&a, edge);
            let b_in = inside(&b, edge);
            match (a_in, b_in) {
                (true, true) => next.push(b),
                (true, false) => next.push(intersect(&a, &b, edge)),
                (false, true) => {
                    next.push(intersect(&a, &b, edge));
                    next.push(b);
                }
                (false, false) => {}
            }
        }
        pts = next;
    }
    // Collapse duplicate consecutive vertices introduced by clipping.
    pts.dedup_by(|a, b| (*a - *b).norm() < 1e-9);
    if pts.len() >= 2 && (pts[0] - pts[pts.len() - 1]).norm() < 1e-9 {
        pts.pop();
    }
    if pts.len() < 3 {
        return None;
    }
    Polyline::closed(pts).ok()
}

/// Restrict a vector map to a window, splitting open elements where they
/// leave it. Used to pose ground truth into a frame's perception range.
pub fn clip_to_rect(map: &VectorMap, rect: &ClipRect, min_length: f64) -> VectorMap {
    let mut instances = Vec::new();
    for inst in &map.instances {
        if inst.polyline.is_closed() {
            // Fully-outside polygons clip to nothing; keep polygons that
            // merely touch the window only if something remains.
            if let Some(poly) = clip_closed_polygon(&inst.polyline, rect) {
                instances.push(MapInstance {
                    map_class: inst.map_class,
                    polyline: poly,
                    score: inst.score,
                });
            }
        } else {
            if inst.polyline.points().iter().all(|p| rect.contains(p)) {
                instances.push(inst.clone());
                continue;
            }
            for piece in clip_open_polyline(&inst.polyline, rect, min_length) {
                instances.push(MapInstance {
                    map_class: inst.map_class,
                    polyline: piece,
                    score: inst.score,
                });
            }
        }
    }
    VectorMap {
        instances,
        timestamp: map.timestamp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pts(v: &[(f64, f64)]) -> Vec<Point2<f64>> {
        v.iter().map(|&(x, y)| Point2::new(x, y)).collect()
    }

    #[test]
    fn open_orderings_are_forward_and_reverse() {
        let p = Polyline::open(pts(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)])).unwrap();
        let ords = equivalent_orderings(&p);
        assert_eq!(ords, vec![vec![0, 1, 2, 3], vec![3, 2, 1, 0]]);
    }

    #[test]
    fn closed_triangle_has_six_orderings() {
        let p = Polyline::closed(pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])).unwrap();
        assert_eq!(equivalent_orderings(&p).len(), 6);
    }

    #[test]
    fn closed_orderings_preserve_adjacency() {
        // Brute-force check: every ordering of a closed 5-gon maps cyclic
        // neighbors to cyclic neighbors.
        let p = Polyline::closed(pts(&[
            (0.0, 0.0),
            (1.0, 0.0),
            (1.5, 1.0),
            (0.5, 2.0),
            (-0.5, 1.0),
        ]))
        .unwrap();
        let n = 5;
        let ords = equivalent_orderings(&p);
        assert_eq!(ords.len(), 2 * n);
        let mut seen = std::collections::HashSet::new();
        for ord in &ords {
            let mut sorted = ord.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..n).collect::<Vec<_>>(), "not a permutation");
            for j in 0..n {
                let a = ord[j];
                let b = ord[(j + 1) % n];
                let diff = (a as i64 - b as i64).rem_euclid(n as i64);
                assert!(diff == 1 || diff == n as i64 - 1, "non-adjacent pair");
            }
            assert!(seen.insert(ord.clone()), "duplicate ordering");
        }
    }

    #[test]
    fn resample_segment_midpoint() {
        let p = Polyline::open(pts(&[(0.0, 0.0), (1.0, 0.0)])).unwrap();
        let r = resample(&p, 3).unwrap();
        assert_eq!(r.points().len(), 3);
        assert_abs_diff_eq!(r.points()[1].x, 0.5);
        assert_abs_diff_eq!(r.points()[1].y, 0.0);
        assert_eq!(r.points()[0], Point2::new(0.0, 0.0));
        assert_eq!(r.points()[2], Point2::new(1.0, 0.0));
    }

    #[test]
    fn resample_is_idempotent_on_uniform_polyline() {
        let p = Polyline::open(pts(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)])).unwrap();
        let r = resample(&p, 4).unwrap();
        for (a, b) in p.points().iter().zip(r.points()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn resample_closed_unit_square_yields_corners() {
        let square = Polyline::closed(pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]))
            .unwrap();
        let r = resample(&square, 4).unwrap();
        // Total length 4, spacing 1 -> exactly the corners.
        for (got, want) in r.points().iter().zip(square.points()) {
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn resample_spacing_is_uniform_in_arc_length() {
        let p = Polyline::open(pts(&[(0.0, 0.0), (2.0, 0.0), (2.0, 1.0), (5.0, 1.0)])).unwrap();
        let total = polyline_length(&p);
        let n = 17;
        let r = resample(&p, n).unwrap();
        // Walk the resampled points back along the original and check arc steps.
        let mut arcs = vec![0.0];
        for w in r.points().windows(2) {
            arcs.push(arcs.last().unwrap() + (w[1] - w[0]).norm());
        }
        // On a piecewise-straight path the chord between consecutive samples
        // can cut corners, so only check total and monotone spacing bounds.
        let step = total / (n - 1) as f64;
        for w in arcs.windows(2) {
            assert!(w[1] - w[0] <= step + 1e-9 * total);
        }
    }

    #[test]
    fn resample_rejects_degenerate_polyline() {
        let p = Polyline::open(pts(&[(1.0, 1.0), (1.0, 1.0)])).unwrap();
        assert!(matches!(
            resample(&p, 4),
            Err(VectorError::DegenerateLength(_))
        ));
    }

    #[test]
    fn length_of_three_four_five_segment() {
        let p = Polyline::open(pts(&[(0.0, 0.0), (3.0, 4.0)])).unwrap();
        assert_abs_diff_eq!(polyline_length(&p), 5.0);
    }

    #[test]
    fn length_of_closed_unit_square() {
        let p = Polyline::closed(pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])).unwrap();
        assert_abs_diff_eq!(polyline_length(&p), 4.0);
    }

    #[test]
    fn length_is_reversal_invariant() {
        let fwd = Polyline::open(pts(&[(0.0, 0.0), (1.0, 2.0), (4.0, -1.0), (2.0, 3.0)])).unwrap();
        let mut rev_pts = fwd.points().to_vec();
        rev_pts.reverse();
        let rev = Polyline::open(rev_pts).unwrap();
        assert_abs_diff_eq!(polyline_length(&fwd), polyline_length(&rev));
    }

    #[test]
    fn polyline_validation() {
        assert!(matches!(
            Polyline::open(pts(&[(0.0, 0.0)])),
            Err(VectorError::TooFewPoints(1))
        ));
        assert!(matches!(
            Polyline::open(vec![Point2::new(f64::NAN, 0.0), Point2::new(1.0, 0.0)]),
            Err(VectorError::NonFinite)
        ));
        assert!(matches!(
            Polyline::closed(pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)])),
            Err(VectorError::RepeatedEndpoint)
        ));
    }

    #[test]
    fn orderings_permute_points_without_altering_them() {
        let p = Polyline::closed(pts(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)])).unwrap();
        let reference: std::collections::BTreeSet<(i64, i64)> = p
            .points()
            .iter()
            .map(|q| ((q.x * 1e6) as i64, (q.y * 1e6) as i64))
            .collect();
        for ord in equivalent_orderings(&p) {
            let permuted: std::collections::BTreeSet<(i64, i64)> = ord
                .iter()
                .map(|&i| {
                    let q = p.points()[i];
                    ((q.x * 1e6) as i64, (q.y * 1e6) as i64)
                })
                .collect();
            assert_eq!(permuted, reference);
        }
    }

    #[test]
    fn clip_keeps_inside_line_and_splits_crossing_line() {
        let rect = ClipRect {
            x_min: 0.0,
            x_max: 10.0,
            y_min: 0.0,
            y_max: 10.0,
        };
        let inside = Polyline::open(pts(&[(1.0, 1.0), (9.0, 9.0)])).unwrap();
        let crossing = Polyline::open(pts(&[(-5.0, 5.0), (15.0, 5.0)])).unwrap();
        let vm = VectorMap::new(vec![
            MapInstance::new(MapClass::Divider, inside, 1.0).unwrap(),
            MapInstance::new(MapClass::Boundary, crossing, 1.0).unwrap(),
        ]);
        let clipped = clip_to_rect(&vm, &rect, 0.1);
        assert_eq!(clipped.instances.len(), 2);
        let boundary = &clipped.instances[1];
        assert_abs_diff_eq!(boundary.polyline.points()[0].x, 0.0);
        assert_abs_diff_eq!(boundary.polyline.points().last().unwrap().x, 10.0);
    }

    #[test]
    fn clip_closed_polygon_to_window() {
        let rect = ClipRect {
            x_min: 0.0,
            x_max: 4.0,
            y_min: 0.0,
            y_max: 4.0,
        };
        let square =
            Polyline::closed(pts(&[(2.0, 2.0), (6.0, 2.0), (6.0, 6.0), (2.0, 6.0)])).unwrap();
        let vm = VectorMap::new(vec![MapInstance::new(MapClass::PedCrossing, square, 1.0)
            .unwrap()]);
        let clipped = clip_to_rect(&vm, &rect, 0.1);
        assert_eq!(clipped.instances.len(), 1);
        let poly = &clipped.instances[0].polyline;
        assert!(poly.is_closed());
        // Remaining area is the [2,4]x[2,4] square.
        for p in poly.points() {
            assert!(p.x >= 2.0 - 1e-9 && p.x <= 4.0 + 1e-9);
            assert!(p.y >= 2.0 - 1e-9 && p.y <= 4.0 + 1e-9);
        }
    }

    #[test]
    fn fully_outside_elements_are_dropped() {
        let rect = ClipRect {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
        };
        let far = Polyline::open(pts(&[(5.0, 5.0), (6.0, 6.0)])).unwrap();
        let vm = VectorMap::new(vec![MapInstance::new(MapClass::Divider, far, 1.0).unwrap()]);
        assert!(clip_to_rect(&vm, &rect, 0.1).instances.is_empty());
    }
}
