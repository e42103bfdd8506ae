//! Instance-level bipartite matching, optimal point ordering, and the loss
//! stack evaluated over predicted and ground-truth vector maps.
//!
//! Losses here are scalar diagnostics and test oracles; nothing is
//! differentiated.

use crate::vector::{equivalent_orderings, MapClass, Polyline};
use nalgebra::Point2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatchingError {
    #[error("class scores must be non-negative and sum to 1 (sum was {0})")]
    InvalidScores(f64),
    #[error("point count mismatch: prediction has {pred}, ground truth has {gt}")]
    PointCountMismatch { pred: usize, gt: usize },
    #[error("score grid dimensions do not match: {0}")]
    DimensionMismatch(String),
    #[error("loss component is not finite")]
    NonFinite,
}

/// Index of the no-object bucket in a [`ClassScores`] vector.
pub const NO_OBJECT: usize = MapClass::ALL.len();

/// Per-instance class probabilities over the four map classes plus no-object.
#[derive(Debug, Clone)]
pub struct ClassScores {
    probs: [f64; 5],
}

impl ClassScores {
    pub fn new(probs: [f64; 5]) -> Result<Self, MatchingError> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(MatchingError::InvalidScores(sum));
        }
        Ok(Self { probs })
    }

    pub fn one_hot(class: MapClass) -> Self {
        let mut probs = [0.0; 5];
        probs[class as usize] = 1.0;
        Self { probs }
    }

    pub fn prob(&self, class: MapClass) -> f64 {
        self.probs[class as usize]
    }

    pub fn prob_index(&self, index: usize) -> f64 {
        self.probs[index]
    }
}

/// Focal loss `-alpha * (1 - p_t)^gamma * ln(p_t)` on the target class
/// probability, clamped below by 1e-12 before the log.
pub fn focal_loss(scores: &ClassScores, target: usize, alpha: f64, gamma: f64) -> f64 {
    let p_t = scores.prob_index(target).max(1e-12);
    -alpha * (1.0 - p_t).powf(gamma) * p_t.ln()
}

/// Standard focal-loss defaults.
pub const FOCAL_ALPHA: f64 = 0.25;
pub const FOCAL_GAMMA: f64 = 2.0;

fn manhattan(a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    (a.x - b.x).abs() + (a.y - b.y).abs()
}

/// Minimum summed Manhattan distance between a prediction and a ground truth
/// over the given equivalent orderings of the ground truth, with the winning
/// ordering.
pub fn point_cost(
    pred: &Polyline,
    gt: &Polyline,
    orderings: &[Vec<usize>],
) -> Result<(f64, Vec<usize>), MatchingError> {
    if pred.num_points() != gt.num_points() {
        return Err(MatchingError::PointCountMismatch {
            pred: pred.num_points(),
            gt: gt.num_points(),
        });
    }
    let mut best_cost = f64::INFINITY;
    let mut best: Option<&Vec<usize>> = None;
    for ordering in orderings {
        let mut cost = 0.0;
        for (j, &gi) in ordering.iter().enumerate() {
            cost += manhattan(&pred.points()[j], &gt.points()[gi]);
        }
        if cost < best_cost {
            best_cost = cost;
            best = Some(ordering);
        }
    }
    Ok((best_cost, best.cloned().unwrap_or_default()))
}

/// One matched prediction/ground-truth pair with the point ordering chosen
/// during matching.
#[derive(Debug, Clone)]
pub struct MatchedPair {
    pub pred_index: usize,
    pub gt_index: usize,
    pub ordering: Vec<usize>,
    pub point_cost: f64,
}

/// Outcome of instance-level matching.
#[derive(Debug, Clone, Default)]
pub struct Assignment {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

impl Assignment {
    pub fn total_cost(&self, cost: impl Fn(usize, usize) -> f64) -> f64 {
        self.pairs
            .iter()
            .map(|p| cost(p.pred_index, p.gt_index))
            .sum()
    }
}

/// Loss weights of the combined objective.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub w_cls: f64,
    pub w_p2p: f64,
    pub w_dir: f64,
    pub w_seg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_cls: 2.0,
            w_p2p: 5.0,
            w_dir: 0.005,
            w_seg: 1.0,
        }
    }
}

/// Minimum-cost one-to-one assignment over a dense cost matrix with
/// `rows <= cols`, Jonker-Volgenant style shortest augmenting paths.
/// Returns, for each row, its assigned column.
fn solve_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let rows = cost.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = cost[0].len();
    debug_assert!(rows <= cols);

    // job[w] = row assigned to column w; the extra virtual column seeds paths.
    let mut job = vec![usize::MAX; cols + 1];
    let mut potential_row = vec![0.0f64; rows];
    let mut potential_col = vec![0.0f64; cols + 1];

    for row in 0..rows {
        let mut w_curr = cols;
        job[w_curr] = row;
        let mut min_to = vec![f64::INFINITY; cols + 1];
        let mut prev = vec![usize::MAX; cols + 1];
        let mut in_tree = vec![false; cols + 1];

        while job[w_curr] != usize::MAX {
            in_tree[w_curr] = true;
            let j = job[w_curr];
            let mut delta = f64::INFINITY;
            let mut w_next = cols;
            for w in 0..cols {
                if in_tree[w] {
                    continue;
                }
                let reduced = cost[j][w] - potential_row[j] - potential_col[w];
                if reduced < min_to[w] {
                    min_to[w] = reduced;
                    prev[w] = w_curr;
                }
                if min_to[w] < delta {
                    delta = min_to[w];
                    w_next = w;
                }
            }
            for w in 0..=cols {
                if in_tree[w] {
                    potential_row[job[w]] += delta;
                    potential_col[w] -= delta;
                } else {
                    min_to[w] -= delta;
                }
            }
            w_curr = w_next;
        }

        while w_curr != cols {
            let w_prev = prev[w_curr];
            job[w_curr] = job[w_prev];
            w_curr = w_prev;
        }
    }

    let mut row_to_col = vec![usize::MAX; rows];
    for (w, &r) in job[..cols].iter().enumerate() {
        if r != usize::MAX {
            row_to_col[r] = w;
        }
    }
    row_to_col
}

/// Match predictions to ground-truth instances so the summed matching cost
/// `w_cls * (-p_pred(gt_class)) + w_p2p * point_cost` is minimal.
///
/// Polylines on both sides must share a common point count.
pub fn instance_match(
    preds: &[(ClassScores, Polyline)],
    gts: &[(MapClass, Polyline)],
    weights: &LossWeights,
) -> Result<Assignment, MatchingError> {
    if preds.is_empty() || gts.is_empty() {
        return Ok(Assignment {
            pairs: Vec::new(),
            unmatched_preds: (0..preds.len()).collect(),
            unmatched_gts: (0..gts.len()).collect(),
        });
    }

    let gt_orderings: Vec<Vec<Vec<usize>>> = gts
        .iter()
        .map(|(_, poly)| equivalent_orderings(poly))
        .collect();

    let mut cost = vec![vec![0.0f64; gts.len()]; preds.len()];
    let mut point_costs = vec![vec![(0.0f64, Vec::new()); gts.len()]; preds.len()];
    for (i, (scores, pred_poly)) in preds.iter().enumerate() {
        for (j, (gt_class, gt_poly)) in gts.iter().enumerate() {
            let (pc, ordering) = point_cost(pred_poly, gt_poly, &gt_orderings[j])?;
            cost[i][j] = weights.w_cls * (-scores.prob(*gt_class)) + weights.w_p2p * pc;
            point_costs[i][j] = (pc, ordering);
        }
    }

    // The solver wants rows <= cols; transpose when predictions outnumber gts.
    let transposed = preds.len() > gts.len();
    let solved = if transposed {
        let flipped: Vec<Vec<f64>> = (0..gts.len())
            .map(|j| (0..preds.len()).map(|i| cost[i][j]).collect())
            .collect();
        solve_assignment(&flipped)
    } else {
        solve_assignment(&cost)
    };

    let mut pairs = Vec::new();
    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    for (row, &col) in solved.iter().enumerate() {
        let (pred_index, gt_index) = if transposed { (col, row) } else { (row, col) };
        let (pc, ordering) = point_costs[pred_index][gt_index].clone();
        pred_used[pred_index] = true;
        gt_used[gt_index] = true;
        pairs.push(MatchedPair {
            pred_index,
            gt_index,
            ordering,
            point_cost: pc,
        });
    }
    pairs.sort_by_key(|p| p.pred_index);

    Ok(Assignment {
        pairs,
        unmatched_preds: (0..preds.len()).filter(|&i| !pred_used[i]).collect(),
        unmatched_gts: (0..gts.len()).filter(|&j| !gt_used[j]).collect(),
    })
}

/// Summed Manhattan point-to-point loss over matched pairs, under each pair's
/// chosen ordering. Unmatched predictions contribute nothing.
pub fn p2p_loss(
    assignment: &Assignment,
    preds: &[(ClassScores, Polyline)],
    gts: &[(MapClass, Polyline)],
) -> f64 {
    assignment
        .pairs
        .iter()
        .map(|pair| {
            let pred = &preds[pair.pred_index].1;
            let gt = &gts[pair.gt_index].1;
            pair.ordering
                .iter()
                .enumerate()
                .map(|(j, &gi)| manhattan(&pred.points()[j], &gt.points()[gi]))
                .sum::<f64>()
        })
        .sum()
}

/// Sign convention for the edge-direction loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirLossMode {
    /// `1 - cos` per edge pair: zero at alignment, positive otherwise.
    #[default]
    OneMinusCosine,
    /// Raw cosine similarity summed as printed; kept for fidelity experiments.
    RawCosine,
}

/// Edge-direction loss over matched pairs.
///
/// Edge `j` connects point `j` to point `(j+1) mod n`; for open polylines the
/// wrap-around edge is skipped. Zero-length edges contribute nothing.
pub fn dir_loss_with_mode(
    assignment: &Assignment,
    preds: &[(ClassScores, Polyline)],
    gts: &[(MapClass, Polyline)],
    mode: DirLossMode,
) -> f64 {
    let mut total = 0.0;
    for pair in &assignment.pairs {
        let pred = &preds[pair.pred_index].1;
        let gt = &gts[pair.gt_index].1;
        let n = pred.num_points();
        let edge_count = if pred.is_closed() && gt.is_closed() {
            n
        } else {
            n - 1
        };
        for j in 0..edge_count {
            let jn = (j + 1) % n;
            let pe = pred.points()[jn] - pred.points()[j];
            let ge = gt.points()[pair.ordering[jn]] - gt.points()[pair.ordering[j]];
            let norms = pe.norm() * ge.norm();
            if norms < 1e-15 {
                continue;
            }
            let cos = (pe.dot(&ge) / norms).clamp(-1.0, 1.0);
            total += match mode {
                DirLossMode::OneMinusCosine => 1.0 - cos,
                DirLossMode::RawCosine => cos,
            };
        }
    }
    total
}

pub fn dir_loss(
    assignment: &Assignment,
    preds: &[(ClassScores, Polyline)],
    gts: &[(MapClass, Polyline)],
) -> f64 {
    dir_loss_with_mode(assignment, preds, gts, DirLossMode::OneMinusCosine)
}

/// Dense per-cell class scores paired with ground-truth class ids, for the
/// auxiliary segmentation loss.
#[derive(Debug, Clone)]
pub struct BevScoreGrid {
    width: usize,
    height: usize,
    num_classes: usize,
    scores: Vec<f64>,
    gt: Vec<u8>,
}

impl BevScoreGrid {
    pub fn new(
        width: usize,
        height: usize,
        num_classes: usize,
        scores: Vec<f64>,
        gt: Vec<u8>,
    ) -> Result<Self, MatchingError> {
        if scores.len() != width * height * num_classes {
            return Err(MatchingError::DimensionMismatch(format!(
                "scores length {} != {}x{}x{}",
                scores.len(),
                width,
                height,
                num_classes
            )));
        }
        if gt.len() != width * height {
            return Err(MatchingError::DimensionMismatch(format!(
                "ground truth length {} != {}x{}",
                gt.len(),
                width,
                height
            )));
        }
        if gt.iter().any(|&c| (c as usize) >= num_classes) {
            return Err(MatchingError::DimensionMismatch(
                "ground-truth class id out of range".to_string(),
            ));
        }
        Ok(Self {
            width,
            height,
            num_classes,
            scores,
            gt,
        })
    }
}

/// Mean per-cell cross-entropy between the softmax of the scores and the
/// ground-truth class ids.
pub fn seg_loss(grid: &BevScoreGrid) -> Result<f64, MatchingError> {
    let cells = grid.width * grid.height;
    if cells == 0 {
        return Err(MatchingError::DimensionMismatch("empty grid".to_string()));
    }
    let mut total = 0.0;
    for cell in 0..cells {
        let s = &grid.scores[cell * grid.num_classes..(cell + 1) * grid.num_classes];
        let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + s.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        total += lse - s[grid.gt[cell] as usize];
    }
    Ok(total / cells as f64)
}

/// The scalar loss components of one evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossComponents {
    pub cls: f64,
    pub p2p: f64,
    pub dir: f64,
    pub seg: f64,
}

pub fn total_loss(components: &LossComponents, weights: &LossWeights) -> Result<f64, MatchingError> {
    let LossComponents { cls, p2p, dir, seg } = *components;
    if ![cls, p2p, dir, seg].iter().all(|v| v.is_finite()) {
        return Err(MatchingError::NonFinite);
    }
    Ok(weights.w_cls * cls + weights.w_p2p * p2p + weights.w_dir * dir + weights.w_seg * seg)
}
