//! Chamfer-distance average precision over classes and thresholds, plus the
//! cross-dataset performance-transfer ratio.

use crate::vector::{resample, MapClass, MapInstance, Polyline, VectorMap};
use nalgebra::Point2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("chamfer distance of an empty point set is undefined")]
    EmptySet,
    #[error("transfer ratio baseline mAP must be positive, got {0}")]
    ZeroBaseline(f64),
}

/// Evaluation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Chamfer thresholds in meters, ascending.
    pub thresholds: Vec<f64>,
    /// Use squared point distances inside the chamfer sum. Thresholds stay in
    /// meters and are squared before comparison.
    pub squared_chamfer: bool,
    pub classes: Vec<MapClass>,
    /// Instances are resampled to this many points before chamfer evaluation;
    /// decoder-level point counts are too coarse for distance fidelity.
    pub chamfer_points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            thresholds: vec![0.5, 1.0, 1.5],
            squared_chamfer: true,
            classes: MapClass::ALL.to_vec(),
            chamfer_points: 100,
        }
    }
}

/// One frame of predictions against ground truth, both in the same ego frame.
#[derive(Debug, Clone)]
pub struct EvalSample {
    pub sample_id: String,
    pub predictions: VectorMap,
    pub ground_truth: VectorMap,
}

/// Symmetric mean nearest-neighbor distance between two point sets.
pub fn chamfer(
    x: &[Point2<f64>],
    y: &[Point2<f64>],
    squared: bool,
) -> Result<f64, EvalError> {
    if x.is_empty() || y.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let one_way = |from: &[Point2<f64>], to: &[Point2<f64>]| -> f64 {
        let mut sum = 0.0;
        for p in from {
            let mut best = f64::INFINITY;
            for q in to {
                let dx = p.x - q.x;
                let dy = p.y - q.y;
                let d2 = dx * dx + dy * dy;
                if d2 < best {
                    best = d2;
                }
            }
            sum += if squared { best } else { best.sqrt() };
        }
        sum / from.len() as f64
    };
    Ok(one_way(x, y) + one_way(y, x))
}

fn dense_points(poly: &Polyline, n: usize) -> Vec<Point2<f64>> {
    match resample(poly, n) {
        Ok(r) => r.points().to_vec(),
        // Degenerate (zero-length) elements fall back to their raw points.
        Err(_) => poly.points().to_vec(),
    }
}

/// Chamfer distances and scores of one class within one sample, preds sorted
/// by descending score. Computed once and reused across thresholds.
struct SampleClassMatch {
    scores: Vec<f64>,
    dist: Vec<Vec<f64>>,
    num_gts: usize,
}

fn build_match(
    preds: &[&MapInstance],
    gts: &[&MapInstance],
    config: &EvalConfig,
) -> SampleClassMatch {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .score
            .partial_cmp(&preds[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let pred_points: Vec<Vec<Point2<f64>>> = order
        .iter()
        .map(|&i| dense_points(&preds[i].polyline, config.chamfer_points))
        .collect();
    let gt_points: Vec<Vec<Point2<f64>>> = gts
        .iter()
        .map(|g| dense_points(&g.polyline, config.chamfer_points))
        .collect();
    let dist = pred_points
        .iter()
        .map(|p| {
            gt_points
                .iter()
                .map(|g| chamfer(p, g, config.squared_chamfer).unwrap_or(f64::INFINITY))
                .collect()
        })
        .collect();
    SampleClassMatch {
        scores: order.iter().map(|&i| preds[i].score).collect(),
        dist,
        num_gts: gts.len(),
    }
}

/// Greedy score-ordered matching: each prediction takes the closest ground
/// truth still unmatched and is a true positive if that chamfer distance is
/// within the threshold. Failed predictions do not consume a ground truth.
fn greedy_tp_flags(m: &SampleClassMatch, threshold_cmp: f64) -> Vec<bool> {
    let mut gt_used = vec![false; m.num_gts];
    let mut flags = Vec::with_capacity(m.dist.len());
    for row in &m.dist {
        let mut best: Option<(usize, f64)> = None;
        for (j, &d) in row.iter().enumerate() {
            if gt_used[j] {
                continue;
            }
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        match best {
            Some((j, d)) if d <= threshold_cmp => {
                gt_used[j] = true;
                flags.push(true);
            }
            _ => flags.push(false),
        }
    }
    flags
}

/// Area under the precision-recall curve with the monotone-nonincreasing
/// precision envelope, from score-ordered true-positive flags.
fn ap_from_flags(flags: &[bool], num_gts: usize) -> f64 {
    if num_gts == 0 {
        // No ground truth: perfect if nothing was predicted, zero otherwise.
        return if flags.is_empty() { 1.0 } else { 0.0 };
    }
    if flags.is_empty() {
        return 0.0;
    }
    let n = flags.len();
    let mut precision = Vec::with_capacity(n);
    let mut recall = Vec::with_capacity(n);
    let mut tp = 0usize;
    for (i, &is_tp) in flags.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / num_gts as f64);
    }
    let mut envelope = precision.clone();
    for i in (0..n - 1).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..n {
        ap += (recall[i] - prev_recall) * envelope[i];
        prev_recall = recall[i];
    }
    ap
}

fn threshold_cmp(threshold: f64, squared: bool) -> f64 {
    if squared {
        threshold * threshold
    } else {
        threshold
    }
}

/// Average precision of one class at one threshold within a single sample.
pub fn ap_single(
    preds: &[&MapInstance],
    gts: &[&MapInstance],
    threshold: f64,
    config: &EvalConfig,
) -> f64 {
    let m = build_match(preds, gts, config);
    let flags = greedy_tp_flags(&m, threshold_cmp(threshold, config.squared_chamfer));
    ap_from_flags(&flags, m.num_gts)
}

/// Pooled average precision of one class across samples, averaged over the
/// configured thresholds. Matching stays within each sample; the
/// precision-recall curve pools all predictions by score.
pub fn ap_class(samples: &[EvalSample], class: MapClass, config: &EvalConfig) -> f64 {
    let matches: Vec<SampleClassMatch> = samples
        .par_iter()
        .map(|s| {
            let preds: Vec<&MapInstance> = s.predictions.instances_of(class).collect();
            let gts: Vec<&MapInstance> = s.ground_truth.instances_of(class).collect();
            build_match(&preds, &gts, config)
        })
        .collect();
    let total: f64 = config
        .thresholds
        .iter()
        .map(|&t| pooled_ap(&matches, threshold_cmp(t, config.squared_chamfer)))
        .sum();
    total / config.thresholds.len() as f64
}

fn pooled_ap(matches: &[SampleClassMatch], threshold_cmp: f64) -> f64 {
    let num_gts: usize = matches.iter().map(|m| m.num_gts).sum();
    // (score, sample index, in-sample rank, tp) pooled across samples.
    let mut pooled: Vec<(f64, usize, usize, bool)> = Vec::new();
    for (si, m) in matches.iter().enumerate() {
        let flags = greedy_tp_flags(m, threshold_cmp);
        for (rank, (&score, &tp)) in m.scores.iter().zip(flags.iter()).enumerate() {
            pooled.push((score, si, rank, tp));
        }
    }
    pooled.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let flags: Vec<bool> = pooled.iter().map(|p| p.3).collect();
    ap_from_flags(&flags, num_gts)
}

/// Per-class evaluation results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassEval {
    pub class: String,
    pub ap_per_threshold: Vec<f64>,
    pub ap: f64,
    pub num_predictions: usize,
    pub num_ground_truths: usize,
}

/// Evaluation report: per-class AP at each threshold, threshold-averaged
/// per-class AP, and their unweighted mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub squared_chamfer: bool,
    pub num_samples: usize,
    pub classes: Vec<ClassEval>,
    pub mean_ap: f64,
    pub flags: Vec<String>,
}

/// Unweighted mean over per-class APs, the class-mean behind the mAP column.
pub fn mean_of_class_aps(aps: &[f64]) -> f64 {
    if aps.is_empty() {
        return 0.0;
    }
    aps.iter().sum::<f64>() / aps.len() as f64
}

pub fn evaluate(samples: &[EvalSample], config: &EvalConfig) -> EvalReport {
    let mut classes = Vec::new();
    let mut flags = Vec::new();
    for &class in &config.classes {
        let matches: Vec<SampleClassMatch> = samples
            .par_iter()
            .map(|s| {
                let preds: Vec<&MapInstance> = s.predictions.instances_of(class).collect();
                let gts: Vec<&MapInstance> = s.ground_truth.instances_of(class).collect();
                build_match(&preds, &gts, config)
            })
            .collect();
        let num_predictions: usize = matches.iter().map(|m| m.scores.len()).sum();
        let num_ground_truths: usize = matches.iter().map(|m| m.num_gts).sum();
        let ap_per_threshold: Vec<f64> = config
            .thresholds
            .iter()
            .map(|&t| pooled_ap(&matches, threshold_cmp(t, config.squared_chamfer)))
            .collect();
        let ap = mean_of_class_aps(&ap_per_threshold);
        if num_predictions == 0 && num_ground_truths > 0 {
            flags.push(format!(
                "{}: no predictions for {} ground-truth instances",
                class.as_str(),
                num_ground_truths
            ));
        }
        classes.push(ClassEval {
            class: class.as_str().to_string(),
            ap_per_threshold,
            ap,
            num_predictions,
            num_ground_truths,
        });
    }
    let mean_ap = mean_of_class_aps(&classes.iter().map(|c| c.ap).collect::<Vec<_>>());
    EvalReport {
        thresholds: config.thresholds.clone(),
        squared_chamfer: config.squared_chamfer,
        num_samples: samples.len(),
        classes,
        mean_ap,
        flags,
    }
}

impl EvalReport {
    /// Plain-text table in the per-class AP / mAP column shape.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = MapClass::ALL
            .iter()
            .map(|c| format!("{:>8}", c.short_label()))
            .collect();
        out.push_str(&format!(
            "{:<12}{}{:>8}\n",
            "AP",
            header.join(""),
            "mAP"
        ));
        let mut row = format!("{:<12}", format!("{} samples", self.num_samples));
        for class in MapClass::ALL {
            let ap = self
                .classes
                .iter()
                .find(|c| c.class == class.as_str())
                .map(|c| c.ap)
                .unwrap_or(f64::NAN);
            row.push_str(&format!("{:>8.3}", ap));
        }
        row.push_str(&format!("{:>8.3}\n", self.mean_ap));
        out.push_str(&row);
        for flag in &self.flags {
            out.push_str(&format!("note: {flag}\n"));
        }
        out
    }
}

/// Cross-dataset performance transfer: `100 * mAP_cross / mAP_same`.
pub fn transfer_ratio(map_cross: f64, map_same: f64) -> Result<f64, EvalError> {
    if map_same <= 0.0 {
        return Err(EvalError::ZeroBaseline(map_same));
    }
    Ok(100.0 * map_cross / map_same)
}
