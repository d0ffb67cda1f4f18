//! Single-class box evaluation: IoU, greedy matching, all-points AP and the
//! mAP suite, plus the probability gate that decides which frames reach the
//! localization stage.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Axis-aligned box in pixel coordinates with strictly positive area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let all_finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !all_finite || x_max <= x_min || y_max <= y_min {
            return Err(Error::Degenerate(format!(
                "box ({x_min}, {y_min}, {x_max}, {y_max}) has no positive area"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

/// Intersection over union; 0 for disjoint or edge-touching boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let w = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let h = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    inter / (a.area() + b.area() - inter)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub bbox: BBox,
    pub confidence: f64,
}

/// Ground truth and predictions for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub image: String,
    pub ground_truth: Vec<BBox>,
    pub predictions: Vec<ScoredBox>,
}

impl DetectionSet {
    pub fn new(
        image: String,
        ground_truth: Vec<BBox>,
        predictions: Vec<ScoredBox>,
    ) -> Result<Self> {
        if let Some(p) = predictions
            .iter()
            .find(|p| !(0.0..=1.0).contains(&p.confidence))
        {
            return Err(Error::Data(format!(
                "image {image}: confidence {} outside [0, 1]",
                p.confidence
            )));
        }
        Ok(Self {
            image,
            ground_truth,
            predictions,
        })
    }
}

/// Marks each pooled prediction as true or false positive, in ranked order.
///
/// Predictions are ranked by descending confidence with ties kept in
/// insertion order (image order, then prediction order). A prediction takes
/// the unmatched ground truth of its own image with the highest IoU, ties to
/// the lowest index, provided that IoU reaches `iou_thresh`.
pub fn match_predictions(sets: &[DetectionSet], iou_thresh: f64) -> Vec<bool> {
    let mut ranked: Vec<(usize, &ScoredBox)> = sets
        .iter()
        .enumerate()
        .flat_map(|(img, s)| s.predictions.iter().map(move |p| (img, p)))
        .collect();
    // stable sort keeps insertion order among equal confidences
    ranked.sort_by(|a, b| b.1.confidence.total_cmp(&a.1.confidence));

    let mut matched: Vec<Vec<bool>> = sets
        .iter()
        .map(|s| vec![false; s.ground_truth.len()])
        .collect();
    ranked
        .iter()
        .map(|&(img, pred)| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in sets[img].ground_truth.iter().enumerate() {
                if matched[img][g] {
                    continue;
                }
                let v = iou(&pred.bbox, gt);
                if v >= iou_thresh && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
            match best {
                Some((g, _)) => {
                    matched[img][g] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Area under the precision-recall curve with all-points interpolation.
pub fn average_precision(sets: &[DetectionSet], iou_thresh: f64) -> Result<f64> {
    let total_gt: usize = sets.iter().map(|s| s.ground_truth.len()).sum();
    if total_gt == 0 {
        return Err(Error::Data("no ground-truth boxes".into()));
    }
    let hits = match_predictions(sets, iou_thresh);

    let mut recall = Vec::with_capacity(hits.len());
    let mut precision = Vec::with_capacity(hits.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for hit in hits {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / total_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    // monotone non-increasing envelope
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        if *r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = *r;
        }
    }
    Ok(ap)
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> [f64; 10] {
    core::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapSuite {
    /// Mean AP over [`coco_thresholds`].
    pub map: f64,
    pub map25: f64,
    pub map50: f64,
    pub map75: f64,
}

pub fn map_suite(sets: &[DetectionSet]) -> Result<MapSuite> {
    let thresholds = coco_thresholds();
    let mut sum = 0.0;
    for &t in &thresholds {
        sum += average_precision(sets, t)?;
    }
    Ok(MapSuite {
        map: sum / thresholds.len() as f64,
        map25: average_precision(sets, 0.25)?,
        map50: average_precision(sets, 0.5)?,
        map75: average_precision(sets, 0.75)?,
    })
}

/// `1` where `p >= tau`, else `0`.
pub fn cascade_gate(probs: &[f64], tau: f64) -> Result<Vec<u8>> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("tau must lie in [0, 1], got {tau}")));
    }
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if !(0.0..=1.0).contains(&p) {
                Err(Error::Data(format!(
                    "probability {p} at {i} outside [0, 1]"
                )))
            } else {
                Ok(u8::from(p >= tau))
            }
        })
        .collect()
}
