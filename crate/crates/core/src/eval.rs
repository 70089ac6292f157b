//! Detection quality and throughput metrics.
//!
//! mAP protocol: IoU threshold 0.5, detections of a class pooled over all
//! frames and visited by descending confidence (ties by frame index, then
//! detection order within the frame), each one greedily matched to the
//! highest-IoU unmatched ground-truth box of the same class in the same
//! frame. AP is the all-points interpolated area under the
//! precision/recall curve; mAP is the unweighted mean over classes.
//!
//! Filled frames are scored as ordinary predictions for their own frame,
//! which is how frame drops show up as lost accuracy.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::detector::{BBox, Detection, ReplayStore};
use crate::error::{Error, Result};
use crate::synchronizer::{FrameResult, FrameStatus};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct GtObject {
    pub bbox: BBox,
    pub class_label: String,
}

/// Ground-truth boxes per frame index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthSet {
    frames: BTreeMap<usize, Vec<GtObject>>,
    classes: BTreeSet<String>,
}

impl GroundTruthSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        index: usize,
        bbox: BBox,
        class_label: impl Into<String>,
    ) -> Result<()> {
        bbox.validate()?;
        let class_label = class_label.into();
        self.classes.insert(class_label.clone());
        self.frames
            .entry(index)
            .or_default()
            .push(GtObject { bbox, class_label });
        Ok(())
    }

    pub fn frame(&self, index: usize) -> &[GtObject] {
        self.frames.get(&index).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn classes(&self) -> &BTreeSet<String> {
        &self.classes
    }

    /// One past the highest annotated frame index.
    pub fn frame_span(&self) -> usize {
        self.frames.keys().next_back().map_or(0, |k| k + 1)
    }

    pub fn annotated_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn total_boxes(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[GtObject])> {
        self.frames.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// A "perfect detector": every ground-truth box replayed with
    /// confidence 1.0.
    pub fn as_perfect_replay(&self) -> ReplayStore {
        self.frames
            .iter()
            .map(|(&index, objects)| {
                let dets = objects
                    .iter()
                    .map(|o| Detection {
                        bbox: o.bbox,
                        class_label: o.class_label.clone(),
                        confidence: 1.0,
                    })
                    .collect();
                (index, dets)
            })
            .collect()
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    if a == b {
        return Ok(1.0);
    }
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return Ok(0.0);
    }
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

/// All-points interpolated AP for TP/FP `flags` ordered by descending
/// confidence. A class with no ground truth scores 0.
pub fn average_precision(flags: &[bool], gt_count: usize) -> f64 {
    if gt_count == 0 || flags.is_empty() {
        return 0.0;
    }
    let mut recall = Vec::with_capacity(flags.len() + 2);
    let mut precision = Vec::with_capacity(flags.len() + 2);
    recall.push(0.0);
    precision.push(0.0);
    let mut tp = 0usize;
    for (k, &hit) in flags.iter().enumerate() {
        if hit {
            tp += 1;
        }
        recall.push(tp as f64 / gt_count as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    recall.push(1.0);
    precision.push(0.0);

    // precision envelope, right to left
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    recall
        .windows(2)
        .zip(&precision[1..])
        .filter(|(r, _)| r[1] != r[0])
        .map(|(r, p)| (r[1] - r[0]) * p)
        .sum()
}

/// Per-class AP and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub per_class_ap: BTreeMap<String, f64>,
    /// Mean of `per_class_ap`; 0 when there are no classes at all.
    pub map_score: f64,
}

struct Candidate<'a> {
    frame: usize,
    order: usize,
    confidence: f64,
    bbox: &'a BBox,
}

/// Scores emitted frame results against ground truth.
pub fn evaluate_map(
    results: &[FrameResult],
    gt: &GroundTruthSet,
    iou_threshold: f64,
) -> Result<QualityReport> {
    check_complete(results, gt)?;

    let mut classes: BTreeSet<&str> = gt.classes().iter().map(String::as_str).collect();
    for r in results {
        classes.extend(r.detections.iter().map(|d| d.class_label.as_str()));
    }

    let mut per_class_ap = BTreeMap::new();
    for class in classes {
        let mut candidates: Vec<Candidate<'_>> = results
            .iter()
            .flat_map(|r| {
                r.detections
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| d.class_label == class)
                    .map(move |(order, d)| Candidate {
                        frame: r.index,
                        order,
                        confidence: d.confidence,
                        bbox: &d.bbox,
                    })
            })
            .collect();
        candidates.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then(a.frame.cmp(&b.frame))
                .then(a.order.cmp(&b.order))
        });

        let gt_of_class = |frame: usize| {
            gt.frame(frame)
                .iter()
                .filter(|o| o.class_label == class)
                .map(|o| &o.bbox)
                .collect::<Vec<_>>()
        };
        let gt_count: usize = gt.iter().map(|(i, _)| gt_of_class(i).len()).sum();

        let mut matched: BTreeMap<usize, Vec<bool>> = BTreeMap::new();
        let mut flags = Vec::with_capacity(candidates.len());
        for c in &candidates {
            let boxes = gt_of_class(c.frame);
            let used = matched
                .entry(c.frame)
                .or_insert_with(|| vec![false; boxes.len()]);
            let mut best: Option<(usize, f64)> = None;
            for (g, gbox) in boxes.iter().enumerate() {
                if used[g] {
                    continue;
                }
                let overlap = iou(c.bbox, gbox)?;
                if overlap >= iou_threshold
                    && best.is_none_or(|(_, b)| overlap.partial_cmp(&b) == Some(Ordering::Greater))
                {
                    best = Some((g, overlap));
                }
            }
            match best {
                Some((g, _)) => {
                    used[g] = true;
                    flags.push(true);
                }
                None => flags.push(false),
            }
        }
        per_class_ap.insert(class.to_string(), average_precision(&flags, gt_count));
    }

    let map_score = if per_class_ap.is_empty() {
        0.0
    } else {
        per_class_ap.values().sum::<f64>() / per_class_ap.len() as f64
    };
    Ok(QualityReport {
        per_class_ap,
        map_score,
    })
}

fn check_complete(results: &[FrameResult], gt: &GroundTruthSet) -> Result<()> {
    if let Some((pos, r)) = results.iter().enumerate().find(|(i, r)| r.index != *i) {
        return Err(Error::Protocol(format!(
            "results are not a complete in-order sequence: position {pos} holds frame {}",
            r.index
        )));
    }
    if results.len() < gt.frame_span() {
        return Err(Error::Protocol(format!(
            "results cover {} frames but ground truth spans {}",
            results.len(),
            gt.frame_span()
        )));
    }
    Ok(())
}

/// A processed frame's dispatch and completion times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletionEvent {
    pub frame_index: usize,
    pub worker_id: usize,
    pub dispatch_ts: f64,
    pub completion_ts: f64,
}

/// Processed frames per second over `[first dispatch, last completion]`.
pub fn processing_fps(log: &[CompletionEvent]) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::UndefinedMetric(
            "processing FPS needs at least one processed frame".into(),
        ));
    }
    let first = log
        .iter()
        .map(|e| e.dispatch_ts)
        .fold(f64::INFINITY, f64::min);
    let last = log
        .iter()
        .map(|e| e.completion_ts)
        .fold(f64::NEG_INFINITY, f64::max);
    let span = last - first;
    if span.is_nan() || span <= 0.0 {
        return Err(Error::UndefinedMetric(format!(
            "processing span must be positive, got {span}"
        )));
    }
    Ok(log.len() as f64 / span)
}

pub fn fps_per_watt(fps: f64, tdp_watts: f64) -> Result<f64> {
    if !(tdp_watts.is_finite() && tdp_watts > 0.0) {
        return Err(Error::Input(format!(
            "TDP must be a positive number of watts, got {tdp_watts}"
        )));
    }
    Ok(fps / tdp_watts)
}

/// Counts of (processed, filled, filled-empty) results.
pub fn status_counts(results: &[FrameResult]) -> (usize, usize, usize) {
    results
        .iter()
        .fold((0, 0, 0), |(p, f, e), r| match r.status {
            FrameStatus::Processed => (p + 1, f, e),
            FrameStatus::Filled => (p, f + 1, e),
            FrameStatus::FilledEmpty => (p, f, e + 1),
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Completed detections per second of processing span.
    pub sigma_p_fps: f64,
    pub processed_count: usize,
    pub filled_count: usize,
    pub filled_empty_count: usize,
    pub per_class_ap: BTreeMap<String, f64>,
    /// `None` when no ground truth was supplied.
    pub map_score: Option<f64>,
    pub fps_per_watt: Option<f64>,
}

impl MetricsReport {
    pub fn total_frames(&self) -> usize {
        self.processed_count + self.filled_count + self.filled_empty_count
    }

    pub fn dropped(&self) -> usize {
        self.filled_count + self.filled_empty_count
    }
}
