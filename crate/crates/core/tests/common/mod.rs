//! Reference implementations used as test oracles. They share no code with
//! the crate's evaluator.

#![allow(dead_code)]

pub mod sync;

use detsim::detector::{BBox, Detection};
use detsim::eval::GroundTruthSet;
use detsim::synchronizer::{FrameResult, FrameStatus};
use rand::Rng;

/// Overlap computed from corner coordinates.
pub fn corner_iou(a: &BBox, b: &BBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = (a.x, a.y, a.x + a.w, a.y + a.h);
    let (bx1, by1, bx2, by2) = (b.x, b.y, b.x + b.w, b.y + b.h);
    let w = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let h = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = w * h;
    if inter == 0.0 {
        return 0.0;
    }
    if a == b {
        return 1.0;
    }
    inter / (a.w * a.h + b.w * b.h - inter)
}

/// AP as a sum over true positives of `1/gt` times the best precision at
/// any rank at or after that positive.
pub fn brute_ap(flags: &[bool], gt_count: usize) -> f64 {
    if gt_count == 0 {
        return 0.0;
    }
    let precision: Vec<f64> = (0..flags.len())
        .map(|k| flags[..=k].iter().filter(|f| **f).count() as f64 / (k + 1) as f64)
        .collect();
    let mut ap = 0.0;
    for k in 0..flags.len() {
        if flags[k] {
            let best = precision[k..].iter().cloned().fold(0.0, f64::max);
            ap += best / gt_count as f64;
        }
    }
    ap
}

/// Mean AP by exhaustive scan. Returns `(classes sorted, per-class AP, mAP)`.
pub fn brute_map(
    results: &[FrameResult],
    gt: &GroundTruthSet,
    thr: f64,
) -> (Vec<String>, Vec<f64>, f64) {
    let mut classes: Vec<String> = Vec::new();
    for (_, objs) in gt.iter() {
        for o in objs {
            if !classes.contains(&o.class_label) {
                classes.push(o.class_label.clone());
            }
        }
    }
    for r in results {
        for d in &r.detections {
            if !classes.contains(&d.class_label) {
                classes.push(d.class_label.clone());
            }
        }
    }
    classes.sort();

    let mut aps = Vec::new();
    for class in &classes {
        // (confidence, frame, order, box)
        let mut dets: Vec<(f64, usize, usize, BBox)> = Vec::new();
        for r in results {
            let mut order = 0;
            for d in &r.detections {
                if &d.class_label == class {
                    dets.push((d.confidence, r.index, order, d.bbox));
                    order += 1;
                }
            }
        }
        // selection sort on (conf desc, frame asc, order asc)
        let mut sorted = Vec::new();
        while !dets.is_empty() {
            let mut best = 0;
            for i in 1..dets.len() {
                let (c, f, o, _) = dets[i];
                let (bc, bf, bo, _) = dets[best];
                if c > bc || (c == bc && (f < bf || (f == bf && o < bo))) {
                    best = i;
                }
            }
            sorted.push(dets.remove(best));
        }

        let mut gt_boxes: Vec<(usize, BBox, bool)> = Vec::new();
        for (frame, objs) in gt.iter() {
            for o in objs {
                if &o.class_label == class {
                    gt_boxes.push((frame, o.bbox, false));
                }
            }
        }
        let total = gt_boxes.len();
        let mut flags = Vec::new();
        for (_, frame, _, bbox) in &sorted {
            let mut pick: Option<usize> = None;
            let mut pick_iou = 0.0;
            for (g, (gf, gb, used)) in gt_boxes.iter().enumerate() {
                if gf != frame || *used {
                    continue;
                }
                let v = corner_iou(bbox, gb);
                if v >= thr && (pick.is_none() || v > pick_iou) {
                    pick = Some(g);
                    pick_iou = v;
                }
            }
            if let Some(g) = pick {
                gt_boxes[g].2 = true;
            }
            flags.push(pick.is_some());
        }
        aps.push(brute_ap(&flags, total));
    }
    let map = if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    };
    (classes, aps, map)
}

const LABELS: [&str; 3] = ["car", "cyclist", "pedestrian"];

fn grid_box(rng: &mut impl Rng) -> BBox {
    BBox {
        x: rng.random_range(0..6) as f64 * 2.0,
        y: rng.random_range(0..6) as f64 * 2.0,
        w: rng.random_range(1..5) as f64 * 2.0,
        h: rng.random_range(1..5) as f64 * 2.0,
    }
}

/// A random evaluation instance: up to 5 frames, up to 4 boxes per frame,
/// up to 3 classes, small integer grid so overlaps and ties are common.
pub fn micro_instance(rng: &mut impl Rng) -> (Vec<FrameResult>, GroundTruthSet) {
    let frames = rng.random_range(1..=5);
    let n_classes = rng.random_range(1..=3);
    let mut gt = GroundTruthSet::new();
    let mut results = Vec::new();
    for f in 0..frames {
        for _ in 0..rng.random_range(0..=4) {
            let label = LABELS[rng.random_range(0..n_classes)];
            gt.insert(f, grid_box(rng), label).unwrap();
        }
        let detections: Vec<Detection> = (0..rng.random_range(0..=4))
            .map(|_| {
                let bbox = match gt.frame(f) {
                    objs if !objs.is_empty() && rng.random_bool(0.6) => {
                        let o = &objs[rng.random_range(0..objs.len())];
                        let mut b = o.bbox;
                        b.x += rng.random_range(-1..=1) as f64 * 2.0;
                        b
                    }
                    _ => grid_box(rng),
                };
                Detection {
                    bbox,
                    class_label: LABELS[rng.random_range(0..n_classes)].to_string(),
                    confidence: rng.random_range(1..=4) as f64 / 4.0,
                }
            })
            .collect();
        results.push(FrameResult {
            index: f,
            status: FrameStatus::Processed,
            detections,
            source_index: Some(f),
            worker_id: Some(0),
            completion_ts: Some(f as f64),
        });
    }
    (results, gt)
}
