use detsim::detector::{BBox, Detection};
use detsim::synchronizer::{
    FrameResult, FrameStatus, ProcessedResult, SequenceSynchronizer, SyncEvent,
};
use rand::seq::SliceRandom;
use rand::Rng;

/// Feeds a random schedule (random drops, random completion order) through
/// a synchronizer and checks the emitted sequence. Returns the number of
/// frames on success.
pub fn check_random_schedule(rng: &mut impl Rng) -> Result<usize, String> {
    let n = rng.random_range(1..=120);
    let drop_p: f64 = rng.random_range(0.0..0.9);
    let dropped: Vec<bool> = (0..n).map(|_| rng.random_bool(drop_p)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut sync = SequenceSynchronizer::new();
    let mut out: Vec<FrameResult> = Vec::new();
    for &i in &order {
        let event = if dropped[i] {
            SyncEvent::Dropped(i)
        } else {
            SyncEvent::Processed(ProcessedResult {
                index: i,
                worker_id: i % 3,
                completion_ts: i as f64,
                detections: vec![Detection {
                    bbox: BBox {
                        x: i as f64,
                        y: 0.0,
                        w: 1.0,
                        h: 1.0,
                    },
                    class_label: "pedestrian".into(),
                    confidence: 1.0,
                }],
            })
        };
        sync.submit(event).map_err(|e| e.to_string())?;
        out.extend(sync.drain_ready());
    }

    if out.len() != n {
        return Err(format!("emitted {} of {n}", out.len()));
    }
    for (pos, r) in out.iter().enumerate() {
        if r.index != pos {
            return Err(format!("position {pos} holds {}", r.index));
        }
        let latest = (0..pos).rev().find(|&j| !dropped[j]);
        match r.status {
            FrameStatus::Processed if dropped[pos] => return Err(format!("{pos} was dropped")),
            FrameStatus::Processed => {}
            FrameStatus::Filled => {
                if r.source_index != latest || latest.is_none() {
                    return Err(format!(
                        "{pos} filled from {:?}, expected {latest:?}",
                        r.source_index
                    ));
                }
                if r.detections[0].bbox.x != latest.unwrap() as f64 {
                    return Err(format!("{pos} carries the wrong detections"));
                }
            }
            FrameStatus::FilledEmpty => {
                if latest.is_some() || !r.detections.is_empty() {
                    return Err(format!("{pos} filled empty although {latest:?} exists"));
                }
            }
        }
        if r.status != FrameStatus::Processed && !dropped[pos] {
            return Err(format!("{pos} processed but emitted as {}", r.status));
        }
    }
    Ok(n)
}
