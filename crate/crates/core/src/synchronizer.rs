//! Sequence synchronizer.
//!
//! Workers finish frames out of order and the scheduler drops some frames
//! outright. The synchronizer buffers both kinds of events and emits one
//! [`FrameResult`] per frame in strict index order. A dropped frame is
//! filled with the detections of the latest processed frame before it,
//! resolved when the dropped frame is emitted.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::detector::Detection;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameStatus {
    Processed,
    /// Dropped, detections reused from an earlier processed frame.
    Filled,
    /// Dropped with no processed frame before it.
    FilledEmpty,
}

impl FrameStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameStatus::Processed => "processed",
            FrameStatus::Filled => "filled",
            FrameStatus::FilledEmpty => "filled_empty",
        }
    }
}

impl fmt::Display for FrameStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FrameStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "processed" => Ok(FrameStatus::Processed),
            "filled" => Ok(FrameStatus::Filled),
            "filled_empty" => Ok(FrameStatus::FilledEmpty),
            other => Err(Error::Input(format!("unknown frame status `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub index: usize,
    pub status: FrameStatus,
    pub detections: Vec<Detection>,
    /// Frame whose detections these are; `None` for `FilledEmpty`.
    pub source_index: Option<usize>,
    pub worker_id: Option<usize>,
    /// Set for processed frames only.
    pub completion_ts: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedResult {
    pub index: usize,
    pub worker_id: usize,
    pub completion_ts: f64,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SyncEvent {
    Processed(ProcessedResult),
    Dropped(usize),
}

impl SyncEvent {
    pub fn index(&self) -> usize {
        match self {
            SyncEvent::Processed(p) => p.index,
            SyncEvent::Dropped(i) => *i,
        }
    }
}

/// Reorder buffer over processed and dropped frames.
#[derive(Debug, Default)]
pub struct SequenceSynchronizer {
    next: usize,
    pending: BTreeMap<usize, SyncEvent>,
    latest: Option<(usize, Vec<Detection>)>,
    high_water: usize,
}

impl SequenceSynchronizer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts emission at `index` instead of 0.
    pub fn starting_at(index: usize) -> Self {
        SequenceSynchronizer {
            next: index,
            ..Self::default()
        }
    }

    /// Buffers an event. Each frame index may be submitted once.
    pub fn submit(&mut self, event: SyncEvent) -> Result<()> {
        let index = event.index();
        if index < self.next || self.pending.contains_key(&index) {
            return Err(Error::Protocol(format!(
                "frame {index} submitted more than once"
            )));
        }
        self.pending.insert(index, event);
        self.high_water = self.high_water.max(self.pending.len());
        Ok(())
    }

    /// Emits the longest contiguous run of buffered frames starting at the
    /// next expected index.
    pub fn drain_ready(&mut self) -> Vec<FrameResult> {
        let mut out = Vec::new();
        while let Some(event) = self.pending.remove(&self.next) {
            out.push(self.resolve(event));
            self.next += 1;
        }
        out
    }

    fn resolve(&mut self, event: SyncEvent) -> FrameResult {
        match event {
            SyncEvent::Processed(p) => {
                self.latest = Some((p.index, p.detections.clone()));
                FrameResult {
                    index: p.index,
                    status: FrameStatus::Processed,
                    detections: p.detections,
                    source_index: Some(p.index),
                    worker_id: Some(p.worker_id),
                    completion_ts: Some(p.completion_ts),
                }
            }
            SyncEvent::Dropped(index) => match &self.latest {
                Some((source, detections)) => FrameResult {
                    index,
                    status: FrameStatus::Filled,
                    detections: detections.clone(),
                    source_index: Some(*source),
                    worker_id: None,
                    completion_ts: None,
                },
                None => FrameResult {
                    index,
                    status: FrameStatus::FilledEmpty,
                    detections: Vec::new(),
                    source_index: None,
                    worker_id: None,
                    completion_ts: None,
                },
            },
        }
    }

    /// Next index to be emitted.
    pub fn next_index(&self) -> usize {
        self.next
    }

    pub fn buffered(&self) -> usize {
        self.pending.len()
    }

    /// Largest number of events ever held at once.
    pub fn high_water(&self) -> usize {
        self.high_water
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::BBox;

    fn processed(index: usize) -> SyncEvent {
        let det = Detection::new(
            BBox::new(index as f64, 0.0, 5.0, 5.0).unwrap(),
            "pedestrian",
            1.0,
        )
        .unwrap();
        SyncEvent::Processed(ProcessedResult {
            index,
            worker_id: index % 2,
            completion_ts: index as f64,
            detections: vec![det],
        })
    }

    fn indices(results: &[FrameResult]) -> Vec<usize> {
        results.iter().map(|r| r.index).collect()
    }

    #[test]
    fn holds_until_predecessors_arrive() {
        let mut sync = SequenceSynchronizer::new();
        sync.submit(processed(3)).unwrap();
        sync.submit(processed(1)).unwrap();
        sync.submit(processed(2)).unwrap();
        assert!(sync.drain_ready().is_empty());
        sync.submit(processed(0)).unwrap();
        assert_eq!(indices(&sync.drain_ready()), vec![0, 1, 2, 3]);
    }

    #[test]
    fn out_of_order_block_is_sorted() {
        let mut sync = SequenceSynchronizer::starting_at(1);
        for i in [3, 1, 2] {
            sync.submit(processed(i)).unwrap();
        }
        assert_eq!(indices(&sync.drain_ready()), vec![1, 2, 3]);
    }

    #[test]
    fn drop_is_filled_from_latest_processed() {
        let mut sync = SequenceSynchronizer::new();
        sync.submit(processed(0)).unwrap();
        sync.submit(processed(1)).unwrap();
        sync.submit(SyncEvent::Dropped(2)).unwrap();
        let out = sync.drain_ready();
        assert_eq!(out[2].status, FrameStatus::Filled);
        assert_eq!(out[2].source_index, Some(1));
        assert_eq!(out[2].detections, out[1].detections);
        assert_eq!(out[2].worker_id, None);
    }

    #[test]
    fn leading_drop_is_filled_empty() {
        let mut sync = SequenceSynchronizer::new();
        sync.submit(SyncEvent::Dropped(0)).unwrap();
        let out = sync.drain_ready();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].status, FrameStatus::FilledEmpty);
        assert!(out[0].detections.is_empty());
        assert_eq!(out[0].source_index, None);
    }

    #[test]
    fn stops_at_gap() {
        let mut sync = SequenceSynchronizer::new();
        sync.submit(processed(0)).unwrap();
        sync.submit(SyncEvent::Dropped(1)).unwrap();
        sync.submit(processed(3)).unwrap();
        let out = sync.drain_ready();
        assert_eq!(indices(&out), vec![0, 1]);
        assert_eq!(out[1].source_index, Some(0));
        assert_eq!(sync.next_index(), 2);
        assert_eq!(sync.buffered(), 1);
    }

    #[test]
    fn late_processed_frame_still_serves_as_fill_source() {
        // frame 1 completes after frame 2 was dropped; 2 must fill from 1.
        let mut sync = SequenceSynchronizer::new();
        sync.submit(processed(0)).unwrap();
        assert_eq!(sync.drain_ready().len(), 1);
        sync.submit(SyncEvent::Dropped(2)).unwrap();
        assert!(sync.drain_ready().is_empty());
        sync.submit(processed(1)).unwrap();
        let out = sync.drain_ready();
        assert_eq!(out[1].source_index, Some(1));
    }

    #[test]
    fn duplicate_index_is_protocol_error() {
        let mut sync = SequenceSynchronizer::new();
        sync.submit(processed(1)).unwrap();
        assert!(matches!(
            sync.submit(SyncEvent::Dropped(1)),
            Err(Error::Protocol(_))
        ));
        sync.submit(processed(0)).unwrap();
        sync.drain_ready();
        assert!(matches!(sync.submit(processed(0)), Err(Error::Protocol(_))));
    }

    #[test]
    fn full_length_run_is_complete() {
        let mut sync = SequenceSynchronizer::new();
        let mut out = Vec::new();
        for i in (0..354).rev() {
            let ev = if i % 3 == 0 {
                processed(i)
            } else {
                SyncEvent::Dropped(i)
            };
            sync.submit(ev).unwrap();
            out.extend(sync.drain_ready());
        }
        assert_eq!(out.len(), 354);
        assert_eq!(indices(&out), (0..354).collect::<Vec<_>>());
        assert_eq!(sync.high_water(), 354);
    }

    #[test]
    fn status_round_trips_through_text() {
        for s in [
            FrameStatus::Processed,
            FrameStatus::Filled,
            FrameStatus::FilledEmpty,
        ] {
            assert_eq!(s.as_str().parse::<FrameStatus>().unwrap(), s);
        }
        assert!("dropped".parse::<FrameStatus>().is_err());
    }
}
