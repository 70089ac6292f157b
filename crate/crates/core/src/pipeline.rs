//! Single-threaded discrete-event engine in virtual time.
//!
//! Paced runs present frame `k` to the scheduler at `k / λ`; a refusal is a
//! drop. Saturation runs hold each frame until the scheduler's target can
//! take it, so nothing is dropped and the measured rate is the pipeline's
//! capacity. Under FCFS a paced run keeps one waiting slot: a frame that
//! finds every worker busy waits for the first one to free, and a newer
//! arrival evicts (drops) the waiter.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::detector::{simulate_process, Detection, ReplayStore, Worker, WorkerProfile};
use crate::error::{Error, Result};
use crate::eval::CompletionEvent;
use crate::scheduler::{DispatchDecision, SchedulePolicy, Scheduler, WorkerView};
use crate::stream::{emit_schedule, Clock, FeedMode, Frame, StreamConfig, TIME_EPS};
use crate::synchronizer::{FrameResult, ProcessedResult, SequenceSynchronizer, SyncEvent};

/// Everything observed during one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// One result per frame, in index order.
    pub results: Vec<FrameResult>,
    /// Processed frames in completion order.
    pub completions: Vec<CompletionEvent>,
    /// Seconds each worker spent serving frames.
    pub busy_time: Vec<f64>,
    pub sync_high_water: usize,
    /// Wall time spent inside the synchronizer. Not part of any reported rate.
    pub sync_overhead: Duration,
}

impl RunOutput {
    /// `(first dispatch, last completion)`, or `None` with nothing processed.
    pub fn span(&self) -> Option<(f64, f64)> {
        if self.completions.is_empty() {
            return None;
        }
        let start = self
            .completions
            .iter()
            .map(|c| c.dispatch_ts)
            .fold(f64::INFINITY, f64::min);
        let end = self
            .completions
            .iter()
            .map(|c| c.completion_ts)
            .fold(f64::NEG_INFINITY, f64::max);
        Some((start, end))
    }

    /// Busy fraction of the processing span per worker, in `[0, 1]`.
    pub fn utilization(&self) -> Vec<f64> {
        let span = self.span().map_or(0.0, |(a, b)| b - a);
        self.busy_time
            .iter()
            .map(|&busy| {
                if span > 0.0 {
                    (busy / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Builds one [`Worker`] per profile, sharing `store`.
pub fn build_workers(
    profiles: &[WorkerProfile],
    seed: u64,
    store: Option<Arc<ReplayStore>>,
) -> Result<Vec<Worker>> {
    if profiles.is_empty() {
        return Err(Error::Config("at least one worker is required".into()));
    }
    profiles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.worker_id != i {
                return Err(Error::Config(format!(
                    "worker ids must be 0..n in order, found {} at position {i}",
                    p.worker_id
                )));
            }
            Worker::new(p.clone(), seed, store.clone())
        })
        .collect()
}

struct Pending {
    completion_ts: f64,
    index: usize,
    worker_id: usize,
    service_time: f64,
    detections: Vec<Detection>,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// reversed so the max-heap pops the earliest completion first
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .completion_ts
            .total_cmp(&self.completion_ts)
            .then_with(|| other.index.cmp(&self.index))
    }
}

struct Engine {
    clock: Clock,
    scheduler: Scheduler,
    views: Vec<WorkerView>,
    workers: Vec<Worker>,
    in_flight: BinaryHeap<Pending>,
    sync: SequenceSynchronizer,
    sync_overhead: Duration,
    results: Vec<FrameResult>,
    completions: Vec<CompletionEvent>,
    busy_time: Vec<f64>,
}

impl Engine {
    fn now(&self) -> f64 {
        self.clock.now()
    }

    fn push_sync(&mut self, event: SyncEvent) -> Result<()> {
        let t0 = Instant::now();
        self.sync.submit(event)?;
        let ready = self.sync.drain_ready();
        self.sync_overhead += t0.elapsed();
        self.results.extend(ready);
        Ok(())
    }

    /// Retires every completion at or before the current time.
    fn retire_until_now(&mut self) -> Result<()> {
        let now = self.now();
        while self
            .in_flight
            .peek()
            .is_some_and(|p| p.completion_ts <= now + TIME_EPS)
        {
            let p = self.in_flight.pop().expect("peeked");
            self.views[p.worker_id].record_latency(p.service_time);
            self.push_sync(SyncEvent::Processed(ProcessedResult {
                index: p.index,
                worker_id: p.worker_id,
                completion_ts: p.completion_ts,
                detections: p.detections,
            }))?;
        }
        Ok(())
    }

    fn start(&mut self, frame: &Frame, worker_id: usize) {
        let now = self.now();
        let outcome = simulate_process(&mut self.workers[worker_id], frame, now);
        self.views[worker_id].busy_until = outcome.completion_ts;
        self.busy_time[worker_id] += outcome.service_time;
        self.completions.push(CompletionEvent {
            frame_index: frame.index,
            worker_id,
            dispatch_ts: now,
            completion_ts: outcome.completion_ts,
        });
        self.in_flight.push(Pending {
            completion_ts: outcome.completion_ts,
            index: frame.index,
            worker_id,
            service_time: outcome.service_time,
            detections: outcome.detections,
        });
    }

    fn decide(&mut self, frame: &Frame) -> DispatchDecision {
        let now = self.now();
        self.scheduler.dispatch(frame, &mut self.views, now)
    }

    fn earliest_free(&self) -> f64 {
        self.views
            .iter()
            .map(|v| v.busy_until)
            .fold(f64::INFINITY, f64::min)
    }

    fn run_paced(&mut self, frames: &[Frame]) -> Result<()> {
        let fcfs = matches!(self.scheduler.policy(), SchedulePolicy::Fcfs);
        let mut waiter: Option<Frame> = None;
        for frame in frames {
            if let Some(w) = waiter {
                let free = self.earliest_free();
                if free <= frame.arrival_ts + TIME_EPS {
                    self.clock.advance_to(free.max(w.arrival_ts));
                    self.retire_until_now()?;
                    self.dispatch_or_fail(&w)?;
                    waiter = None;
                }
            }
            self.clock.advance_to(frame.arrival_ts);
            self.retire_until_now()?;
            match self.decide(frame) {
                DispatchDecision::Assign(w) => self.start(frame, w),
                DispatchDecision::Drop if fcfs => {
                    if let Some(old) = waiter.replace(*frame) {
                        self.push_sync(SyncEvent::Dropped(old.index))?;
                    }
                }
                DispatchDecision::Drop => self.push_sync(SyncEvent::Dropped(frame.index))?,
            }
        }
        if let Some(w) = waiter {
            let free = self.earliest_free();
            self.clock.advance_to(free.max(w.arrival_ts));
            self.retire_until_now()?;
            self.dispatch_or_fail(&w)?;
        }
        Ok(())
    }

    fn run_saturation(&mut self, frames: &[Frame]) -> Result<()> {
        for frame in frames {
            let ready = self.scheduler.ready_time(frame, &self.views);
            let now = self.now();
            self.clock.advance_to(ready.max(now).max(frame.arrival_ts));
            self.retire_until_now()?;
            self.dispatch_or_fail(frame)?;
        }
        Ok(())
    }

    fn dispatch_or_fail(&mut self, frame: &Frame) -> Result<()> {
        match self.decide(frame) {
            DispatchDecision::Assign(w) => {
                self.start(frame, w);
                Ok(())
            }
            DispatchDecision::Drop => Err(Error::Protocol(format!(
                "frame {} refused at its ready time {}",
                frame.index,
                self.now()
            ))),
        }
    }

    fn finish(mut self) -> Result<RunOutput> {
        while let Some(p) = self.in_flight.peek() {
            let t = p.completion_ts;
            self.clock.advance_to(t);
            self.retire_until_now()?;
        }
        if self.sync.buffered() != 0 {
            return Err(Error::Protocol(format!(
                "{} results left in the synchronizer",
                self.sync.buffered()
            )));
        }
        Ok(RunOutput {
            results: self.results,
            completions: self.completions,
            busy_time: self.busy_time,
            sync_high_water: self.sync.high_water(),
            sync_overhead: self.sync_overhead,
        })
    }
}

/// Runs the whole stream through the workers in virtual time.
///
/// Deterministic for a fixed `seed`.
pub fn simulate(
    stream: &StreamConfig,
    profiles: &[WorkerProfile],
    policy: &SchedulePolicy,
    seed: u64,
    store: Option<Arc<ReplayStore>>,
) -> Result<RunOutput> {
    let frames = emit_schedule(stream)?;
    let workers = build_workers(profiles, seed, store)?;
    let scheduler = Scheduler::new(policy.clone(), workers.len())?;
    let n = workers.len();
    let mut engine = Engine {
        clock: Clock::virtual_time(),
        views: scheduler.initial_views(),
        scheduler,
        workers,
        in_flight: BinaryHeap::new(),
        sync: SequenceSynchronizer::new(),
        sync_overhead: Duration::ZERO,
        results: Vec::with_capacity(frames.len()),
        completions: Vec::new(),
        busy_time: vec![0.0; n],
    };
    match stream.mode {
        FeedMode::Paced => engine.run_paced(&frames)?,
        FeedMode::Saturation => engine.run_saturation(&frames)?,
    }
    engine.finish()
}
