//! Frame-to-worker assignment.
//!
//! Every frame gets exactly one [`DispatchDecision`]. Round robin, weighted
//! round robin and the performance-aware proportional policy pick a target
//! worker from a fixed or weighted cyclic order and drop the frame if that
//! worker is busy; FCFS picks the lowest-id worker that is idle.
//!
//! Whether a "busy" decision drops the frame or makes the feeder wait is up
//! to the caller: a paced pipeline drops, a saturation feeder advances time
//! to [`Scheduler::ready_time`] before dispatching.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};
use crate::stream::{Frame, TIME_EPS};

/// Default proportional recompute window, in dispatched frames.
pub const DEFAULT_WINDOW_FRAMES: usize = 10;
/// Default EWMA smoothing factor for observed latencies.
pub const DEFAULT_EWMA_ALPHA: f64 = 0.3;
/// Number of recent service times kept per worker.
pub const LATENCY_RING_CAPACITY: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum SchedulePolicy {
    RoundRobin,
    /// Static per-worker weights, interleaved by smooth weighted round robin.
    WeightedRoundRobin {
        weights: Vec<f64>,
    },
    Fcfs,
    /// Weights recomputed every `window_frames` dispatches from the inverse
    /// EWMA of observed service times.
    Proportional {
        window_frames: usize,
        ewma_alpha: f64,
    },
}

impl SchedulePolicy {
    pub fn proportional() -> Self {
        SchedulePolicy::Proportional {
            window_frames: DEFAULT_WINDOW_FRAMES,
            ewma_alpha: DEFAULT_EWMA_ALPHA,
        }
    }

    /// Config-file name of the policy.
    pub fn key(&self) -> &'static str {
        match self {
            SchedulePolicy::RoundRobin => "rr",
            SchedulePolicy::WeightedRoundRobin { .. } => "wrr",
            SchedulePolicy::Fcfs => "fcfs",
            SchedulePolicy::Proportional { .. } => "proportional",
        }
    }

    pub fn validate(&self, n_workers: usize) -> Result<()> {
        if n_workers == 0 {
            return Err(Error::Config("scheduler needs at least one worker".into()));
        }
        match self {
            SchedulePolicy::WeightedRoundRobin { weights } => {
                if weights.len() != n_workers {
                    return Err(Error::Config(format!(
                        "weighted round robin has {} weights for {n_workers} workers",
                        weights.len()
                    )));
                }
                if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
                    return Err(Error::Config(format!(
                        "weighted round robin weights must be positive, got {w}"
                    )));
                }
            }
            SchedulePolicy::Proportional {
                window_frames,
                ewma_alpha,
            } => {
                if *window_frames == 0 {
                    return Err(Error::Config("proportional window must be >= 1".into()));
                }
                if !(*ewma_alpha > 0.0 && *ewma_alpha <= 1.0) {
                    return Err(Error::Config(format!(
                        "proportional ewma_alpha must lie in (0, 1], got {ewma_alpha}"
                    )));
                }
            }
            SchedulePolicy::RoundRobin | SchedulePolicy::Fcfs => {}
        }
        Ok(())
    }
}

impl fmt::Display for SchedulePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatchDecision {
    Assign(usize),
    Drop,
}

/// What the dispatcher knows about one worker.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerView {
    pub busy_until: f64,
    /// Recent service times, oldest first.
    pub observed_latencies: VecDeque<f64>,
    pub dynamic_weight: f64,
    fresh_observations: usize,
}

impl WorkerView {
    pub fn new(dynamic_weight: f64) -> Self {
        WorkerView {
            busy_until: 0.0,
            observed_latencies: VecDeque::with_capacity(LATENCY_RING_CAPACITY),
            dynamic_weight,
            fresh_observations: 0,
        }
    }

    pub fn is_idle_at(&self, t: f64) -> bool {
        self.busy_until <= t + TIME_EPS
    }

    pub fn record_latency(&mut self, service_time: f64) {
        if self.observed_latencies.len() == LATENCY_RING_CAPACITY {
            self.observed_latencies.pop_front();
        }
        self.observed_latencies.push_back(service_time);
        self.fresh_observations += 1;
    }

    /// EWMA over the ring, seeded with the oldest sample.
    pub fn ewma_latency(&self, alpha: f64) -> Option<f64> {
        let mut it = self.observed_latencies.iter();
        let first = *it.next()?;
        Some(it.fold(first, |acc, &x| alpha * x + (1.0 - alpha) * acc))
    }

    /// Observations recorded since the last weight recompute.
    pub fn fresh_observations(&self) -> usize {
        self.fresh_observations
    }
}

/// Recomputes proportional weights: `weight_i ∝ 1 / ewma_latency_i`.
///
/// A worker that has never been observed contributes its previous weight
/// before normalization. If nothing was observed since the last recompute
/// the weights are left untouched.
pub fn recompute_weights(views: &mut [WorkerView], ewma_alpha: f64) {
    if views.iter().all(|v| v.fresh_observations == 0) {
        return;
    }
    let raw: Vec<f64> = views
        .iter()
        .map(|v| match v.ewma_latency(ewma_alpha) {
            Some(l) if l > 0.0 => 1.0 / l,
            _ => v.dynamic_weight,
        })
        .collect();
    let total: f64 = raw.iter().sum();
    for (v, r) in views.iter_mut().zip(raw) {
        if total > 0.0 {
            v.dynamic_weight = r / total;
        }
        v.fresh_observations = 0;
    }
}

/// Stateful dispatcher for one pipeline run.
#[derive(Debug, Clone)]
pub struct Scheduler {
    policy: SchedulePolicy,
    n_workers: usize,
    // smooth weighted round robin running scores
    current: Vec<f64>,
    dispatched: u64,
}

impl Scheduler {
    pub fn new(policy: SchedulePolicy, n_workers: usize) -> Result<Self> {
        policy.validate(n_workers)?;
        Ok(Scheduler {
            policy,
            n_workers,
            current: vec![0.0; n_workers],
            dispatched: 0,
        })
    }

    pub fn policy(&self) -> &SchedulePolicy {
        &self.policy
    }

    pub fn workers(&self) -> usize {
        self.n_workers
    }

    /// Fresh views, all idle at time zero with equal dynamic weights.
    pub fn initial_views(&self) -> Vec<WorkerView> {
        vec![WorkerView::new(1.0 / self.n_workers as f64); self.n_workers]
    }

    fn weights<'a>(&'a self, views: &'a [WorkerView]) -> Option<Vec<f64>> {
        match &self.policy {
            SchedulePolicy::WeightedRoundRobin { weights } => Some(weights.clone()),
            SchedulePolicy::Proportional { .. } => {
                Some(views.iter().map(|v| v.dynamic_weight).collect())
            }
            _ => None,
        }
    }

    fn smooth_pick(&self, weights: &[f64]) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, (c, w)) in self.current.iter().zip(weights).enumerate() {
            let score = c + w;
            if score > best_score {
                best = i;
                best_score = score;
            }
        }
        best
    }

    fn smooth_commit(&mut self, weights: &[f64], pick: usize) {
        let total: f64 = weights.iter().sum();
        for (c, w) in self.current.iter_mut().zip(weights) {
            *c += w;
        }
        self.current[pick] -= total;
    }

    /// The worker the next decision will target, or `None` for FCFS.
    pub fn target(&self, frame: &Frame, views: &[WorkerView]) -> Option<usize> {
        match &self.policy {
            SchedulePolicy::RoundRobin => Some(frame.index % self.n_workers),
            SchedulePolicy::Fcfs => None,
            _ => {
                let weights = self.weights(views).expect("weighted policy");
                Some(self.smooth_pick(&weights))
            }
        }
    }

    /// Earliest time at which the next decision could be an assignment.
    pub fn ready_time(&self, frame: &Frame, views: &[WorkerView]) -> f64 {
        match self.target(frame, views) {
            Some(t) => views[t].busy_until,
            None => views
                .iter()
                .map(|v| v.busy_until)
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Decides what happens to `frame` at time `now`.
    pub fn dispatch(
        &mut self,
        frame: &Frame,
        views: &mut [WorkerView],
        now: f64,
    ) -> DispatchDecision {
        debug_assert_eq!(views.len(), self.n_workers);
        debug_assert!(now + TIME_EPS >= frame.arrival_ts);

        let decision = match &self.policy {
            SchedulePolicy::RoundRobin => {
                let target = frame.index % self.n_workers;
                assign_if_idle(views, target, now)
            }
            SchedulePolicy::Fcfs => views
                .iter()
                .position(|v| v.is_idle_at(now))
                .map_or(DispatchDecision::Drop, DispatchDecision::Assign),
            SchedulePolicy::WeightedRoundRobin { .. } | SchedulePolicy::Proportional { .. } => {
                let weights = self.weights(views).expect("weighted policy");
                let target = self.smooth_pick(&weights);
                self.smooth_commit(&weights, target);
                assign_if_idle(views, target, now)
            }
        };

        self.dispatched += 1;
        if let SchedulePolicy::Proportional {
            window_frames,
            ewma_alpha,
        } = self.policy
        {
            if self.dispatched.is_multiple_of(window_frames as u64) {
                recompute_weights(views, ewma_alpha);
            }
        }
        decision
    }
}

fn assign_if_idle(views: &[WorkerView], target: usize, now: f64) -> DispatchDecision {
    if views[target].is_idle_at(now) {
        DispatchDecision::Assign(target)
    } else {
        DispatchDecision::Drop
    }
}
