//! Detection executors.
//!
//! A worker models one accelerator stick, CPU or GPU running a detection
//! model. Processing a frame costs a serialized transfer delay followed by
//! an inference latency drawn from the worker's [`LatencyModel`]. The
//! detections it "produces" are replayed from a [`ReplayStore`] rather
//! than computed, which keeps the simulator hardware-free.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::stream::Frame;

/// Axis-aligned box in pixels: top-left corner plus width and height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BBox { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x, self.y, self.w, self.h]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::Input(format!(
                "degenerate box (x={}, y={}, w={}, h={})",
                self.x, self.y, self.w, self.h
            )));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub class_label: String,
    /// Score in `[0, 1]`.
    pub confidence: f64,
}

impl Detection {
    pub fn new(bbox: BBox, class_label: impl Into<String>, confidence: f64) -> Result<Self> {
        bbox.validate()?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Input(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Detection {
            bbox,
            class_label: class_label.into(),
            confidence,
        })
    }
}

/// Per-frame detections standing in for a pre-trained model's outputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayStore {
    frames: BTreeMap<usize, Vec<Detection>>,
}

impl ReplayStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, index: usize, detection: Detection) {
        self.frames.entry(index).or_default().push(detection);
    }

    pub fn set_frame(&mut self, index: usize, detections: Vec<Detection>) {
        self.frames.insert(index, detections);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[Detection])> {
        self.frames.iter().map(|(k, v)| (*k, v.as_slice()))
    }
}

impl FromIterator<(usize, Vec<Detection>)> for ReplayStore {
    fn from_iter<I: IntoIterator<Item = (usize, Vec<Detection>)>>(iter: I) -> Self {
        ReplayStore {
            frames: iter.into_iter().collect(),
        }
    }
}

/// Detections stored for `index`, or an empty list.
pub fn replay_lookup(store: &ReplayStore, index: usize) -> &[Detection] {
    store.frames.get(&index).map(Vec::as_slice).unwrap_or(&[])
}

/// Distribution of per-frame inference latency. The mean is always
/// `1 / mu_fps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatencyModel {
    Deterministic,
    Exponential,
    /// Uniform on `[mean·(1 − spread), mean·(1 + spread)]`, `spread ∈ [0, 1)`.
    Uniform {
        spread: f64,
    },
}

impl LatencyModel {
    pub fn name(&self) -> &'static str {
        match self {
            LatencyModel::Deterministic => "deterministic",
            LatencyModel::Exponential => "exponential",
            LatencyModel::Uniform { .. } => "uniform",
        }
    }
}

/// Link bandwidth between the host and a worker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Unlimited,
    BitsPerSecond(f64),
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::Unlimited => f.write_str("unlimited"),
            Bandwidth::BitsPerSecond(bps) => write!(f, "{bps}"),
        }
    }
}

impl FromStr for Bandwidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "unlimited" {
            return Ok(Bandwidth::Unlimited);
        }
        let bps: f64 = s
            .parse()
            .map_err(|_| Error::Config(format!("invalid bandwidth `{s}`")))?;
        if !(bps.is_finite() && bps > 0.0) {
            return Err(Error::Config(format!(
                "bandwidth must be positive, got {s}"
            )));
        }
        Ok(Bandwidth::BitsPerSecond(bps))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerProfile {
    pub worker_id: usize,
    /// Nominal service rate μ_i in frames per second.
    pub mu_fps: f64,
    pub latency_model: LatencyModel,
    pub bandwidth: Bandwidth,
    /// Thermal design power, if known.
    pub tdp_watts: Option<f64>,
}

impl WorkerProfile {
    /// A deterministic worker with unlimited bandwidth.
    pub fn deterministic(worker_id: usize, mu_fps: f64) -> Self {
        WorkerProfile {
            worker_id,
            mu_fps,
            latency_model: LatencyModel::Deterministic,
            bandwidth: Bandwidth::Unlimited,
            tdp_watts: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_fps.is_finite() && self.mu_fps > 0.0) {
            return Err(Error::Config(format!(
                "worker {}: mu_fps must be positive, got {}",
                self.worker_id, self.mu_fps
            )));
        }
        if let LatencyModel::Uniform { spread } = self.latency_model {
            if !(0.0..1.0).contains(&spread) {
                return Err(Error::Config(format!(
                    "worker {}: uniform spread must lie in [0, 1), got {spread}",
                    self.worker_id
                )));
            }
        }
        if let Bandwidth::BitsPerSecond(bps) = self.bandwidth {
            if !(bps.is_finite() && bps > 0.0) {
                return Err(Error::Config(format!(
                    "worker {}: bandwidth must be positive",
                    self.worker_id
                )));
            }
        }
        if let Some(tdp) = self.tdp_watts {
            if !(tdp.is_finite() && tdp > 0.0) {
                return Err(Error::Config(format!(
                    "worker {}: tdp_watts must be positive",
                    self.worker_id
                )));
            }
        }
        Ok(())
    }

    pub fn mean_latency(&self) -> f64 {
        1.0 / self.mu_fps
    }

    /// Seconds needed to ship `payload_bytes` to the worker.
    pub fn transfer_delay(&self, payload_bytes: u64) -> f64 {
        match self.bandwidth {
            Bandwidth::Unlimited => 0.0,
            Bandwidth::BitsPerSecond(bps) => payload_bytes as f64 * 8.0 / bps,
        }
    }
}

/// Result of running one frame through a worker.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceOutcome {
    pub completion_ts: f64,
    /// Transfer delay plus inference latency.
    pub service_time: f64,
    pub detections: Vec<Detection>,
}

/// A worker's runtime state: its profile, a private RNG stream and the
/// replay store its detections come from.
#[derive(Debug, Clone)]
pub struct Worker {
    profile: WorkerProfile,
    rng: ChaCha8Rng,
    store: Option<Arc<ReplayStore>>,
}

impl Worker {
    /// The RNG stream is seeded with `global_seed + worker_id`.
    pub fn new(
        profile: WorkerProfile,
        global_seed: u64,
        store: Option<Arc<ReplayStore>>,
    ) -> Result<Self> {
        profile.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(global_seed.wrapping_add(profile.worker_id as u64));
        Ok(Worker {
            profile,
            rng,
            store,
        })
    }

    pub fn profile(&self) -> &WorkerProfile {
        &self.profile
    }

    pub fn id(&self) -> usize {
        self.profile.worker_id
    }

    /// Draws the next inference latency.
    pub fn draw_latency(&mut self) -> f64 {
        let mean = self.profile.mean_latency();
        match self.profile.latency_model {
            LatencyModel::Deterministic => mean,
            LatencyModel::Exponential => {
                // mu_fps is validated positive, so the rate is always valid.
                Exp::new(self.profile.mu_fps)
                    .expect("positive rate")
                    .sample(&mut self.rng)
            }
            LatencyModel::Uniform { spread } => {
                let u: f64 = self.rng.random();
                mean * (1.0 - spread + 2.0 * spread * u)
            }
        }
    }
}

/// Runs `frame` on `worker` starting at `start_ts`.
pub fn simulate_process(worker: &mut Worker, frame: &Frame, start_ts: f64) -> ServiceOutcome {
    debug_assert!(start_ts + crate::stream::TIME_EPS >= frame.arrival_ts);
    let transfer = worker.profile.transfer_delay(frame.payload_bytes);
    let inference = worker.draw_latency();
    let service_time = transfer + inference;
    let detections = worker
        .store
        .as_deref()
        .map(|s| replay_lookup(s, frame.index).to_vec())
        .unwrap_or_default();
    ServiceOutcome {
        completion_ts: start_ts + service_time,
        service_time,
        detections,
    }
}
