//! Incoming frame stream.
//!
//! A stream is an immutable schedule of [`Frame`]s. In [`FeedMode::Paced`]
//! frame `k` arrives at `k / λ` seconds (the online workflow); in
//! [`FeedMode::Saturation`] every frame is available at time zero and the
//! feeder hands them out as fast as workers accept them (the offline,
//! capacity-measuring workflow).

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};

/// Tolerance for comparing timestamps, in seconds.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeedMode {
    Paced,
    Saturation,
}

impl FeedMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedMode::Paced => "paced",
            FeedMode::Saturation => "saturation",
        }
    }
}

impl fmt::Display for FeedMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeedMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paced" => Ok(FeedMode::Paced),
            "saturation" => Ok(FeedMode::Saturation),
            other => Err(Error::Config(format!(
                "unknown feed mode `{other}` (expected `paced` or `saturation`)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    /// Incoming frame rate λ.
    pub lambda_fps: f64,
    pub total_frames: usize,
    pub mode: FeedMode,
    /// Simulated per-frame payload, used only for transfer delay.
    pub payload_bytes: u64,
}

impl StreamConfig {
    pub fn new(lambda_fps: f64, total_frames: usize, mode: FeedMode) -> Result<Self> {
        let config = StreamConfig {
            lambda_fps,
            total_frames,
            mode,
            payload_bytes: 0,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_payload(mut self, payload_bytes: u64) -> Self {
        self.payload_bytes = payload_bytes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_fps.is_finite() && self.lambda_fps > 0.0) {
            return Err(Error::Config(format!(
                "lambda_fps must be a positive number, got {}",
                self.lambda_fps
            )));
        }
        if self.total_frames == 0 {
            return Err(Error::Config("total_frames must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub index: usize,
    /// Arrival time in seconds from the stream origin.
    pub arrival_ts: f64,
    pub payload_bytes: u64,
}

/// Builds the full arrival schedule for `config`.
pub fn emit_schedule(config: &StreamConfig) -> Result<Vec<Frame>> {
    config.validate()?;
    let frames = (0..config.total_frames)
        .map(|index| Frame {
            index,
            arrival_ts: match config.mode {
                FeedMode::Paced => index as f64 / config.lambda_fps,
                FeedMode::Saturation => 0.0,
            },
            payload_bytes: config.payload_bytes,
        })
        .collect();
    Ok(frames)
}

/// Which clock drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ClockMode {
    #[default]
    Virtual,
    Wall,
}

impl ClockMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ClockMode::Virtual => "virtual",
            ClockMode::Wall => "wall",
        }
    }
}

impl FromStr for ClockMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "virtual" => Ok(ClockMode::Virtual),
            "wall" => Ok(ClockMode::Wall),
            other => Err(Error::Config(format!(
                "unknown clock `{other}` (expected `virtual` or `wall`)"
            ))),
        }
    }
}

/// Source of "now" for a pipeline run.
///
/// A virtual clock only moves when the event loop advances it; a wall
/// clock reports seconds elapsed since it was started.
#[derive(Debug, Clone)]
pub enum Clock {
    Virtual { now: f64 },
    Wall { origin: Instant },
}

impl Clock {
    pub fn virtual_time() -> Self {
        Clock::Virtual { now: 0.0 }
    }

    pub fn wall() -> Self {
        Clock::Wall {
            origin: Instant::now(),
        }
    }

    pub fn now(&self) -> f64 {
        match self {
            Clock::Virtual { now } => *now,
            Clock::Wall { origin } => origin.elapsed().as_secs_f64(),
        }
    }

    /// Moves a virtual clock forward to `t`. Never moves backwards; a
    /// wall clock ignores the request.
    pub fn advance_to(&mut self, t: f64) {
        if let Clock::Virtual { now } = self {
            debug_assert!(t + TIME_EPS >= *now, "virtual clock moved backwards");
            if t > *now {
                *now = t;
            }
        }
    }
}
