//! Input files: MOT-style annotation/detection CSVs and the experiment
//! configuration file.
//!
//! MOT lines have the layout `frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z`
//! with 1-based frame numbers; trailing fields from `conf` on may be
//! omitted. The config grammar is described in `docs/CONFIG.md`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::detector::{BBox, Bandwidth, Detection, LatencyModel, ReplayStore, WorkerProfile};
use crate::error::{Error, Result};
use crate::eval::GroundTruthSet;
use crate::scheduler::{SchedulePolicy, DEFAULT_EWMA_ALPHA, DEFAULT_WINDOW_FRAMES};
use crate::stream::{ClockMode, FeedMode, StreamConfig};

/// MOT-15 is single-class.
pub const DEFAULT_CLASS_LABEL: &str = "pedestrian";

/// One parsed MOT line.
#[derive(Debug, Clone, PartialEq)]
pub struct MotRecord {
    /// 0-based frame index.
    pub frame_index: usize,
    pub track_id: f64,
    pub bbox: BBox,
    /// Raw score; `None` when the field is `-1` or absent.
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MotAnnotations {
    pub records: Vec<MotRecord>,
}

impl MotAnnotations {
    pub fn frames_annotated(&self) -> usize {
        let mut frames: Vec<usize> = self.records.iter().map(|r| r.frame_index).collect();
        frames.sort_unstable();
        frames.dedup();
        frames.len()
    }

    pub fn ground_truth(&self, class_label: &str) -> GroundTruthSet {
        let mut gt = GroundTruthSet::new();
        for r in &self.records {
            gt.insert(r.frame_index, r.bbox, class_label)
                .expect("boxes validated at parse time");
        }
        gt
    }

    /// Replayable detections with scores scaled into `[0, 1]` by the
    /// largest positive score in the file. Records without a score get 1.0.
    pub fn replay_store(&self, class_label: &str) -> ReplayStore {
        let max_conf = self
            .records
            .iter()
            .filter_map(|r| r.confidence)
            .filter(|c| *c > 0.0)
            .fold(0.0f64, f64::max);
        let mut store = ReplayStore::new();
        for r in &self.records {
            let confidence = match r.confidence {
                None => 1.0,
                Some(c) if max_conf > 0.0 => (c / max_conf).clamp(0.0, 1.0),
                Some(_) => 0.0,
            };
            store.insert(
                r.frame_index,
                Detection {
                    bbox: r.bbox,
                    class_label: class_label.to_string(),
                    confidence,
                },
            );
        }
        store
    }
}

/// Parses MOT CSV text. `origin` names the source in error messages.
pub fn parse_mot(text: &str, origin: &str) -> Result<MotAnnotations> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            origin: origin.to_string(),
            line: line_no,
            msg,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(6..=10).contains(&fields.len()) {
            return Err(err(format!(
                "expected 6 to 10 comma-separated fields, found {}",
                fields.len()
            )));
        }
        let num = |idx: usize, name: &str| -> Result<f64> {
            fields[idx]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("invalid {name} `{}`", fields[idx])))
        };
        let frame: u64 = fields[0]
            .parse()
            .map_err(|_| err(format!("invalid frame number `{}`", fields[0])))?;
        if frame == 0 {
            return Err(err("frame numbers are 1-based".into()));
        }
        let track_id = num(1, "id")?;
        let (x, y, w, h) = (
            num(2, "bb_left")?,
            num(3, "bb_top")?,
            num(4, "bb_width")?,
            num(5, "bb_height")?,
        );
        if w <= 0.0 || h <= 0.0 {
            return Err(err(format!("non-positive box size {w}x{h}")));
        }
        let confidence = match fields.get(6) {
            None => None,
            Some(_) => {
                let c = num(6, "conf")?;
                (c != -1.0).then_some(c)
            }
        };
        records.push(MotRecord {
            frame_index: (frame - 1) as usize,
            track_id,
            bbox: BBox { x, y, w, h },
            confidence,
        });
    }
    Ok(MotAnnotations { records })
}

pub fn load_mot_annotations(path: impl AsRef<Path>) -> Result<MotAnnotations> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mot(&text, &path.display().to_string())
}

/// Writes ground truth as MOT lines; every box gets its own track id.
pub fn write_mot_ground_truth<W: Write>(mut out: W, gt: &GroundTruthSet) -> io::Result<()> {
    for (index, objects) in gt.iter() {
        for (id, o) in objects.iter().enumerate() {
            let b = o.bbox;
            writeln!(
                out,
                "{},{},{},{},{},{},1,-1,-1,-1",
                index + 1,
                id + 1,
                b.x,
                b.y,
                b.w,
                b.h
            )?;
        }
    }
    Ok(())
}

/// Full description of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub stream: StreamConfig,
    pub clock: ClockMode,
    pub workers: Vec<WorkerProfile>,
    pub scheduler: SchedulePolicy,
    pub ground_truth_path: Option<PathBuf>,
    pub detections_path: Option<PathBuf>,
    /// Generate a moving-box ground truth with this many objects when no
    /// ground-truth file is given.
    pub synthetic_objects: Option<usize>,
    pub seed: u64,
    pub output_path: PathBuf,
}

impl ExperimentConfig {
    /// A virtual-time config with `workers` and no ground truth.
    pub fn new(
        stream: StreamConfig,
        workers: Vec<WorkerProfile>,
        scheduler: SchedulePolicy,
    ) -> Self {
        ExperimentConfig {
            stream,
            clock: ClockMode::Virtual,
            workers,
            scheduler,
            ground_truth_path: None,
            detections_path: None,
            synthetic_objects: None,
            seed: 0,
            output_path: PathBuf::from("out"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stream
            .validate()
            .map_err(|e| Error::validation("stream", e.to_string()))?;
        if self.workers.is_empty() {
            return Err(Error::validation(
                "worker",
                "at least one [worker] section is required",
            ));
        }
        for (i, w) in self.workers.iter().enumerate() {
            if w.worker_id != i {
                return Err(Error::validation(
                    "worker",
                    format!(
                        "worker ids must be 0..n in order, found {} at position {i}",
                        w.worker_id
                    ),
                ));
            }
            w.validate()
                .map_err(|e| Error::validation("worker", e.to_string()))?;
        }
        self.scheduler
            .validate(self.workers.len())
            .map_err(|e| Error::validation("scheduler", e.to_string()))?;
        if self.synthetic_objects == Some(0) {
            return Err(Error::validation("synthetic_objects", "must be at least 1"));
        }
        Ok(())
    }

    /// Serializes in the config grammar; reloading yields an equal config.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "lambda_fps = {}", self.stream.lambda_fps);
        let _ = writeln!(s, "total_frames = {}", self.stream.total_frames);
        let _ = writeln!(s, "mode = {}", self.stream.mode);
        let _ = writeln!(s, "payload_bytes = {}", self.stream.payload_bytes);
        let _ = writeln!(s, "clock = {}", self.clock.as_str());
        let _ = writeln!(s, "scheduler = {}", self.scheduler.key());
        if let SchedulePolicy::Proportional {
            window_frames,
            ewma_alpha,
        } = &self.scheduler
        {
            let _ = writeln!(s, "window_frames = {window_frames}");
            let _ = writeln!(s, "ewma_alpha = {ewma_alpha}");
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(p) = &self.ground_truth_path {
            let _ = writeln!(s, "ground_truth = {}", p.display());
        }
        if let Some(p) = &self.detections_path {
            let _ = writeln!(s, "detections = {}", p.display());
        }
        if let Some(n) = self.synthetic_objects {
            let _ = writeln!(s, "synthetic_objects = {n}");
        }
        let _ = writeln!(s, "output = {}", self.output_path.display());
        for (i, w) in self.workers.iter().enumerate() {
            let _ = writeln!(s, "\n[worker]");
            let _ = writeln!(s, "mu_fps = {}", w.mu_fps);
            let _ = writeln!(s, "latency = {}", w.latency_model.name());
            if let LatencyModel::Uniform { spread } = w.latency_model {
                let _ = writeln!(s, "latency_spread = {spread}");
            }
            let _ = writeln!(s, "bandwidth_bps = {}", w.bandwidth);
            if let Some(tdp) = w.tdp_watts {
                let _ = writeln!(s, "tdp_watts = {tdp}");
            }
            if let SchedulePolicy::WeightedRoundRobin { weights } = &self.scheduler {
                let _ = writeln!(s, "weight = {}", weights[i]);
            }
        }
        s
    }
}

#[derive(Debug)]
struct Entry {
    value: String,
    line: usize,
    used: bool,
}

#[derive(Debug)]
struct Section {
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<T>().map(Some).map_err(|_| {
                Error::validation(key, format!("line {line}: expected {what}, got `{v}`"))
            }),
        }
    }

    fn require<T: std::str::FromStr>(&mut self, key: &str, what: &str, scope: &str) -> Result<T> {
        self.parse(key, what)?
            .ok_or_else(|| Error::validation(key, format!("missing required key in {scope}")))
    }

    fn reject_unused(&self, scope: &str) -> Result<()> {
        match self.entries.iter().find(|(_, e)| !e.used) {
            Some((k, e)) => Err(Error::validation(
                k.clone(),
                format!("line {}: unknown key in {scope}", e.line),
            )),
            None => Ok(()),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::validation(key, format!("must be positive, got {v}")))
    }
}

fn split_sections(text: &str, origin: &str) -> Result<(Section, Vec<Section>)> {
    let mut top = Section {
        entries: BTreeMap::new(),
    };
    let mut workers: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            origin: origin.to_string(),
            line: line_no,
            msg,
        };
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            if name.trim() != "worker" {
                return Err(parse_err(format!("unknown section `[{}]`", name.trim())));
            }
            workers.push(Section {
                entries: BTreeMap::new(),
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(parse_err("empty key".into()));
        }
        let section = workers.last_mut().unwrap_or(&mut top);
        if section.entries.contains_key(key) {
            return Err(Error::validation(
                key,
                format!("line {line_no}: duplicate key"),
            ));
        }
        section.entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line: line_no,
                used: false,
            },
        );
    }
    Ok((top, workers))
}

/// Parses and validates config text. `origin` names the source in errors.
pub fn parse_experiment_config(text: &str, origin: &str) -> Result<ExperimentConfig> {
    let (mut top, worker_sections) = split_sections(text, origin)?;

    let lambda_fps = positive(
        "lambda_fps",
        top.require("lambda_fps", "a number", "top level")?,
    )?;
    let total_frames: usize = top.require("total_frames", "a positive integer", "top level")?;
    if total_frames == 0 {
        return Err(Error::validation("total_frames", "must be at least 1"));
    }
    let mode = match top.take("mode") {
        None => FeedMode::Paced,
        Some((v, line)) => v.parse().map_err(|_| {
            Error::validation(
                "mode",
                format!("line {line}: expected `paced` or `saturation`, got `{v}`"),
            )
        })?,
    };
    let payload_bytes: u64 = top
        .parse("payload_bytes", "a non-negative integer")?
        .unwrap_or(0);
    let clock = match top.take("clock") {
        None => ClockMode::Virtual,
        Some((v, line)) => v.parse().map_err(|_| {
            Error::validation(
                "clock",
                format!("line {line}: expected `virtual` or `wall`, got `{v}`"),
            )
        })?,
    };
    let seed: u64 = top
        .parse("seed", "an unsigned 64-bit integer")?
        .unwrap_or(0);
    let ground_truth_path = top.take("ground_truth").map(|(v, _)| PathBuf::from(v));
    let detections_path = top.take("detections").map(|(v, _)| PathBuf::from(v));
    let synthetic_objects: Option<usize> = top.parse("synthetic_objects", "a positive integer")?;
    let output_path = top
        .take("output")
        .map_or_else(|| PathBuf::from("out"), |(v, _)| PathBuf::from(v));

    let (scheduler_key, scheduler_line) = top
        .take("scheduler")
        .ok_or_else(|| Error::validation("scheduler", "missing required key in top level"))?;
    let window: Option<usize> = top.parse("window_frames", "a positive integer")?;
    let alpha: Option<f64> = top.parse("ewma_alpha", "a number in (0, 1]")?;
    if scheduler_key != "proportional" && (window.is_some() || alpha.is_some()) {
        return Err(Error::validation(
            if window.is_some() {
                "window_frames"
            } else {
                "ewma_alpha"
            },
            "only valid with scheduler = proportional",
        ));
    }
    top.reject_unused("top level")?;

    let mut workers = Vec::new();
    let mut weights = Vec::new();
    for mut sec in worker_sections {
        let mu_fps = positive("mu_fps", sec.require("mu_fps", "a number", "[worker]")?)?;
        let spread: Option<f64> = sec.parse("latency_spread", "a number in [0, 1)")?;
        let latency_model = match sec.take("latency").as_ref().map(|(v, l)| (v.as_str(), *l)) {
            None | Some(("deterministic", _)) => LatencyModel::Deterministic,
            Some(("exponential", _)) => LatencyModel::Exponential,
            Some(("uniform", _)) => LatencyModel::Uniform {
                spread: spread.unwrap_or(0.2),
            },
            Some((other, line)) => {
                return Err(Error::validation(
                    "latency",
                    format!("line {line}: expected `deterministic`, `exponential` or `uniform`, got `{other}`"),
                ))
            }
        };
        if spread.is_some() && !matches!(latency_model, LatencyModel::Uniform { .. }) {
            return Err(Error::validation(
                "latency_spread",
                "only valid with latency = uniform",
            ));
        }
        let bandwidth = match sec.take("bandwidth_bps") {
            None => Bandwidth::Unlimited,
            Some((v, line)) => v.parse().map_err(|e: Error| {
                Error::validation("bandwidth_bps", format!("line {line}: {e}"))
            })?,
        };
        let tdp_watts = sec
            .parse::<f64>("tdp_watts", "a number")?
            .map(|v| positive("tdp_watts", v))
            .transpose()?;
        let weight = sec
            .parse::<f64>("weight", "a number")?
            .map(|v| positive("weight", v))
            .transpose()?;
        if weight.is_some() && scheduler_key != "wrr" {
            return Err(Error::validation(
                "weight",
                "only valid with scheduler = wrr",
            ));
        }
        let count: usize = sec.parse("count", "a positive integer")?.unwrap_or(1);
        if count == 0 {
            return Err(Error::validation("count", "must be at least 1"));
        }
        sec.reject_unused("[worker]")?;
        for _ in 0..count {
            let profile = WorkerProfile {
                worker_id: workers.len(),
                mu_fps,
                latency_model,
                bandwidth,
                tdp_watts,
            };
            profile
                .validate()
                .map_err(|e| Error::validation("worker", e.to_string()))?;
            workers.push(profile);
            weights.push(weight.unwrap_or(mu_fps));
        }
    }

    let scheduler = match scheduler_key.as_str() {
        "rr" => SchedulePolicy::RoundRobin,
        "fcfs" => SchedulePolicy::Fcfs,
        "wrr" => SchedulePolicy::WeightedRoundRobin { weights },
        "proportional" => SchedulePolicy::Proportional {
            window_frames: window.unwrap_or(DEFAULT_WINDOW_FRAMES),
            ewma_alpha: alpha.unwrap_or(DEFAULT_EWMA_ALPHA),
        },
        other => {
            return Err(Error::validation(
                "scheduler",
                format!("line {scheduler_line}: unknown policy `{other}` (expected rr, wrr, fcfs or proportional)"),
            ))
        }
    };

    let mut stream = StreamConfig {
        lambda_fps,
        total_frames,
        mode,
        payload_bytes: 0,
    };
    stream.payload_bytes = payload_bytes;
    let config = ExperimentConfig {
        stream,
        clock,
        workers,
        scheduler,
        ground_truth_path,
        detections_path,
        synthetic_objects,
        seed,
        output_path,
    };
    config.validate()?;
    Ok(config)
}

pub fn load_experiment_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_experiment_config(&text, &path.display().to_string())
}
