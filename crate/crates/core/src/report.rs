//! Result files and printed reports.
//!
//! All CSV output is UTF-8, comma-separated, with a header row and LF line
//! endings. Empty fields stand for "not applicable".

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::{replay_lookup, ReplayStore};
use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::synchronizer::{FrameResult, FrameStatus};

/// Bumped whenever summary columns change.
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// One row of the per-frame results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub index: usize,
    pub status: String,
    pub source_index: Option<usize>,
    pub worker_id: Option<usize>,
    pub completion_ts: Option<f64>,
    pub detection_count: usize,
}

impl From<&FrameResult> for ResultRow {
    fn from(r: &FrameResult) -> Self {
        ResultRow {
            index: r.index,
            status: r.status.as_str().to_string(),
            source_index: r.source_index,
            worker_id: r.worker_id,
            completion_ts: r.completion_ts,
            detection_count: r.detections.len(),
        }
    }
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

pub fn write_results_csv<W: Write>(out: W, results: &[FrameResult]) -> Result<()> {
    let mut w = csv_writer(out);
    for r in results {
        w.serialize(ResultRow::from(r))?;
    }
    w.flush()
        .map_err(|e| Error::Input(format!("writing results: {e}")))?;
    Ok(())
}

pub fn read_results_csv<R: Read>(input: R, origin: &str) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(input);
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<ResultRow>().enumerate() {
        let row = rec.map_err(|e| Error::Parse {
            origin: origin.to_string(),
            line: i + 2,
            msg: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Rebuilds frame results from CSV rows, taking each frame's detections
/// from `store` at its `source_index`.
///
/// Rows must cover `0..rows.len()` in order, and `detection_count` must
/// agree with the store.
pub fn results_from_rows(rows: &[ResultRow], store: &ReplayStore) -> Result<Vec<FrameResult>> {
    rows.iter()
        .enumerate()
        .map(|(pos, row)| {
            if row.index != pos {
                return Err(Error::validation(
                    "index",
                    format!(
                        "row {} has frame index {}, expected {pos}",
                        pos + 1,
                        row.index
                    ),
                ));
            }
            let status: FrameStatus = row
                .status
                .parse()
                .map_err(|e: Error| Error::validation("status", e.to_string()))?;
            let detections = match (status, row.source_index) {
                (FrameStatus::FilledEmpty, None) => Vec::new(),
                (FrameStatus::FilledEmpty, Some(_)) => {
                    return Err(Error::validation(
                        "source_index",
                        format!("frame {pos} is filled_empty but names a source"),
                    ))
                }
                (_, None) => {
                    return Err(Error::validation(
                        "source_index",
                        format!("frame {pos} is {status} without a source"),
                    ))
                }
                (_, Some(src)) => {
                    if src > pos || (status == FrameStatus::Processed && src != pos) {
                        return Err(Error::validation(
                            "source_index",
                            format!("frame {pos} has impossible source {src}"),
                        ));
                    }
                    replay_lookup(store, src).to_vec()
                }
            };
            if detections.len() != row.detection_count {
                return Err(Error::validation(
                    "detection_count",
                    format!(
                        "frame {pos}: file says {}, detections file has {}",
                        row.detection_count,
                        detections.len()
                    ),
                ));
            }
            Ok(FrameResult {
                index: pos,
                status,
                detections,
                source_index: row.source_index,
                worker_id: row.worker_id,
                completion_ts: row.completion_ts,
            })
        })
        .collect()
}

/// How drops were distributed over the run.
#[derive(Debug, Clone, PartialEq)]
pub struct DropSummary {
    pub dropped: usize,
    /// Longest run of consecutive dropped frames.
    pub longest_run: usize,
    pub first_dropped: Option<usize>,
    /// `dropped / processed`; `None` with nothing processed.
    pub drops_per_processed: Option<f64>,
}

impl DropSummary {
    pub fn from_results(results: &[FrameResult]) -> Self {
        let mut dropped = 0;
        let mut longest = 0;
        let mut current = 0;
        let mut first = None;
        for r in results {
            if r.status == FrameStatus::Processed {
                current = 0;
            } else {
                dropped += 1;
                current += 1;
                longest = longest.max(current);
                first.get_or_insert(r.index);
            }
        }
        let processed = results.len() - dropped;
        DropSummary {
            dropped,
            longest_run: longest,
            first_dropped: first,
            drops_per_processed: (processed > 0).then(|| dropped as f64 / processed as f64),
        }
    }
}

/// Everything `simulate` reports about one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub policy: String,
    pub mode: String,
    pub clock: String,
    pub n_workers: usize,
    pub lambda_fps: f64,
    pub seed: u64,
    /// The configuration as it was run.
    pub config_echo: String,
    pub metrics: MetricsReport,
    /// Busy fraction of the processing span, per worker.
    pub utilization: Vec<f64>,
    pub drops: DropSummary,
    pub span_s: f64,
    pub sync_high_water: usize,
    /// Wall seconds spent in the synchronizer; excluded from every rate.
    pub sync_overhead_s: f64,
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    schema_version: u32,
    policy: &'a str,
    mode: &'a str,
    clock: &'a str,
    n_workers: usize,
    lambda_fps: f64,
    seed: u64,
    total_frames: usize,
    processed: usize,
    filled: usize,
    filled_empty: usize,
    drop_pct: String,
    sigma_p_fps: String,
    span_s: String,
    map_pct: Option<String>,
    fps_per_watt: Option<String>,
    mean_utilization: String,
    sync_high_water: usize,
}

/// Column names of the summary CSV, in order.
pub const SUMMARY_COLUMNS: [&str; 18] = [
    "schema_version",
    "policy",
    "mode",
    "clock",
    "n_workers",
    "lambda_fps",
    "seed",
    "total_frames",
    "processed",
    "filled",
    "filled_empty",
    "drop_pct",
    "sigma_p_fps",
    "span_s",
    "map_pct",
    "fps_per_watt",
    "mean_utilization",
    "sync_high_water",
];

impl RunReport {
    fn summary_row(&self) -> SummaryRow<'_> {
        let m = &self.metrics;
        let total = m.total_frames();
        let mean_util = if self.utilization.is_empty() {
            0.0
        } else {
            self.utilization.iter().sum::<f64>() / self.utilization.len() as f64
        };
        SummaryRow {
            schema_version: SUMMARY_SCHEMA_VERSION,
            policy: &self.policy,
            mode: &self.mode,
            clock: &self.clock,
            n_workers: self.n_workers,
            lambda_fps: self.lambda_fps,
            seed: self.seed,
            total_frames: total,
            processed: m.processed_count,
            filled: m.filled_count,
            filled_empty: m.filled_empty_count,
            drop_pct: format!("{:.1}", pct(m.dropped(), total)),
            sigma_p_fps: format!("{:.3}", m.sigma_p_fps),
            span_s: format!("{:.6}", self.span_s),
            map_pct: m.map_score.map(|s| format!("{:.1}", 100.0 * s)),
            fps_per_watt: m.fps_per_watt.map(|v| format!("{v:.4}")),
            mean_utilization: format!("{mean_util:.4}"),
            sync_high_water: self.sync_high_water,
        }
    }

    /// Human-readable report; percentages to one decimal.
    pub fn render(&self) -> String {
        let m = &self.metrics;
        let total = m.total_frames();
        let mut s = String::new();
        let _ = writeln!(
            s,
            "policy {}  mode {}  clock {}  workers {}  lambda {} fps  seed {}",
            self.policy, self.mode, self.clock, self.n_workers, self.lambda_fps, self.seed
        );
        let _ = writeln!(s, "detection fps      {:>10.2}", m.sigma_p_fps);
        let _ = writeln!(s, "span (s)           {:>10.3}", self.span_s);
        let _ = writeln!(s, "frames             {total:>10}");
        let _ = writeln!(
            s,
            "processed          {:>10}  ({:.1}%)",
            m.processed_count,
            pct(m.processed_count, total)
        );
        let _ = writeln!(
            s,
            "filled             {:>10}  ({:.1}%)",
            m.filled_count,
            pct(m.filled_count, total)
        );
        let _ = writeln!(
            s,
            "filled empty       {:>10}  ({:.1}%)",
            m.filled_empty_count,
            pct(m.filled_empty_count, total)
        );
        if let Some(r) = self.drops.drops_per_processed {
            let _ = writeln!(s, "drops / processed  {r:>10.2}");
        }
        let _ = writeln!(s, "longest drop run   {:>10}", self.drops.longest_run);
        if let Some(map) = m.map_score {
            for (class, ap) in &m.per_class_ap {
                let _ = writeln!(s, "AP {class:<15} {:>10.1}%", 100.0 * ap);
            }
            let _ = writeln!(s, "mAP                {:>10.1}%", 100.0 * map);
        }
        if let Some(v) = m.fps_per_watt {
            let _ = writeln!(s, "fps / watt         {v:>10.2}");
        }
        for (i, u) in self.utilization.iter().enumerate() {
            let _ = writeln!(s, "worker {i:<3} busy    {:>10.1}%", 100.0 * u);
        }
        let _ = writeln!(
            s,
            "synchronizer       peak {} buffered, {:.3} ms",
            self.sync_high_water,
            1e3 * self.sync_overhead_s
        );
        s
    }
}

fn pct(part: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * part as f64 / total as f64
    }
}

/// Writes one summary row per report, so a sweep is one file.
pub fn write_summary_csv<W: Write>(out: W, reports: &[RunReport]) -> Result<()> {
    let mut w = csv_writer(out);
    if reports.is_empty() {
        w.write_record(SUMMARY_COLUMNS)?;
    }
    for r in reports {
        w.serialize(r.summary_row())?;
    }
    w.flush()
        .map_err(|e| Error::Input(format!("writing summary: {e}")))?;
    Ok(())
}

/// Per-class AP and mAP as printed by `eval`.
pub fn render_quality(metrics: &MetricsReport) -> String {
    let mut s = String::new();
    let total = metrics.total_frames();
    let _ = writeln!(
        s,
        "frames {total}  processed {} ({:.1}%)  filled {}  filled_empty {}",
        metrics.processed_count,
        pct(metrics.processed_count, total),
        metrics.filled_count,
        metrics.filled_empty_count
    );
    for (class, ap) in &metrics.per_class_ap {
        let _ = writeln!(s, "AP {class:<15} {:>6.1}%", 100.0 * ap);
    }
    if let Some(map) = metrics.map_score {
        let _ = writeln!(s, "mAP                {:>6.1}%", 100.0 * map);
    }
    s
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
