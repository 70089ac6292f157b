//! End-to-end runs: resolve inputs, run the pipeline, assemble metrics.

use std::path::Path;
use std::sync::Arc;

use crate::detector::{ReplayStore, WorkerProfile};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_map, fps_per_watt, processing_fps, status_counts, GroundTruthSet, MetricsReport,
    DEFAULT_IOU_THRESHOLD,
};
use crate::ingest::{load_mot_annotations, ExperimentConfig, DEFAULT_CLASS_LABEL};
use crate::pipeline::{simulate, RunOutput};
use crate::realtime::run_wall;
use crate::report::{DropSummary, RunReport};
use crate::scheduler::SchedulePolicy;
use crate::stream::ClockMode;
use crate::synth::MovingBoxes;

/// Ground truth and detection source for a run.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub ground_truth: Option<GroundTruthSet>,
    pub detections: Option<Arc<ReplayStore>>,
}

/// Loads or generates the inputs named by `config`. Relative paths are
/// resolved against `base_dir`.
///
/// Without a detections file the ground truth is replayed as perfect
/// detections.
pub fn load_inputs(config: &ExperimentConfig, base_dir: &Path) -> Result<Inputs> {
    let ground_truth = match (&config.ground_truth_path, config.synthetic_objects) {
        (Some(p), _) => {
            Some(load_mot_annotations(base_dir.join(p))?.ground_truth(DEFAULT_CLASS_LABEL))
        }
        (None, Some(objects)) => {
            Some(MovingBoxes::new(config.stream.total_frames, objects, config.seed).generate()?)
        }
        (None, None) => None,
    };
    let detections = match &config.detections_path {
        Some(p) => Some(Arc::new(
            load_mot_annotations(base_dir.join(p))?.replay_store(DEFAULT_CLASS_LABEL),
        )),
        None => ground_truth
            .as_ref()
            .map(|gt| Arc::new(gt.as_perfect_replay())),
    };
    if let Some(gt) = &ground_truth {
        if gt.frame_span() > config.stream.total_frames {
            return Err(Error::validation(
                "total_frames",
                format!(
                    "ground truth spans {} frames but the stream has only {}",
                    gt.frame_span(),
                    config.stream.total_frames
                ),
            ));
        }
    }
    Ok(Inputs {
        ground_truth,
        detections,
    })
}

/// Runs the pipeline once, in the clock mode the config asks for.
pub fn run_pipeline(config: &ExperimentConfig, inputs: &Inputs) -> Result<RunOutput> {
    config.validate()?;
    let store = inputs.detections.clone();
    match config.clock {
        ClockMode::Virtual => simulate(
            &config.stream,
            &config.workers,
            &config.scheduler,
            config.seed,
            store,
        ),
        ClockMode::Wall => run_wall(
            &config.stream,
            &config.workers,
            &config.scheduler,
            config.seed,
            store,
        ),
    }
}

/// Throughput, drop counts, quality and energy figures for a finished run.
pub fn metrics_for(
    output: &RunOutput,
    workers: &[WorkerProfile],
    ground_truth: Option<&GroundTruthSet>,
) -> Result<MetricsReport> {
    let sigma_p_fps = processing_fps(&output.completions)?;
    let (processed_count, filled_count, filled_empty_count) = status_counts(&output.results);
    let (per_class_ap, map_score) = match ground_truth {
        Some(gt) => {
            let q = evaluate_map(&output.results, gt, DEFAULT_IOU_THRESHOLD)?;
            (q.per_class_ap, Some(q.map_score))
        }
        None => Default::default(),
    };
    let tdp: Option<f64> = workers.iter().map(|w| w.tdp_watts).sum();
    let fps_per_watt = tdp.map(|t| fps_per_watt(sigma_p_fps, t)).transpose()?;
    Ok(MetricsReport {
        sigma_p_fps,
        processed_count,
        filled_count,
        filled_empty_count,
        per_class_ap,
        map_score,
        fps_per_watt,
    })
}

/// Full run plus report.
pub fn run_experiment(
    config: &ExperimentConfig,
    inputs: &Inputs,
) -> Result<(RunOutput, RunReport)> {
    let output = run_pipeline(config, inputs)?;
    let metrics = metrics_for(&output, &config.workers, inputs.ground_truth.as_ref())?;
    let span_s = output.span().map_or(0.0, |(a, b)| b - a);
    let report = RunReport {
        policy: config.scheduler.key().to_string(),
        mode: config.stream.mode.as_str().to_string(),
        clock: config.clock.as_str().to_string(),
        n_workers: config.workers.len(),
        lambda_fps: config.stream.lambda_fps,
        seed: config.seed,
        config_echo: config.to_config_string(),
        metrics,
        utilization: output.utilization(),
        drops: DropSummary::from_results(&output.results),
        span_s,
        sync_high_water: output.sync_high_water,
        sync_overhead_s: output.sync_overhead.as_secs_f64(),
    };
    Ok((output, report))
}

/// `config` with `n` copies of its first worker.
pub fn homogeneous_variant(config: &ExperimentConfig, n: usize) -> Result<ExperimentConfig> {
    if n == 0 {
        return Err(Error::validation(
            "sweep",
            "worker count must be at least 1",
        ));
    }
    let base = config
        .workers
        .first()
        .ok_or_else(|| Error::validation("worker", "at least one [worker] section is required"))?;
    let mut out = config.clone();
    out.workers = (0..n)
        .map(|i| WorkerProfile {
            worker_id: i,
            ..base.clone()
        })
        .collect();
    if let SchedulePolicy::WeightedRoundRobin { weights } = &config.scheduler {
        out.scheduler = SchedulePolicy::WeightedRoundRobin {
            weights: vec![weights[0]; n],
        };
    }
    Ok(out)
}

/// Runs one homogeneous configuration per worker count, in order.
pub fn run_sweep(
    config: &ExperimentConfig,
    inputs: &Inputs,
    counts: impl IntoIterator<Item = usize>,
) -> Result<Vec<RunReport>> {
    counts
        .into_iter()
        .map(|n| Ok(run_experiment(&homogeneous_variant(config, n)?, inputs)?.1))
        .collect()
}
