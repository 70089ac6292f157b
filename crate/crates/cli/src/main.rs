use std::fs::File;
use std::io::BufReader;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use detsim::detector::WorkerProfile;
use detsim::eval::{evaluate_map, status_counts, MetricsReport, DEFAULT_IOU_THRESHOLD};
use detsim::experiment::{homogeneous_variant, load_inputs, run_experiment, run_sweep};
use detsim::ingest::{
    load_experiment_config, load_mot_annotations, write_mot_ground_truth, DEFAULT_CLASS_LABEL,
};
use detsim::planner::{self, DEFAULT_COMFORT_FPS};
use detsim::report::{
    read_results_csv, render_quality, results_from_rows, write_file, write_results_csv,
    write_summary_csv,
};
use detsim::scheduler::SchedulePolicy;
use detsim::stream::{ClockMode, FeedMode};

#[derive(Parser)]
#[command(
    name = "detsim",
    version,
    about = "Simulate parallel object-detection pipelines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Number of models needed for an incoming frame rate.
    Plan {
        /// Incoming stream rate (frames per second).
        #[arg(long, value_parser = positive_f64)]
        lambda: f64,
        /// Per-model detection rate (frames per second).
        #[arg(long, value_parser = positive_f64)]
        mu: f64,
        /// Lowest acceptable output rate.
        #[arg(long, value_parser = positive_f64, default_value_t = DEFAULT_COMFORT_FPS)]
        comfort: f64,
    },
    /// Run a configured pipeline and write per-frame and summary CSVs.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output` in the config.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Re-run with 1..=k copies of the first worker, e.g. `n=1..7`.
        #[arg(long, value_parser = parse_sweep)]
        sweep: Option<RangeInclusive<usize>>,
        #[arg(long, value_parser = positive_f64)]
        lambda: Option<f64>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<FeedMode>,
        /// rr, fcfs, wrr or proportional. wrr weights default to each worker's rate.
        #[arg(long)]
        scheduler: Option<String>,
        /// Replace the workers with this many copies of the first one.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_clock)]
        clock: Option<ClockMode>,
    },
    /// Score a results CSV against ground truth.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Detections replayed by the run; defaults to the ground truth itself.
        #[arg(long)]
        detections: Option<PathBuf>,
    },
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        Ok(v) => Err(format!("must be a positive number, got {v}")),
        Err(_) => Err(format!("`{s}` is not a number")),
    }
}

fn parse_mode(s: &str) -> Result<FeedMode, String> {
    s.parse().map_err(|e: detsim::Error| e.to_string())
}

fn parse_clock(s: &str) -> Result<ClockMode, String> {
    s.parse().map_err(|e: detsim::Error| e.to_string())
}

fn parse_sweep(s: &str) -> Result<RangeInclusive<usize>, String> {
    let body = s.strip_prefix("n=").unwrap_or(s);
    let (lo, hi) = body
        .split_once("..")
        .ok_or_else(|| format!("expected `n=LO..HI`, got `{s}`"))?;
    let hi = hi.strip_prefix('=').unwrap_or(hi);
    let lo: usize = lo
        .trim()
        .parse()
        .map_err(|_| format!("bad lower bound in `{s}`"))?;
    let hi: usize = hi
        .trim()
        .parse()
        .map_err(|_| format!("bad upper bound in `{s}`"))?;
    if lo == 0 || lo > hi {
        return Err(format!("need 1 <= LO <= HI, got `{s}`"));
    }
    Ok(lo..=hi)
}

fn cmd_plan(lambda: f64, mu: f64, comfort: f64) -> Result<()> {
    let p = planner::plan(lambda, mu, comfort)?;
    let drops = planner::expected_drops_per_processed(lambda, mu)?;
    println!("n = {}", p.n_exact);
    println!("range = [{}, {}]", p.n_lo, p.n_hi);
    println!("drops per processed frame with one model = {drops}");
    println!("n,sigma_p_fps");
    for (n, sigma) in p.sigma_by_n() {
        println!("{n},{sigma:.1}");
    }
    Ok(())
}

struct SimulateArgs {
    config: PathBuf,
    output: Option<PathBuf>,
    sweep: Option<RangeInclusive<usize>>,
    lambda: Option<f64>,
    frames: Option<usize>,
    mode: Option<FeedMode>,
    scheduler: Option<String>,
    workers: Option<usize>,
    seed: Option<u64>,
    clock: Option<ClockMode>,
}

fn policy_override(
    key: &str,
    workers: &[WorkerProfile],
    current: &SchedulePolicy,
) -> Result<SchedulePolicy> {
    Ok(match key {
        "rr" => SchedulePolicy::RoundRobin,
        "fcfs" => SchedulePolicy::Fcfs,
        "wrr" => match current {
            SchedulePolicy::WeightedRoundRobin { weights } if weights.len() == workers.len() => {
                current.clone()
            }
            _ => SchedulePolicy::WeightedRoundRobin {
                weights: workers.iter().map(|w| w.mu_fps).collect(),
            },
        },
        "proportional" => match current {
            SchedulePolicy::Proportional { .. } => current.clone(),
            _ => SchedulePolicy::proportional(),
        },
        other => bail!("unknown scheduler `{other}` (expected rr, wrr, fcfs or proportional)"),
    })
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = load_experiment_config(&args.config)?;
    let base_dir = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    if let Some(v) = args.lambda {
        cfg.stream.lambda_fps = v;
    }
    if let Some(v) = args.frames {
        cfg.stream.total_frames = v;
    }
    if let Some(v) = args.mode {
        cfg.stream.mode = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.clock {
        cfg.clock = v;
    }
    if let Some(n) = args.workers {
        cfg = homogeneous_variant(&cfg, n)?;
    }
    if let Some(key) = &args.scheduler {
        cfg.scheduler = policy_override(key, &cfg.workers, &cfg.scheduler)?;
    }
    cfg.validate()?;
    let out_dir = args
        .output
        .unwrap_or_else(|| base_dir.join(&cfg.output_path));

    let inputs = load_inputs(&cfg, &base_dir)?;
    if cfg.ground_truth_path.is_none() {
        if let Some(gt) = &inputs.ground_truth {
            let mut buf = Vec::new();
            write_mot_ground_truth(&mut buf, gt)?;
            write_file(&out_dir.join("gt.txt"), &buf)?;
        }
    }

    if let Some(range) = args.sweep {
        let reports = run_sweep(&cfg, &inputs, range)?;
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &reports)?;
        let path = out_dir.join("sweep.csv");
        write_file(&path, &buf)?;
        println!("n,sigma_p_fps,nominal_fps,drop_pct,map_pct");
        for r in &reports {
            let m = &r.metrics;
            println!(
                "{},{:.1},{:.1},{:.1},{}",
                r.n_workers,
                m.sigma_p_fps,
                r.n_workers as f64 * cfg.workers[0].mu_fps,
                100.0 * m.dropped() as f64 / m.total_frames() as f64,
                m.map_score
                    .map_or(String::new(), |s| format!("{:.1}", 100.0 * s))
            );
        }
        println!("wrote {}", path.display());
        return Ok(());
    }

    let (output, report) = run_experiment(&cfg, &inputs)?;
    let mut results = Vec::new();
    write_results_csv(&mut results, &output.results)?;
    write_file(&out_dir.join("results.csv"), &results)?;
    let mut summary = Vec::new();
    write_summary_csv(&mut summary, std::slice::from_ref(&report))?;
    write_file(&out_dir.join("summary.csv"), &summary)?;
    write_file(&out_dir.join("run.conf"), report.config_echo.as_bytes())?;
    print!("{}", report.render());
    println!("wrote {}", out_dir.display());
    Ok(())
}

fn cmd_eval(results: &Path, gt_path: &Path, detections: Option<&Path>) -> Result<()> {
    let gt = load_mot_annotations(gt_path)?.ground_truth(DEFAULT_CLASS_LABEL);
    let store = match detections {
        Some(p) => load_mot_annotations(p)?.replay_store(DEFAULT_CLASS_LABEL),
        None => gt.as_perfect_replay(),
    };
    let file = File::open(results).with_context(|| format!("opening {}", results.display()))?;
    let rows = read_results_csv(BufReader::new(file), &results.display().to_string())?;
    if rows.len() < gt.frame_span() {
        return Err(detsim::Error::validation(
            "results",
            format!(
                "{} has {} frames but the ground truth spans {}",
                results.display(),
                rows.len(),
                gt.frame_span()
            ),
        )
        .into());
    }
    let frames = results_from_rows(&rows, &store)?;
    let quality = evaluate_map(&frames, &gt, DEFAULT_IOU_THRESHOLD)?;
    let (processed_count, filled_count, filled_empty_count) = status_counts(&frames);
    let metrics = MetricsReport {
        sigma_p_fps: 0.0,
        processed_count,
        filled_count,
        filled_empty_count,
        per_class_ap: quality.per_class_ap,
        map_score: Some(quality.map_score),
        fps_per_watt: None,
    };
    print!("{}", render_quality(&metrics));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Plan {
            lambda,
            mu,
            comfort,
        } => cmd_plan(lambda, mu, comfort),
        Command::Simulate {
            config,
            output,
            sweep,
            lambda,
            frames,
            mode,
            scheduler,
            workers,
            seed,
            clock,
        } => cmd_simulate(SimulateArgs {
            config,
            output,
            sweep,
            lambda,
            frames,
            mode,
            scheduler,
            workers,
            seed,
            clock,
        }),
        Command::Eval {
            results,
            gt,
            detections,
        } => cmd_eval(&results, &gt, detections.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
