//! Wall-clock execution: one thread per worker.
//!
//! A source thread releases frames at their arrival times into a bounded
//! queue. The dispatcher owns the scheduler and every [`WorkerView`]; workers
//! report completions back to it over a channel. Processed results and drop
//! notices go to a synchronizer thread through a channel bounded at
//! [`SYNC_CHANNEL_CAPACITY`], which back-pressures the workers.

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, select, Receiver, Sender};

use crate::detector::{simulate_process, ReplayStore, Worker, WorkerProfile};
use crate::error::{Error, Result};
use crate::eval::CompletionEvent;
use crate::pipeline::{build_workers, RunOutput};
use crate::scheduler::{DispatchDecision, SchedulePolicy, Scheduler, WorkerView};
use crate::stream::{emit_schedule, Clock, FeedMode, Frame, StreamConfig};
use crate::synchronizer::{FrameResult, ProcessedResult, SequenceSynchronizer, SyncEvent};

pub const SYNC_CHANNEL_CAPACITY: usize = 256;
const SOURCE_QUEUE_CAPACITY: usize = 16;

struct Job {
    frame: Frame,
    dispatch_ts: f64,
}

struct Done {
    worker_id: usize,
    service_time: f64,
    event: CompletionEvent,
}

fn sleep_until(clock: &Clock, t: f64) {
    let now = clock.now();
    if t > now {
        thread::sleep(Duration::from_secs_f64(t - now));
    }
}

fn worker_loop(
    mut worker: Worker,
    clock: Clock,
    jobs: Receiver<Job>,
    sync_tx: Sender<SyncEvent>,
    done_tx: Sender<Done>,
) {
    for job in jobs {
        let outcome = simulate_process(&mut worker, &job.frame, job.dispatch_ts);
        sleep_until(&clock, job.dispatch_ts + outcome.service_time);
        let completion_ts = clock.now();
        let worker_id = worker.id();
        if sync_tx
            .send(SyncEvent::Processed(ProcessedResult {
                index: job.frame.index,
                worker_id,
                completion_ts,
                detections: outcome.detections,
            }))
            .is_err()
        {
            return;
        }
        let done = Done {
            worker_id,
            service_time: outcome.service_time,
            event: CompletionEvent {
                frame_index: job.frame.index,
                worker_id,
                dispatch_ts: job.dispatch_ts,
                completion_ts,
            },
        };
        if done_tx.send(done).is_err() {
            return;
        }
    }
}

struct Dispatcher {
    clock: Clock,
    scheduler: Scheduler,
    views: Vec<WorkerView>,
    jobs: Vec<Sender<Job>>,
    sync_tx: Sender<SyncEvent>,
    done_rx: Receiver<Done>,
    completions: Vec<CompletionEvent>,
    busy_time: Vec<f64>,
    waiter: Option<Frame>,
}

impl Dispatcher {
    fn apply(&mut self, done: Done) {
        let view = &mut self.views[done.worker_id];
        view.busy_until = done.event.completion_ts;
        view.record_latency(done.service_time);
        self.busy_time[done.worker_id] += done.service_time;
        self.completions.push(done.event);
    }

    fn apply_pending(&mut self) {
        while let Ok(done) = self.done_rx.try_recv() {
            self.apply(done);
        }
    }

    fn wait_for_completion(&mut self) -> Result<()> {
        let done = self
            .done_rx
            .recv()
            .map_err(|_| Error::Protocol("all workers exited while frames were pending".into()))?;
        self.apply(done);
        Ok(())
    }

    fn send_drop(&self, index: usize) -> Result<()> {
        self.sync_tx
            .send(SyncEvent::Dropped(index))
            .map_err(|_| Error::Protocol("synchronizer exited early".into()))
    }

    fn decide(&mut self, frame: &Frame) -> Result<DispatchDecision> {
        let now = self.clock.now();
        let decision = self.scheduler.dispatch(frame, &mut self.views, now);
        if let DispatchDecision::Assign(w) = decision {
            // busy until the worker reports back
            self.views[w].busy_until = f64::INFINITY;
            self.jobs[w]
                .send(Job {
                    frame: *frame,
                    dispatch_ts: now,
                })
                .map_err(|_| Error::Protocol(format!("worker {w} exited early")))?;
        }
        Ok(decision)
    }

    fn on_paced_arrival(&mut self, frame: Frame) -> Result<()> {
        self.apply_pending();
        self.serve_waiter()?;
        let fcfs = matches!(self.scheduler.policy(), SchedulePolicy::Fcfs);
        match self.decide(&frame)? {
            DispatchDecision::Assign(_) => {}
            DispatchDecision::Drop if fcfs => {
                if let Some(old) = self.waiter.replace(frame) {
                    self.send_drop(old.index)?;
                }
            }
            DispatchDecision::Drop => self.send_drop(frame.index)?,
        }
        Ok(())
    }

    fn serve_waiter(&mut self) -> Result<()> {
        let now = self.clock.now();
        if self.waiter.is_some() && self.views.iter().any(|v| v.is_idle_at(now)) {
            let w = self.waiter.take().expect("checked");
            if self.decide(&w)? == DispatchDecision::Drop {
                return Err(Error::Protocol(format!(
                    "waiting frame {} refused",
                    w.index
                )));
            }
        }
        Ok(())
    }

    fn on_saturation_arrival(&mut self, frame: Frame) -> Result<()> {
        self.apply_pending();
        while self.scheduler.ready_time(&frame, &self.views) > self.clock.now() {
            self.wait_for_completion()?;
        }
        match self.decide(&frame)? {
            DispatchDecision::Assign(_) => Ok(()),
            DispatchDecision::Drop => Err(Error::Protocol(format!(
                "frame {} refused at its ready time",
                frame.index
            ))),
        }
    }

    fn run(&mut self, mode: FeedMode, frames: Receiver<Frame>) -> Result<()> {
        loop {
            select! {
                recv(frames) -> msg => match msg {
                    Ok(frame) => match mode {
                        FeedMode::Paced => self.on_paced_arrival(frame)?,
                        FeedMode::Saturation => self.on_saturation_arrival(frame)?,
                    },
                    Err(_) => break,
                },
                recv(self.done_rx) -> msg => {
                    if let Ok(done) = msg {
                        self.apply(done);
                        self.serve_waiter()?;
                    }
                }
            }
        }
        while self.waiter.is_some() {
            self.wait_for_completion()?;
            self.serve_waiter()?;
        }
        Ok(())
    }
}

/// Runs the stream against the wall clock. Timings are real, so results
/// vary slightly from run to run.
pub fn run_wall(
    stream: &StreamConfig,
    profiles: &[WorkerProfile],
    policy: &SchedulePolicy,
    seed: u64,
    store: Option<Arc<ReplayStore>>,
) -> Result<RunOutput> {
    let frames = emit_schedule(stream)?;
    let total = frames.len();
    let workers = build_workers(profiles, seed, store)?;
    let scheduler = Scheduler::new(policy.clone(), workers.len())?;
    let n = workers.len();
    let clock = Clock::wall();

    let (frame_tx, frame_rx) = bounded::<Frame>(SOURCE_QUEUE_CAPACITY);
    let (sync_tx, sync_rx) = bounded::<SyncEvent>(SYNC_CHANNEL_CAPACITY);
    let (done_tx, done_rx) = bounded::<Done>(n.max(1));

    let source_clock = clock.clone();
    let source = thread::spawn(move || {
        for frame in frames {
            sleep_until(&source_clock, frame.arrival_ts);
            if frame_tx.send(frame).is_err() {
                break;
            }
        }
    });

    let synchronizer = thread::spawn(move || -> Result<(Vec<FrameResult>, usize, Duration)> {
        let mut sync = SequenceSynchronizer::new();
        let mut results = Vec::with_capacity(total);
        let mut overhead = Duration::ZERO;
        for event in sync_rx {
            let t0 = Instant::now();
            sync.submit(event)?;
            results.extend(sync.drain_ready());
            overhead += t0.elapsed();
        }
        if sync.buffered() != 0 {
            return Err(Error::Protocol(format!(
                "{} results left in the synchronizer",
                sync.buffered()
            )));
        }
        Ok((results, sync.high_water(), overhead))
    });

    let mut job_txs = Vec::with_capacity(n);
    let mut handles = Vec::with_capacity(n);
    for worker in workers {
        let (job_tx, job_rx) = bounded::<Job>(1);
        job_txs.push(job_tx);
        let (c, s, d) = (clock.clone(), sync_tx.clone(), done_tx.clone());
        handles.push(thread::spawn(move || worker_loop(worker, c, job_rx, s, d)));
    }
    drop(done_tx);

    let mut dispatcher = Dispatcher {
        clock,
        views: scheduler.initial_views(),
        scheduler,
        jobs: job_txs,
        sync_tx,
        done_rx,
        completions: Vec::new(),
        busy_time: vec![0.0; n],
        waiter: None,
    };
    let outcome = dispatcher.run(stream.mode, frame_rx);

    // closing the job queues lets workers finish and exit
    dispatcher.jobs.clear();
    let Dispatcher {
        sync_tx,
        done_rx,
        mut completions,
        mut busy_time,
        ..
    } = dispatcher;
    drop(sync_tx);
    for done in done_rx.iter() {
        busy_time[done.worker_id] += done.service_time;
        completions.push(done.event);
    }
    for h in handles {
        h.join()
            .map_err(|_| Error::Protocol("worker thread panicked".into()))?;
    }
    source
        .join()
        .map_err(|_| Error::Protocol("source thread panicked".into()))?;
    let synced = synchronizer
        .join()
        .map_err(|_| Error::Protocol("synchronizer thread panicked".into()))?;
    outcome?;
    let (results, sync_high_water, sync_overhead) = synced?;
    if results.len() != total {
        return Err(Error::Protocol(format!(
            "expected {total} results, synchronizer emitted {}",
            results.len()
        )));
    }
    Ok(RunOutput {
        results,
        completions,
        busy_time,
        sync_high_water,
        sync_overhead,
    })
}
