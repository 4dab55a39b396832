//! The engine loop: owns the lifecycle state, the pipeline stages and the
//! single serialized event queue.
//!
//! With [`ClockMode::Simulated`] everything runs inline on the engine thread
//! and time advances one output tick per iteration, so runs are bit-exact
//! reproducible. With [`ClockMode::Realtime`] capture and detection run on
//! worker threads feeding latest-wins mailboxes and the render loop is paced
//! by the wall clock.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{CascadeModel, DetectError, Detector};
use crate::frame::Rgba8Frame;
use crate::geom::RectF;
use crate::runtime::clock::Timestamp;
use crate::runtime::config::{ConfigError, EngineConfig};
use crate::runtime::lifecycle::{transition, Action, EngineState, LifecycleEvent};
use crate::runtime::mailbox::Mailbox;
use crate::runtime::pipeline::{
    detect_faces, prepare_camera, Background, DetectionResult, Pipeline,
};
use crate::runtime::sink::FrameSink;
use crate::runtime::source::{CapturedFrame, FrameSource, SourceError, SourceRead};
use crate::runtime::telemetry::{RateWindow, Telemetry};
use crate::runtime::thermal::{thermal_step, ThermalModel};
use crate::track::{Tracker, SLOT_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Deterministic: one output tick per loop iteration, no sleeping.
    Simulated,
    #[default]
    Realtime,
}

impl std::str::FromStr for ClockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simulated" => Ok(ClockMode::Simulated),
            "realtime" => Ok(ClockMode::Realtime),
            other => Err(format!("unknown clock {other:?} (expected simulated or realtime)")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EngineOptions {
    pub clock: ClockMode,
    /// Request shutdown after this many composed frames.
    pub max_ticks: Option<u64>,
    /// Shut down as soon as a fault is raised instead of waiting, faulted,
    /// for an operator.
    pub shutdown_on_fault: bool,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Source(#[from] SourceError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HandleError {
    #[error("engine has stopped")]
    Disconnected,
    #[error("engine did not answer within {0:?}")]
    Timeout(Duration),
}

/// Result of one lifecycle event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionOutcome {
    pub previous: EngineState,
    pub state: EngineState,
    pub actions: Vec<Action>,
    pub noop: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionRecord {
    pub from: EngineState,
    pub event: LifecycleEvent,
    pub to: EngineState,
    /// Actions actually performed, in order, before `to` was committed.
    pub performed: Vec<Action>,
}

/// A face occupying one of the four figure slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotFace {
    pub track_id: u64,
    /// Camera pixels.
    pub rect: RectF,
}

#[derive(Debug)]
struct Command {
    event: LifecycleEvent,
    reply: Option<Sender<TransitionOutcome>>,
}

#[derive(Debug)]
struct Shared {
    telemetry: Mutex<Telemetry>,
    frame: Mutex<Option<Arc<Rgba8Frame>>>,
    camera: Mutex<Option<Arc<Rgba8Frame>>>,
    slots: Mutex<[Option<SlotFace>; SLOT_COUNT]>,
    config: Arc<EngineConfig>,
    config_hash: String,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

/// Cheap, cloneable access to a running engine.
#[derive(Debug, Clone)]
pub struct EngineHandle {
    tx: Sender<Command>,
    shared: Arc<Shared>,
}

impl EngineHandle {
    /// Enqueues `event` and waits for the engine to finish the transition.
    pub fn request(
        &self,
        event: LifecycleEvent,
        timeout: Duration,
    ) -> Result<TransitionOutcome, HandleError> {
        let (reply, rx) = mpsc::channel();
        self.tx
            .send(Command {
                event,
                reply: Some(reply),
            })
            .map_err(|_| HandleError::Disconnected)?;
        rx.recv_timeout(timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => HandleError::Timeout(timeout),
            RecvTimeoutError::Disconnected => HandleError::Disconnected,
        })
    }

    /// Enqueues `event` without waiting. False if the engine has stopped.
    pub fn notify(&self, event: LifecycleEvent) -> bool {
        self.tx.send(Command { event, reply: None }).is_ok()
    }

    pub fn telemetry(&self) -> Telemetry {
        lock(&self.shared.telemetry).clone()
    }

    pub fn latest_frame(&self) -> Option<Arc<Rgba8Frame>> {
        lock(&self.shared.frame).clone()
    }

    pub fn latest_camera(&self) -> Option<Arc<Rgba8Frame>> {
        lock(&self.shared.camera).clone()
    }

    pub fn slot_faces(&self) -> [Option<SlotFace>; SLOT_COUNT] {
        lock(&self.shared.slots).clone()
    }

    pub fn config(&self) -> &EngineConfig {
        &self.shared.config
    }

    pub fn config_hash(&self) -> &str {
        &self.shared.config_hash
    }
}

/// How an engine run ended.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub final_state: EngineState,
    /// First fault raised during the run, if any.
    pub fault: Option<String>,
    pub frames_composed: u64,
    pub frames_written: u64,
    pub frames_dropped: u64,
    pub detections_run: u64,
    pub transitions: Vec<TransitionRecord>,
    pub telemetry: Telemetry,
}

struct Worker<T> {
    stop: Arc<AtomicBool>,
    handle: JoinHandle<T>,
}

impl<T: Send + 'static> Worker<T> {
    fn spawn(name: &str, f: impl FnOnce(Arc<AtomicBool>) -> T + Send + 'static) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let handle = std::thread::Builder::new()
            .name(name.into())
            .spawn(move || f(flag))
            .expect("spawn worker thread");
        Self { stop, handle }
    }

    fn stop(self) -> Result<T, String> {
        self.stop.store(true, Ordering::SeqCst);
        self.handle
            .join()
            .map_err(|_| "worker thread panicked".to_string())
    }
}

/// Sleeps up to `d`, waking early when `stop` is set.
fn nap(d: Duration, stop: &AtomicBool) {
    let until = Instant::now() + d;
    while !stop.load(Ordering::SeqCst) {
        let now = Instant::now();
        if now >= until {
            break;
        }
        std::thread::sleep((until - now).min(Duration::from_millis(10)));
    }
}

/// Capture and detection stages.
enum Feed {
    Inline {
        source: Box<dyn FrameSource>,
        /// Output tick at which the source was last opened.
        epoch: u64,
        detecting: bool,
        last_period: Option<u64>,
        last_detected: Option<u64>,
    },
    Threaded {
        source: Option<Box<dyn FrameSource>>,
        capture: Option<Worker<Box<dyn FrameSource>>>,
        detect: Option<Worker<()>>,
        cameras: Arc<Mailbox<CapturedFrame>>,
        results: Arc<Mailbox<DetectionResult>>,
        camera_seen: u64,
        result_seen: u64,
        source_dropped: Arc<AtomicU64>,
    },
}

/// What the feed delivered for one tick.
#[derive(Default)]
struct FeedUpdate {
    camera: Option<CapturedFrame>,
    result: Option<DetectionResult>,
    dropped: u64,
    end_of_stream: bool,
}

pub struct Engine {
    state: EngineState,
    options: EngineOptions,
    config: Arc<EngineConfig>,
    detector: Detector,
    pipeline: Pipeline,
    feed: Feed,
    sink: Box<dyn FrameSink>,
    rx: Receiver<Command>,
    tx: Sender<Command>,
    shared: Arc<Shared>,
    thermal: ThermalModel,
    thermal_clock: Instant,
    tracker_snapshot: Option<Tracker>,
    fps_window: RateWindow,
    detect_window: RateWindow,
    frames_dropped: u64,
    detections_run: u64,
    started: Instant,
    started_utc: DateTime<Utc>,
    next_deadline: Instant,
    fault: Option<String>,
    transitions: Vec<TransitionRecord>,
}

impl Engine {
    pub fn new(
        config: EngineConfig,
        model: Arc<CascadeModel>,
        source: Box<dyn FrameSource>,
        sink: Box<dyn FrameSink>,
        options: EngineOptions,
    ) -> Result<(Engine, EngineHandle), EngineError> {
        config.validate()?;
        config.validate_for_model(&model)?;
        let detector = Detector::new(model, config.detector.clone())?;
        let background = Background::from_config(&config)?;
        let config = Arc::new(config);
        let pipeline = Pipeline::new(Arc::clone(&config), background);
        let thermal = config.thermal.clone();
        let state = EngineState::Initializing;
        let shared = Arc::new(Shared {
            telemetry: Mutex::new(Telemetry::new(&state, thermal.temp, thermal.fan)),
            frame: Mutex::new(None),
            camera: Mutex::new(None),
            slots: Mutex::new(Default::default()),
            config_hash: config.hash(),
            config: Arc::clone(&config),
        });
        let feed = match options.clock {
            ClockMode::Simulated => Feed::Inline {
                source,
                epoch: 0,
                detecting: false,
                last_period: None,
                last_detected: None,
            },
            ClockMode::Realtime => Feed::Threaded {
                source: Some(source),
                capture: None,
                detect: None,
                cameras: Arc::new(Mailbox::new()),
                results: Arc::new(Mailbox::new()),
                camera_seen: 0,
                result_seen: 0,
                source_dropped: Arc::new(AtomicU64::new(0)),
            },
        };
        let (tx, rx) = mpsc::channel();
        let handle = EngineHandle {
            tx: tx.clone(),
            shared: Arc::clone(&shared),
        };
        let now = Instant::now();
        let engine = Engine {
            state,
            options,
            config,
            detector,
            pipeline,
            feed,
            sink,
            rx,
            tx,
            shared,
            thermal,
            thermal_clock: now,
            tracker_snapshot: None,
            fps_window: RateWindow::default(),
            detect_window: RateWindow::default(),
            frames_dropped: 0,
            detections_run: 0,
            started: now,
            started_utc: Utc::now(),
            next_deadline: now,
            fault: None,
            transitions: Vec::new(),
        };
        Ok((engine, handle))
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    /// Runs on a new thread.
    pub fn spawn(self) -> JoinHandle<RunSummary> {
        std::thread::Builder::new()
            .name("snowframe-engine".into())
            .spawn(move || self.run())
            .expect("spawn engine thread")
    }

    /// Runs until the lifecycle reaches `ShuttingDown`.
    pub fn run(mut self) -> RunSummary {
        self.apply(LifecycleEvent::InitComplete);
        while self.state != EngineState::ShuttingDown {
            match self.state {
                EngineState::Running => self.run_once(),
                _ => self.idle_once(),
            }
        }
        while let Ok(cmd) = self.rx.try_recv() {
            self.handle(cmd);
        }
        self.publish_telemetry();
        let telemetry = lock(&self.shared.telemetry).clone();
        RunSummary {
            final_state: self.state.clone(),
            fault: self.fault.clone(),
            frames_composed: self.pipeline.ticks(),
            frames_written: self.sink.written(),
            frames_dropped: self.frames_dropped,
            detections_run: self.detections_run,
            transitions: std::mem::take(&mut self.transitions),
            telemetry,
        }
    }

    fn simulated(&self) -> bool {
        self.options.clock == ClockMode::Simulated
    }

    fn output_period(&self) -> Duration {
        Duration::from_secs_f64(1.0 / f64::from(self.config.pipeline.output_hz))
    }

    fn run_once(&mut self) {
        if self.simulated() {
            while let Ok(cmd) = self.rx.try_recv() {
                self.handle(cmd);
            }
        } else {
            let now = Instant::now();
            if now < self.next_deadline {
                if let Ok(cmd) = self.rx.recv_timeout(self.next_deadline - now) {
                    self.handle(cmd);
                }
                return;
            }
        }
        if self.state != EngineState::Running {
            return;
        }
        self.tick();
        if !self.simulated() {
            let period = self.output_period();
            self.next_deadline += period;
            let now = Instant::now();
            if self.next_deadline + period < now {
                self.next_deadline = now;
            }
        }
        if let Some(max) = self.options.max_ticks {
            if self.pipeline.ticks() >= max && self.state == EngineState::Running {
                self.apply(LifecycleEvent::ShutdownRequested);
            }
        }
    }

    fn idle_once(&mut self) {
        if self.simulated() {
            if let Ok(cmd) = self.rx.recv() {
                self.handle(cmd);
            }
        } else {
            match self.rx.recv_timeout(Duration::from_secs(1)) {
                Ok(cmd) => self.handle(cmd),
                Err(_) => {
                    self.advance_thermal_wall(0.0);
                    self.publish_telemetry();
                }
            }
        }
    }

    fn handle(&mut self, cmd: Command) {
        let outcome = self.apply(cmd.event);
        if let Some(reply) = cmd.reply {
            let _ = reply.send(outcome);
        }
    }

    /// Performs the transition for `event`: actions first, then the state
    /// commit. A failing action aborts the transition and raises a fault.
    fn apply(&mut self, event: LifecycleEvent) -> TransitionOutcome {
        let previous = self.state.clone();
        let t = transition(&previous, &event);
        let best_effort = matches!(
            event,
            LifecycleEvent::ShutdownRequested | LifecycleEvent::FaultRaised(_)
        );
        let mut performed = Vec::new();
        let mut failure = None;
        for action in &t.actions {
            performed.push(*action);
            if let Err(e) = self.perform(*action) {
                log::warn!("{action:?} failed: {e}");
                if !best_effort {
                    failure = Some(format!("{action:?} failed: {e}"));
                    break;
                }
            }
        }
        let noop = t.is_noop(&previous);
        if !noop {
            self.transitions.push(TransitionRecord {
                from: previous.clone(),
                event: event.clone(),
                to: if failure.is_some() { previous.clone() } else { t.next.clone() },
                performed,
            });
        }
        if let Some(reason) = failure {
            return self.apply(LifecycleEvent::FaultRaised(reason));
        }
        self.state = t.next;
        if let EngineState::Faulted(reason) = &self.state {
            log::error!("engine faulted: {reason}");
            self.fault.get_or_insert_with(|| reason.clone());
        }
        if !noop {
            log::info!("{} -> {}", previous, self.state);
        }
        self.publish_telemetry();
        let outcome = TransitionOutcome {
            previous,
            state: self.state.clone(),
            actions: t.actions,
            noop,
        };
        if matches!(self.state, EngineState::Faulted(_)) && self.options.shutdown_on_fault {
            self.apply(LifecycleEvent::ShutdownRequested);
        }
        outcome
    }

    fn perform(&mut self, action: Action) -> Result<(), String> {
        match action {
            Action::StartSource | Action::ReacquireSource => self.start_source(),
            Action::StartPipeline | Action::ResumePipeline => {
                self.advance_thermal_wall(0.0);
                self.start_detect();
                self.next_deadline = Instant::now();
                Ok(())
            }
            Action::PausePipeline => {
                self.advance_thermal_wall(1.0);
                self.stop_detect()
            }
            Action::FlushSinks => self.sink.flush().map_err(|e| e.to_string()),
            Action::ReleaseSource => {
                let r = self.stop_source();
                self.pipeline.drop_camera();
                r
            }
            Action::PersistTracker => {
                self.tracker_snapshot = Some(self.pipeline.tracker.clone());
                Ok(())
            }
            Action::RestoreTracker => {
                if let Some(t) = self.tracker_snapshot.take() {
                    self.pipeline.tracker = t;
                }
                Ok(())
            }
            Action::CloseSinks => self.sink.close().map_err(|e| e.to_string()),
        }
    }

    fn start_source(&mut self) -> Result<(), String> {
        let ticks = self.pipeline.ticks();
        let mirror = self.config.pipeline.mirror();
        match &mut self.feed {
            Feed::Inline {
                source,
                epoch,
                last_period,
                ..
            } => {
                source.open().map_err(|e| e.to_string())?;
                *epoch = ticks;
                *last_period = None;
                Ok(())
            }
            Feed::Threaded {
                source,
                capture,
                cameras,
                source_dropped,
                ..
            } => {
                if capture.is_some() {
                    return Ok(());
                }
                let mut src = source.take().ok_or("frame source was lost")?;
                if let Err(e) = src.open() {
                    *source = Some(src);
                    return Err(e.to_string());
                }
                let cameras = Arc::clone(cameras);
                let dropped = Arc::clone(source_dropped);
                let events = self.tx.clone();
                *capture = Some(Worker::spawn("snowframe-capture", move |stop| {
                    capture_loop(src, &stop, &cameras, &events, &dropped, mirror)
                }));
                Ok(())
            }
        }
    }

    fn stop_source(&mut self) -> Result<(), String> {
        match &mut self.feed {
            Feed::Inline { source, .. } => {
                source.release();
                Ok(())
            }
            Feed::Threaded {
                source,
                capture,
                cameras,
                ..
            } => {
                cameras.clear();
                if let Some(w) = capture.take() {
                    let mut src = w.stop()?;
                    src.release();
                    *source = Some(src);
                }
                Ok(())
            }
        }
    }

    fn start_detect(&mut self) {
        let detector = self.detector.clone();
        let p = &self.config.pipeline;
        let (downscale, cadence) = (p.detect_downscale, p.detect_cadence);
        match &mut self.feed {
            Feed::Inline { detecting, .. } => *detecting = true,
            Feed::Threaded {
                detect,
                cameras,
                results,
                ..
            } => {
                if detect.is_none() {
                    let cameras = Arc::clone(cameras);
                    let results = Arc::clone(results);
                    *detect = Some(Worker::spawn("snowframe-detect", move |stop| {
                        detect_loop(&detector, downscale, cadence, &cameras, &results, &stop)
                    }));
                }
            }
        }
    }

    fn stop_detect(&mut self) -> Result<(), String> {
        match &mut self.feed {
            Feed::Inline { detecting, .. } => {
                *detecting = false;
                Ok(())
            }
            Feed::Threaded { detect, results, .. } => {
                results.clear();
                match detect.take() {
                    Some(w) => w.stop(),
                    None => Ok(()),
                }
            }
        }
    }

    fn poll_feed(&mut self) -> Result<FeedUpdate, SourceError> {
        let mut up = FeedUpdate::default();
        let ticks = self.pipeline.ticks();
        let p = &self.config.pipeline;
        match &mut self.feed {
            Feed::Inline {
                source,
                epoch,
                detecting,
                last_period,
                last_detected,
            } => {
                let at = Timestamp::new(ticks - *epoch, p.output_hz);
                match source.read(at)? {
                    SourceRead::Frame { frame, skipped } => {
                        up.dropped += skipped;
                        up.camera = Some(prepare_camera(frame, p.mirror()));
                    }
                    SourceRead::Pending => {}
                    SourceRead::EndOfStream => {
                        up.end_of_stream = true;
                        return Ok(up);
                    }
                }
                let period = at.periods(p.detect_cadence);
                if *detecting && *last_period != Some(period) {
                    *last_period = Some(period);
                    let camera = up.camera.as_ref().or(self.pipeline.camera());
                    if let Some(cam) = camera.filter(|c| *last_detected != Some(c.index)) {
                        *last_detected = Some(cam.index);
                        up.result = Some(DetectionResult {
                            frame_index: cam.index,
                            detections: detect_faces(&self.detector, &cam.frame, p.detect_downscale),
                        });
                    }
                }
            }
            Feed::Threaded {
                cameras,
                results,
                camera_seen,
                result_seen,
                source_dropped,
                ..
            } => {
                if let Some(d) = cameras.newer_than(*camera_seen) {
                    *camera_seen = d.seq;
                    up.dropped += d.missed;
                    up.camera = Some((*d.value).clone());
                }
                if let Some(d) = results.newer_than(*result_seen) {
                    *result_seen = d.seq;
                    up.result = Some((*d.value).clone());
                }
                up.dropped += source_dropped.swap(0, Ordering::SeqCst);
            }
        }
        Ok(up)
    }

    fn tick(&mut self) {
        let update = match self.poll_feed() {
            Ok(u) => u,
            Err(e) => {
                self.apply(LifecycleEvent::FaultRaised(format!("frame source: {e}")));
                return;
            }
        };
        if update.end_of_stream {
            log::info!("frame source exhausted");
            self.apply(LifecycleEvent::ShutdownRequested);
            return;
        }
        self.frames_dropped += update.dropped;
        if let Some(cam) = update.camera {
            *lock(&self.shared.camera) = Some(Arc::clone(&cam.frame));
            self.pipeline.set_camera(cam);
        }
        let now = self.now_seconds();
        if let Some(result) = &update.result {
            self.pipeline.apply_detections(result);
            self.detections_run += 1;
            self.detect_window.record(now);
        }
        let out = match self.pipeline.render() {
            Ok(o) => o,
            Err(e) => {
                self.apply(LifecycleEvent::FaultRaised(format!("compositor: {e}")));
                return;
            }
        };
        if let Err(e) = self.sink.write(&out.frame) {
            self.apply(LifecycleEvent::FaultRaised(format!("frame sink: {e}")));
            return;
        }
        let now = self.now_seconds();
        self.fps_window.record(now);
        if self.simulated() {
            let dt = 1.0 / f64::from(self.config.pipeline.output_hz);
            self.thermal = thermal_step(&self.thermal, 1.0, dt).expect("positive dt");
        } else {
            self.advance_thermal_wall(1.0);
        }
        *lock(&self.shared.frame) = Some(out.frame);
        let mut slots: [Option<SlotFace>; SLOT_COUNT] = Default::default();
        for (slot, track) in self.pipeline.tracker.slots().iter().enumerate() {
            if out.slot_occupancy[slot] {
                slots[slot] = track.map(|t| SlotFace {
                    track_id: t.id,
                    rect: t.rect,
                });
            }
        }
        *lock(&self.shared.slots) = slots;
        let mut tel = lock(&self.shared.telemetry);
        tel.set_slots(out.slot_occupancy);
        tel.last_frame_at = Some(self.wall_time(now));
        drop(tel);
        self.publish_telemetry();
    }

    /// Seconds of engine time: output ticks in simulation, wall time otherwise.
    fn now_seconds(&self) -> f64 {
        if self.simulated() {
            self.pipeline.ticks() as f64 / f64::from(self.config.pipeline.output_hz)
        } else {
            self.started.elapsed().as_secs_f64()
        }
    }

    fn wall_time(&self, seconds: f64) -> DateTime<Utc> {
        let offset = chrono::TimeDelta::from_std(Duration::from_secs_f64(seconds))
            .unwrap_or(chrono::TimeDelta::zero());
        self.started_utc + offset
    }

    fn advance_thermal_wall(&mut self, load: f64) {
        if self.simulated() {
            return;
        }
        let dt = self.thermal_clock.elapsed().as_secs_f64();
        self.thermal_clock = Instant::now();
        if dt > 0.0 {
            self.thermal = thermal_step(&self.thermal, load, dt).expect("positive dt");
        }
    }

    fn publish_telemetry(&mut self) {
        let now = self.now_seconds();
        let fps = self.fps_window.rate(now, 0.0);
        let hz = self.detect_window.rate(now, 0.0);
        let mut tel = lock(&self.shared.telemetry);
        tel.set_state(&self.state);
        tel.fps_out = fps;
        tel.detect_hz = hz;
        tel.temp = self.thermal.temp;
        tel.fan = self.thermal.fan;
        tel.uptime = now;
        tel.frames_dropped = self.frames_dropped;
        tel.frames_composed = self.pipeline.ticks();
        if self.state != EngineState::Running {
            tel.set_slots([false; SLOT_COUNT]);
            drop(tel);
            *lock(&self.shared.slots) = Default::default();
        }
    }
}

fn capture_loop(
    mut source: Box<dyn FrameSource>,
    stop: &AtomicBool,
    cameras: &Mailbox<CapturedFrame>,
    events: &Sender<Command>,
    dropped: &AtomicU64,
    mirror: bool,
) -> Box<dyn FrameSource> {
    let start = Instant::now();
    let fps = source.fps();
    while !stop.load(Ordering::SeqCst) {
        let at = Timestamp::from_duration(start.elapsed());
        match source.read(at) {
            Ok(SourceRead::Frame { frame, skipped }) => {
                dropped.fetch_add(skipped, Ordering::SeqCst);
                cameras.put(prepare_camera(frame, mirror));
            }
            Ok(SourceRead::Pending) => {}
            Ok(SourceRead::EndOfStream) => {
                log::info!("frame source exhausted");
                let _ = events.send(Command {
                    event: LifecycleEvent::ShutdownRequested,
                    reply: None,
                });
                break;
            }
            Err(e) => {
                let _ = events.send(Command {
                    event: LifecycleEvent::FaultRaised(format!("frame source: {e}")),
                    reply: None,
                });
                break;
            }
        }
        let next = Timestamp::new(at.periods(fps) + 1, fps).to_duration();
        nap(next.saturating_sub(start.elapsed()), stop);
    }
    source
}

fn detect_loop(
    detector: &Detector,
    downscale: f64,
    cadence: u32,
    cameras: &Mailbox<CapturedFrame>,
    results: &Mailbox<DetectionResult>,
    stop: &AtomicBool,
) {
    // A private pool: on the shared one, compositing would queue behind a
    // whole detection pass.
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get() / 2).max(1);
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .thread_name(|i| format!("snowframe-detect-{i}"))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            log::error!("cannot start detection threads: {e}");
            return;
        }
    };
    let period = Duration::from_secs_f64(1.0 / f64::from(cadence));
    let mut seen = 0;
    let mut due = Instant::now();
    while !stop.load(Ordering::SeqCst) {
        nap(due.saturating_duration_since(Instant::now()), stop);
        let Some(d) = cameras.wait_newer_than(seen, Duration::from_millis(50)) else {
            continue;
        };
        seen = d.seq;
        let detections = pool.install(|| detect_faces(detector, &d.value.frame, downscale));
        results.put(DetectionResult {
            frame_index: d.value.index,
            detections,
        });
        due += period;
        let now = Instant::now();
        if due < now {
            due = now;
        }
    }
}
