//! Shared service state, the poll/score loop and retrain orchestration.

use std::collections::BTreeMap;
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use ocae_core::store::load_bundle;
use ocae_core::DetectorBundle;
use tokio::sync::{broadcast, watch};

use crate::alarms::{AlarmRegistry, DEFAULT_CAPACITY};
use crate::error::{Error, Result};
use crate::messages::{RetrainUpdate, StreamMessage};
use crate::retrain::{run_retrain, JobState, RetrainJob, RetrainRequest};
use crate::state::{MonitorState, Snapshot, DEFAULT_ALARM_N, DEFAULT_INTERVAL};
use crate::tail::CsvTail;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
/// Messages buffered per stream subscriber before it is dropped.
pub const STREAM_BUFFER: usize = 1024;

#[derive(Debug, Clone)]
pub struct MonitorConfig {
    pub model_dir: PathBuf,
    pub csv: PathBuf,
    pub interval: Duration,
    pub alarm_n: u32,
    pub bind: SocketAddr,
    /// Retrained bundles are written to fresh subdirectories here.
    pub models_root: PathBuf,
    pub alarm_capacity: usize,
    /// Where to write the final state on shutdown.
    pub snapshot_path: Option<PathBuf>,
    /// Stop after this many poll cycles (replays and tests).
    pub max_cycles: Option<u64>,
}

impl MonitorConfig {
    pub fn new(model_dir: impl Into<PathBuf>, csv: impl Into<PathBuf>) -> Self {
        let model_dir = model_dir.into();
        let models_root = model_dir
            .parent()
            .map(|p| p.join("retrained"))
            .unwrap_or_else(|| PathBuf::from("retrained"));
        Self {
            model_dir,
            csv: csv.into(),
            interval: DEFAULT_INTERVAL,
            alarm_n: DEFAULT_ALARM_N,
            bind: DEFAULT_BIND.parse().expect("valid default address"),
            models_root,
            alarm_capacity: DEFAULT_CAPACITY,
            snapshot_path: None,
            max_cycles: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alarm_n == 0 {
            return Err(Error::Config("alarm_n must be at least 1".into()));
        }
        if self.interval.is_zero() {
            return Err(Error::Config("interval must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
struct Jobs {
    next_id: u64,
    running: Option<u64>,
    table: BTreeMap<u64, RetrainJob>,
}

/// State shared by the poll loop, the HTTP handlers and the retrain worker.
pub struct Shared {
    bundle: RwLock<Arc<DetectorBundle>>,
    snapshot: Mutex<Snapshot>,
    alarms: Mutex<AlarmRegistry>,
    jobs: Mutex<Jobs>,
    tx: broadcast::Sender<StreamMessage>,
    models_root: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JobConflict {
    pub running: u64,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl Shared {
    pub fn new(bundle: DetectorBundle, config: &MonitorConfig) -> Arc<Self> {
        let bundle = Arc::new(bundle);
        let state = MonitorState::new(bundle.clone(), config.alarm_n, config.interval);
        let (tx, _) = broadcast::channel(STREAM_BUFFER);
        Arc::new(Self {
            bundle: RwLock::new(bundle),
            snapshot: Mutex::new(state.snapshot()),
            alarms: Mutex::new(AlarmRegistry::new(config.alarm_capacity)),
            jobs: Mutex::new(Jobs::default()),
            tx,
            models_root: config.models_root.clone(),
        })
    }

    /// Loads the bundle named in `config`; failure is fatal for the service.
    pub fn load(config: &MonitorConfig) -> Result<Arc<Self>> {
        config.validate()?;
        let bundle = load_bundle(&config.model_dir)?;
        log::info!(
            "loaded bundle {} (threshold {})",
            bundle.model_id,
            bundle.threshold.value
        );
        Ok(Self::new(bundle, config))
    }

    pub fn bundle(&self) -> Arc<DetectorBundle> {
        self.bundle.read().expect("bundle lock").clone()
    }

    /// Replaces the live bundle. Readers see either the old or the new one.
    pub fn swap_bundle(&self, bundle: DetectorBundle) {
        *self.bundle.write().expect("bundle lock") = Arc::new(bundle);
    }

    pub fn snapshot(&self) -> Snapshot {
        self.snapshot.lock().expect("snapshot lock").clone()
    }

    fn publish_snapshot(&self, snap: Snapshot) {
        *self.snapshot.lock().expect("snapshot lock") = snap;
    }

    pub fn subscribe(&self) -> broadcast::Receiver<StreamMessage> {
        self.tx.subscribe()
    }

    /// Sends to every subscriber; having none is fine.
    pub fn broadcast(&self, msg: StreamMessage) {
        let _ = self.tx.send(msg);
    }

    pub fn alarms(&self) -> Vec<crate::alarms::AlarmRecord> {
        self.alarms.lock().expect("alarm lock").list()
    }

    pub fn ack_alarm(&self, id: u64) -> Option<crate::alarms::AlarmRecord> {
        self.alarms.lock().expect("alarm lock").ack(id, &now())
    }

    pub fn job(&self, id: u64) -> Option<RetrainJob> {
        self.jobs.lock().expect("job lock").table.get(&id).cloned()
    }

    fn set_job_state(&self, id: u64, state: JobState) {
        if let Some(job) = self.jobs.lock().expect("job lock").table.get_mut(&id) {
            job.state = state;
        }
        self.broadcast(StreamMessage::Retrain(RetrainUpdate { job_id: id, state }));
    }

    /// Starts a retrain job on a blocking worker thread. Only one job may
    /// run at a time.
    pub fn start_retrain(self: &Arc<Self>, req: RetrainRequest) -> std::result::Result<u64, JobConflict> {
        let id = {
            let mut jobs = self.jobs.lock().expect("job lock");
            if let Some(running) = jobs.running {
                return Err(JobConflict { running });
            }
            jobs.next_id += 1;
            let id = jobs.next_id;
            jobs.running = Some(id);
            jobs.table.insert(id, RetrainJob::new(id, now()));
            id
        };
        log::info!("retrain job {id} started on {}", req.csv_path.display());
        let shared = self.clone();
        tokio::task::spawn_blocking(move || {
            let result = run_retrain(&req, &shared.models_root, id, |s| shared.set_job_state(id, s));
            let state = {
                let mut jobs = shared.jobs.lock().expect("job lock");
                jobs.running = None;
                let job = jobs.table.get_mut(&id).expect("job registered");
                job.finished_at = Some(now());
                match result {
                    Ok((dir, bundle)) => {
                        log::info!("job {id}: deployed {} from {}", bundle.model_id, dir.display());
                        job.bundle_dir = Some(dir);
                        job.model_id = Some(bundle.model_id.clone());
                        job.state = JobState::Done;
                        shared.swap_bundle(bundle);
                    }
                    Err(reason) => {
                        log::error!("job {id} failed: {reason}");
                        job.error = Some(reason);
                        job.state = JobState::Failed;
                    }
                }
                job.state
            };
            shared.broadcast(StreamMessage::Retrain(RetrainUpdate { job_id: id, state }));
        });
        Ok(id)
    }
}

/// Polls the CSV, scores new rows and broadcasts readings and alarms until
/// `shutdown` resolves (or `max_cycles` polls have run). Returns the final
/// state, also written to `snapshot_path` when configured.
pub async fn run_loop(
    shared: Arc<Shared>,
    config: &MonitorConfig,
    mut shutdown: watch::Receiver<bool>,
) -> Snapshot {
    let mut tail = CsvTail::new(&config.csv);
    let mut state = MonitorState::new(shared.bundle(), config.alarm_n, config.interval);
    let mut cycles = 0u64;
    loop {
        let bundle = shared.bundle();
        if !Arc::ptr_eq(&bundle, &state.bundle) {
            log::info!("switching to bundle {}", bundle.model_id);
            state.bundle = bundle;
        }
        let more = cycle(&shared, &mut tail, &mut state);
        shared.publish_snapshot(state.snapshot());
        cycles += 1;
        if more {
            tokio::task::yield_now().await;
            continue;
        }
        tokio::select! {
            _ = tokio::time::sleep(config.interval) => {}
            _ = shutdown.wait_for(|stop| *stop) => break,
        }
        if config.max_cycles.is_some_and(|max| cycles >= max) || *shutdown.borrow() {
            break;
        }
    }
    let snap = state.snapshot();
    log::info!("monitor stopping: {}", serde_json::to_string(&snap).unwrap_or_default());
    if let Some(path) = &config.snapshot_path {
        let text = serde_json::to_string_pretty(&snap).expect("snapshot serializes");
        if let Err(e) = std::fs::write(path, text) {
            log::error!("cannot write snapshot to {}: {e}", path.display());
        }
    }
    snap
}

/// One poll: tail, score, broadcast. Returns whether more data is waiting.
pub fn cycle(shared: &Shared, tail: &mut CsvTail, state: &mut MonitorState) -> bool {
    let batch = match tail.poll() {
        Ok(b) => b,
        Err(e) => {
            log::warn!("reading {}: {e}; retrying next cycle", tail.path().display());
            return false;
        }
    };
    if batch.rotated {
        log::info!("{} rotated; reading from the first row", tail.path().display());
    }
    let dropped = batch.rows as usize - batch.frames.len();
    if dropped > 0 {
        log::warn!("{dropped} corrupt or malformed rows dropped");
    }
    for frame in &batch.frames {
        let step = state.step(frame);
        if let Some(reading) = step.reading {
            shared.broadcast(StreamMessage::Reading(reading));
        }
        if let Some(alarm) = step.alarm {
            log::warn!(
                "ALARM {}: seq {} score {:.6} > {:.6} for {} rows",
                alarm.id,
                alarm.seq,
                alarm.score,
                alarm.threshold,
                alarm.streak
            );
            shared.alarms.lock().expect("alarm lock").push(alarm.clone());
            shared.broadcast(StreamMessage::Alarm(alarm));
        }
    }
    state.last_row = tail.last_row();
    batch.more
}

/// Loads the bundle, binds the HTTP server and runs the poll loop until
/// `shutdown` resolves.
pub async fn serve(config: MonitorConfig, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<Snapshot> {
    let shared = Shared::load(&config)?;
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    serve_on(shared, config, listener, shutdown).await
}

/// Like [`serve`] with an already loaded state and bound listener.
pub async fn serve_on(
    shared: Arc<Shared>,
    config: MonitorConfig,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<Snapshot> {
    let (stop_tx, stop_rx) = watch::channel(false);
    tokio::spawn(async move {
        shutdown.await;
        let _ = stop_tx.send(true);
    });
    let app = crate::http::router(shared.clone());
    let mut server_stop = stop_rx.clone();
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = server_stop.wait_for(|s| *s).await;
            })
            .await
    });
    let snap = run_loop(shared, &config, stop_rx).await;
    server.abort();
    Ok(snap)
}
