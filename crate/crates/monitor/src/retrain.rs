//! One-shot retraining: collect → tune → train → deploy.

use std::path::{Path, PathBuf};

use ocae_core::pipeline::{fit_detector, scale_all, PipelinePlan};
use ocae_core::preprocess::{fit_scaler, load_frames};
use ocae_core::store::load_bundle;
use ocae_core::tuner::{tune, TuneConfig};
use ocae_core::{DetectorBundle, TrainConfig};
use serde::{Deserialize, Serialize};

/// Fewest cleaned rows a retrain accepts. Shorter recordings give a
/// narrow normal region and over-flag; 2000 rows (30 min at 1 Hz) is the
/// recommended size.
pub const MIN_RETRAIN_ROWS: usize = 500;
pub const RECOMMENDED_ROWS: usize = 2000;
pub const DEFAULT_TRIALS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Collecting,
    Tuning,
    Training,
    Deploying,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainRequest {
    pub csv_path: PathBuf,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainJob {
    pub job_id: u64,
    pub state: JobState,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub bundle_dir: Option<PathBuf>,
    pub model_id: Option<String>,
    pub error: Option<String>,
}

impl RetrainJob {
    pub fn new(job_id: u64, started_at: String) -> Self {
        Self {
            job_id,
            state: JobState::Collecting,
            started_at,
            finished_at: None,
            bundle_dir: None,
            model_id: None,
            error: None,
        }
    }
}

/// Runs a retrain to completion on the calling thread, reporting each
/// state change. The new bundle goes to a fresh directory under `root`
/// and is reloaded from disk before it is returned.
pub fn run_retrain(
    req: &RetrainRequest,
    root: &Path,
    job_id: u64,
    mut on_state: impl FnMut(JobState),
) -> Result<(PathBuf, DetectorBundle), String> {
    on_state(JobState::Collecting);
    let (frames, report) =
        load_frames(&req.csv_path).map_err(|e| format!("{}: {e}", req.csv_path.display()))?;
    if frames.len() < MIN_RETRAIN_ROWS {
        return Err(format!(
            "insufficient data: {} cleaned rows, need at least {MIN_RETRAIN_ROWS}",
            frames.len()
        ));
    }
    if frames.len() < RECOMMENDED_ROWS {
        log::warn!(
            "retrain on {} rows; at least {RECOMMENDED_ROWS} are recommended",
            frames.len()
        );
    }
    log::info!("job {job_id}: {} rows kept of {}", report.rows_out, report.rows_in);

    let seed = req.seed.unwrap_or(TrainConfig::default().seed);
    let trials = req.trials.unwrap_or(DEFAULT_TRIALS);
    let mut plan = PipelinePlan {
        train: TrainConfig {
            seed,
            ..TrainConfig::default()
        },
        ..PipelinePlan::default()
    };
    if trials > 0 {
        on_state(JobState::Tuning);
        let scaler = fit_scaler(&frames).map_err(|e| e.to_string())?;
        let cfg = TuneConfig {
            n_trials: trials,
            seed,
            ..TuneConfig::default()
        };
        let best = tune(&scale_all(&scaler, &frames), &cfg)
            .map_err(|e| format!("tuning failed: {e}"))?
            .best;
        plan.hidden_dim = best.hidden_dim;
        plan.train.batch_size = best.batch_size;
        plan.train.learning_rate = best.learning_rate;
        plan.train.epochs = best.epochs;
    }

    on_state(JobState::Training);
    let fitted = fit_detector(&frames, &plan).map_err(|e| format!("training failed: {e}"))?;

    on_state(JobState::Deploying);
    let dir = fresh_dir(root, job_id).map_err(|e| e.to_string())?;
    fitted.bundle.save(&dir).map_err(|e| e.to_string())?;
    let bundle = load_bundle(&dir).map_err(|e| format!("written bundle does not load: {e}"))?;
    Ok((dir, bundle))
}

fn fresh_dir(root: &Path, job_id: u64) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(root)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S");
    for n in 0.. {
        let dir = root.join(format!("job{job_id}-{stamp}-{n}"));
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}
