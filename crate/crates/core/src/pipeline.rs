//! Clean → scale → (tune) → train → calibrate → bundle.

use std::path::Path;

use serde::Serialize;

use crate::autoencoder::{train, AttentionAutoencoder, EpochLoss, Layout, TrainConfig};
use crate::detector::{calibrate, reconstruction_errors, Threshold};
use crate::error::{Error, Result};
use crate::preprocess::{fit_scaler, load_frames, ChannelScaler, Channels, CleanReport, SensorFrame};
use crate::store::{BundleFiles, DetectorBundle};
use crate::tuner::{tune, TrialParams, TrialReport, TuneConfig};

#[derive(Debug, Clone)]
pub struct PipelinePlan {
    pub layout: Layout,
    pub hidden_dim: usize,
    /// Training settings; `seed` also seeds model initialisation.
    pub train: TrainConfig,
    /// When set, the search result replaces hidden_dim, batch size,
    /// learning rate and epochs.
    pub tune: Option<TuneConfig>,
    /// Minimum number of cleaned rows.
    pub min_rows: usize,
}

impl Default for PipelinePlan {
    fn default() -> Self {
        Self {
            layout: Layout::ChannelToken,
            hidden_dim: 64,
            train: TrainConfig::default(),
            tune: None,
            min_rows: crate::autoencoder::MIN_TRAIN_ROWS,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub clean: Option<CleanReport>,
    pub rows: usize,
    pub params: TrialParams,
    pub tuning: Option<Vec<TrialReport>>,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
    pub threshold: Threshold,
    pub model_id: String,
    pub param_count: usize,
}

/// A trained detector before it is written to disk.
#[derive(Debug, Clone)]
pub struct FittedDetector {
    /// Training-precision weights.
    pub model: AttentionAutoencoder<f64>,
    /// Deployable form; the threshold is calibrated on this f32 model.
    pub bundle: DetectorBundle,
    pub report: PipelineReport,
}

pub fn scale_all(scaler: &ChannelScaler, frames: &[SensorFrame]) -> Vec<Channels> {
    frames.iter().map(|f| scaler.transform_frame(f)).collect()
}

/// Runs the whole pipeline on already-cleaned frames.
pub fn fit_detector(frames: &[SensorFrame], plan: &PipelinePlan) -> Result<FittedDetector> {
    if frames.len() < plan.min_rows {
        return Err(Error::InsufficientData {
            needed: plan.min_rows,
            got: frames.len(),
        });
    }
    let scaler = fit_scaler(frames)?;
    let scaled = scale_all(&scaler, frames);

    let (params, tuning) = match &plan.tune {
        Some(tcfg) => {
            let tcfg = TuneConfig {
                layout: plan.layout,
                patience: plan.train.patience,
                val_fraction: plan.train.val_fraction,
                ..tcfg.clone()
            };
            let outcome = tune(&scaled, &tcfg)?;
            (outcome.best, Some(outcome.report()))
        }
        None => (
            TrialParams {
                hidden_dim: plan.hidden_dim,
                batch_size: plan.train.batch_size,
                learning_rate: plan.train.learning_rate,
                epochs: plan.train.epochs,
            },
            None,
        ),
    };

    let cfg = TrainConfig {
        batch_size: params.batch_size,
        learning_rate: params.learning_rate,
        epochs: params.epochs,
        ..plan.train.clone()
    };
    let mut init = AttentionAutoencoder::<f64>::with_layout(plan.layout, params.hidden_dim, cfg.seed)?;
    if !cfg.train_attention {
        init = init.without_attention();
    }
    let outcome = train(init, &scaled, &cfg)?;

    // Calibrate on every cleaned row, scored by the model as deployed.
    let provisional = DetectorBundle::new(&outcome.model, scaler.clone(), Threshold::fallback())?;
    let errors = reconstruction_errors(&provisional.model, &scaler, frames)?;
    let threshold = calibrate(&errors)?;
    let bundle = DetectorBundle {
        threshold,
        ..provisional
    };

    let report = PipelineReport {
        clean: None,
        rows: frames.len(),
        params,
        tuning,
        history: outcome.history,
        best_epoch: outcome.best_epoch,
        threshold,
        model_id: bundle.model_id.clone(),
        param_count: outcome.model.param_count(),
    };
    Ok(FittedDetector {
        model: outcome.model,
        bundle,
        report,
    })
}

/// Reads a sensor CSV, fits a detector and writes the bundle to `out_dir`.
pub fn train_from_csv(
    csv: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    plan: &PipelinePlan,
) -> Result<(FittedDetector, BundleFiles)> {
    let (frames, clean) = load_frames(csv)?;
    log::info!(
        "cleaned {} rows: {} kept, {} sentinel, {} non-numeric",
        clean.rows_in,
        clean.rows_out,
        clean.rows_dropped_sentinel,
        clean.rows_dropped_nonnumeric
    );
    let mut fitted = fit_detector(&frames, plan)?;
    fitted.report.clean = Some(clean);
    let files = fitted.bundle.save(out_dir)?;
    Ok((fitted, files))
}
