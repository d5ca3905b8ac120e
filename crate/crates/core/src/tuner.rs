//! Seeded random search over the autoencoder's hyper-parameter grid.
//!
//! Every trial draws from its own RNG seeded with `seed + trial_index`, so
//! trials are independent and may run in parallel; results are kept in
//! trial order and ties go to the earlier trial.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{train, AttentionAutoencoder, EpochLoss, Layout, TrainConfig, MIN_TRAIN_ROWS};
use crate::error::{Error, Result};
use crate::preprocess::Channels;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub hidden_dims: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub lr_min: f64,
    pub lr_max: f64,
    pub epochs: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            hidden_dims: (16..=128).step_by(16).collect(),
            batch_sizes: (16..=64).step_by(16).collect(),
            lr_min: 1e-4,
            lr_max: 1e-2,
            epochs: (5..=50).step_by(5).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialParams {
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("search space: {m}")));
        if self.hidden_dims.is_empty() || self.batch_sizes.is_empty() || self.epochs.is_empty() {
            return bad("every grid needs at least one value");
        }
        if self.hidden_dims.iter().any(|d| *d == 0 || d % 2 != 0) {
            return bad("hidden dims must be even and positive");
        }
        if self.batch_sizes.contains(&0) || self.epochs.contains(&0) {
            return bad("batch sizes and epochs must be positive");
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max) {
            return bad("learning-rate interval must be positive and ordered");
        }
        Ok(())
    }

    /// Uniform over each grid, log-uniform over the learning-rate interval.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TrialParams {
        let pick = |rng: &mut R, grid: &[usize]| grid[rng.random_range(0..grid.len())];
        let hidden_dim = pick(rng, &self.hidden_dims);
        let batch_size = pick(rng, &self.batch_sizes);
        let learning_rate = if self.lr_min == self.lr_max {
            self.lr_min
        } else {
            let (lo, hi) = (self.lr_min.ln(), self.lr_max.ln());
            rng.random_range(lo..hi).exp().clamp(self.lr_min, self.lr_max)
        };
        let epochs = pick(rng, &self.epochs);
        TrialParams {
            hidden_dim,
            batch_size,
            learning_rate,
            epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub n_trials: usize,
    pub seed: u64,
    pub patience: usize,
    pub val_fraction: f64,
    pub layout: Layout,
    pub space: SearchSpace,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            n_trials: 10,
            seed: 42,
            patience: 5,
            val_fraction: 0.10,
            layout: Layout::ChannelToken,
            space: SearchSpace::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub params: TrialParams,
    /// Minimum validation loss over the history; `+∞` for a diverged trial.
    pub val_loss: f64,
    pub history: Vec<EpochLoss>,
}

impl TrialResult {
    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }

    pub fn diverged(&self) -> bool {
        self.val_loss.is_infinite()
    }
}

/// One entry of the JSON tuning report. A diverged trial has `val_loss: null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub params: TrialParams,
    pub val_loss: Option<f64>,
    pub epochs_run: usize,
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub best: TrialParams,
    pub best_trial: usize,
    pub trials: Vec<TrialResult>,
}

impl TuneOutcome {
    pub fn report(&self) -> Vec<TrialReport> {
        self.trials
            .iter()
            .map(|t| TrialReport {
                trial: t.trial,
                params: t.params,
                val_loss: t.val_loss.is_finite().then_some(t.val_loss),
                epochs_run: t.epochs_run(),
            })
            .collect()
    }

    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&self.report()).expect("report serializes")
    }
}

/// Seeds used by trial `index`: the parameter draw, model init and training.
fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64))
}

pub fn run_trial(data: &[Channels], cfg: &TuneConfig, index: usize) -> Result<TrialResult> {
    let mut rng = trial_rng(cfg.seed, index);
    let params = cfg.space.sample(&mut rng);
    let init_seed = rng.next_u64();
    let train_seed = rng.next_u64();
    let model = AttentionAutoencoder::<f64>::with_layout(cfg.layout, params.hidden_dim, init_seed)?;
    let train_cfg = TrainConfig {
        batch_size: params.batch_size,
        learning_rate: params.learning_rate,
        epochs: params.epochs,
        patience: cfg.patience,
        val_fraction: cfg.val_fraction,
        seed: train_seed,
        train_attention: true,
    };
    match train(model, data, &train_cfg) {
        Ok(outcome) => {
            let val_loss = outcome
                .history
                .iter()
                .map(|e| e.val_loss)
                .fold(f64::INFINITY, f64::min);
            Ok(TrialResult {
                trial: index,
                params,
                val_loss,
                history: outcome.history,
            })
        }
        Err(Error::Divergence { epoch }) => {
            log::warn!("trial {index} diverged at epoch {epoch}");
            Ok(TrialResult {
                trial: index,
                params,
                val_loss: f64::INFINITY,
                history: Vec::new(),
            })
        }
        Err(e) => Err(e),
    }
}

/// Index of the lowest validation loss, earliest on ties.
pub fn select_best(trials: &[TrialResult]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, t) in trials.iter().enumerate() {
        match best {
            Some(b) if !(t.val_loss < trials[b].val_loss) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Runs `n_trials` seeded trials and returns the best parameters.
pub fn tune(data: &[Channels], cfg: &TuneConfig) -> Result<TuneOutcome> {
    cfg.space.validate()?;
    if cfg.n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
    }
    if data.len() < MIN_TRAIN_ROWS {
        return Err(Error::InsufficientData {
            needed: MIN_TRAIN_ROWS,
            got: data.len(),
        });
    }
    let trials = (0..cfg.n_trials)
        .into_par_iter()
        .map(|i| run_trial(data, cfg, i))
        .collect::<Result<Vec<_>>>()?;
    let best_trial = select_best(&trials).expect("at least one trial");
    if trials[best_trial].diverged() {
        return Err(Error::Divergence { epoch: 0 });
    }
    Ok(TuneOutcome {
        best: trials[best_trial].params,
        best_trial,
        trials,
    })
}
