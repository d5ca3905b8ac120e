use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AttentionAutoencoder, Gradients};
use crate::error::{Error, Result};
use crate::preprocess::{Channels, N_CHANNELS};
use crate::scalar::Scalar;

pub const MIN_TRAIN_ROWS: usize = 20;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Minimum validation-loss decrease that counts as progress.
const IMPROVEMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Consecutive non-improving epochs before stopping; 0 disables early stopping.
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
    /// When false the attention parameters stay at their initial values.
    pub train_attention: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            learning_rate: 7e-4,
            epochs: 10,
            patience: 5,
            val_fraction: 0.10,
            seed: 42,
            train_attention: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be positive".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }

    /// Number of rows held out for validation out of `n`.
    pub fn val_count(&self, n: usize) -> usize {
        (self.val_fraction * n as f64).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Weights from the epoch with the lowest validation loss.
    pub model: AttentionAutoencoder<T>,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
    lr: T,
}

impl<T: Scalar> Adam<T> {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
            lr: T::of(lr),
        }
    }

    fn update(&mut self, model: &mut AttentionAutoencoder<T>, grads: &Gradients<T>, frozen: &[bool; 12]) {
        self.step += 1;
        let b1 = T::of(ADAM_BETA1);
        let b2 = T::of(ADAM_BETA2);
        let eps = T::of(ADAM_EPS);
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        let mut k = 0;
        for ((params, g), skip) in model.slices_mut().into_iter().zip(grads.slices()).zip(frozen) {
            for (p, gi) in params.iter_mut().zip(g) {
                if !*skip {
                    let m = &mut self.m[k];
                    let v = &mut self.v[k];
                    *m = b1 * *m + (T::one() - b1) * *gi;
                    *v = b2 * *v + (T::one() - b2) * *gi * *gi;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= self.lr * m_hat / (v_hat.sqrt() + eps);
                }
                k += 1;
            }
        }
    }
}

fn to_scalar<T: Scalar>(row: &Channels) -> [T; N_CHANNELS] {
    std::array::from_fn(|i| T::of(row[i]))
}

/// Mean reconstruction loss over `rows`.
pub(crate) fn mean_loss<T: Scalar>(model: &AttentionAutoencoder<T>, rows: &[[T; N_CHANNELS]]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let total: f64 = rows
        .iter()
        .map(|x| super::mse(x, &model.forward_unchecked(x).x_hat).as_f64())
        .sum();
    total / rows.len() as f64
}

/// Trains on scaled normal rows with Adam and validation-based early stopping.
///
/// The rows are shuffled once with the seeded RNG; the last
/// `⌈val_fraction·N⌉` of that order is the validation split. Each epoch
/// reshuffles the training split. Deterministic for a fixed seed.
pub fn train<T: Scalar>(
    mut model: AttentionAutoencoder<T>,
    data: &[Channels],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if data.len() < MIN_TRAIN_ROWS {
        return Err(Error::InsufficientData {
            needed: MIN_TRAIN_ROWS,
            got: data.len(),
        });
    }
    let n_val = cfg.val_count(data.len());
    if n_val >= data.len() {
        return Err(Error::InvalidArgument(format!(
            "val_fraction {} leaves no training rows",
            cfg.val_fraction
        )));
    }
    if let Some(i) = data.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidArgument(format!("non-finite value in row {i}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let (train_idx, val_idx) = order.split_at(data.len() - n_val);
    let mut train_rows: Vec<[T; N_CHANNELS]> = train_idx.iter().map(|&i| to_scalar(&data[i])).collect();
    let val_rows: Vec<[T; N_CHANNELS]> = val_idx.iter().map(|&i| to_scalar(&data[i])).collect();

    let mut frozen = [false; 12];
    if !cfg.train_attention {
        frozen[2] = true;
        frozen[3] = true;
    }

    let mut adam = Adam::new(model.param_count(), cfg.learning_rate);
    let mut grads = Gradients::zeros_for(&model);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, AttentionAutoencoder<T>, usize)> = None;
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        train_rows.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_rows.chunks(cfg.batch_size) {
            grads.clear();
            let scale = T::one() / T::of(batch.len() as f64);
            for x in batch {
                let trace = model.forward_unchecked(x);
                epoch_loss += model.accumulate_gradients(x, &trace, scale, &mut grads).as_f64();
            }
            adam.update(&mut model, &grads, &frozen);
        }
        let train_loss = epoch_loss / train_rows.len() as f64;
        let val_loss = mean_loss(&model, &val_rows);
        if !train_loss.is_finite() || !val_loss.is_finite() || !model.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(EpochLoss {
            epoch,
            train_loss,
            val_loss,
        });
        log::debug!("epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e}");

        let improved = best
            .as_ref()
            .is_none_or(|(b, _, _)| val_loss < b - IMPROVEMENT_TOL);
        if improved {
            best = Some((val_loss, model.clone(), epoch));
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                stopped_early = epoch < cfg.epochs;
                break;
            }
        }
    }

    let (best_val_loss, model, best_epoch) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_val_loss,
        stopped_early,
    })
}
