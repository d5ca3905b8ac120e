use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, TimeDelta, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{SensorFrame, N_CHANNELS};

/// Checked-in default parameters.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../../config/generator.json");

pub const MIN_RATE_HZ: f64 = 0.5;
pub const MAX_RATE_HZ: f64 = 1.0;

/// One channel: `mean + drift·sin(2πt/period_s) + cycle·sin(2πt/cycle_period_s) + N(0, sigma²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    #[serde(default)]
    pub name: String,
    pub mean: f64,
    pub sigma: f64,
    pub drift: f64,
    pub period_s: f64,
    /// Amplitude of a short process cycle (stirrer, heater, dosing pump).
    #[serde(default)]
    pub cycle: f64,
    #[serde(default)]
    pub cycle_period_s: f64,
    /// Output resolution in decimal places.
    #[serde(default = "default_decimals")]
    pub decimals: u32,
}

fn default_decimals() -> u32 {
    4
}

/// A recurring process step such as stirring or a reagent addition.
///
/// Each occurrence adds `offsets` to the channels and decays back with time
/// constant `decay_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventProfile {
    pub name: String,
    pub rate_per_hour: f64,
    pub decay_s: f64,
    pub offsets: [f64; N_CHANNELS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub rate_hz: f64,
    pub seed: u64,
    /// RFC 3339 timestamp of the first row.
    pub start: String,
    pub channels: [ChannelProfile; N_CHANNELS],
    #[serde(default)]
    pub events: Vec<EventProfile>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::from_json(DEFAULT_CONFIG_JSON).expect("bundled generator config is valid")
    }
}

impl GeneratorConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_RATE_HZ..=MAX_RATE_HZ).contains(&self.rate_hz) {
            return Err(Error::InvalidArgument(format!(
                "rate_hz must lie in [{MIN_RATE_HZ}, {MAX_RATE_HZ}], got {}",
                self.rate_hz
            )));
        }
        for (i, c) in self.channels.iter().enumerate() {
            if !(c.sigma >= 0.0) || !c.mean.is_finite() || !c.drift.is_finite() {
                return Err(Error::InvalidArgument(format!("channel {i}: invalid profile")));
            }
            if c.drift != 0.0 && !(c.period_s > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "channel {i}: drift needs a positive period"
                )));
            }
            if !c.cycle.is_finite() || (c.cycle != 0.0 && !(c.cycle_period_s > 0.0)) {
                return Err(Error::InvalidArgument(format!(
                    "channel {i}: cycle needs a positive period"
                )));
            }
        }
        for e in &self.events {
            if !(e.rate_per_hour >= 0.0) || !(e.decay_s > 0.0) {
                return Err(Error::InvalidArgument(format!("event {}: invalid profile", e.name)));
            }
        }
        self.start_time()?;
        Ok(())
    }

    fn start_time(&self) -> Result<DateTime<Utc>> {
        DateTime::parse_from_rfc3339(&self.start)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| Error::InvalidArgument(format!("start timestamp {:?}: {e}", self.start)))
    }
}

fn round_to(v: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (v * scale).round() / scale
}

/// Generates `n_rows` normal frames spaced `1/rate_hz` seconds apart.
pub fn generate(cfg: &GeneratorConfig, n_rows: usize) -> Result<Vec<SensorFrame>> {
    cfg.validate()?;
    if n_rows == 0 {
        return Err(Error::InvalidArgument("n_rows must be at least 1".into()));
    }
    let start = cfg.start_time()?;
    let dt = 1.0 / cfg.rate_hz;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise: Vec<Normal<f64>> = cfg
        .channels
        .iter()
        .map(|c| Normal::new(0.0, c.sigma).expect("sigma validated"))
        .collect();
    let event_p: Vec<f64> = cfg
        .events
        .iter()
        .map(|e| (e.rate_per_hour * dt / 3600.0).min(1.0))
        .collect();
    // Active event offsets decay geometrically each row.
    let mut active = [0.0; N_CHANNELS];
    let decay: Vec<f64> = cfg.events.iter().map(|e| (-dt / e.decay_s).exp()).collect();
    let mut per_event = vec![[0.0; N_CHANNELS]; cfg.events.len()];

    let mut frames = Vec::with_capacity(n_rows);
    for seq in 0..n_rows {
        let t = seq as f64 * dt;
        active.fill(0.0);
        for (k, ev) in cfg.events.iter().enumerate() {
            for v in per_event[k].iter_mut() {
                *v *= decay[k];
            }
            if rng.random_bool(event_p[k]) {
                for (v, o) in per_event[k].iter_mut().zip(&ev.offsets) {
                    *v += o;
                }
            }
            for (a, v) in active.iter_mut().zip(&per_event[k]) {
                *a += v;
            }
        }
        let channels = std::array::from_fn(|i| {
            let c = &cfg.channels[i];
            let drift = if c.drift != 0.0 {
                c.drift * (2.0 * PI * t / c.period_s).sin()
            } else {
                0.0
            };
            let cycle = if c.cycle != 0.0 {
                c.cycle * (2.0 * PI * t / c.cycle_period_s).sin()
            } else {
                0.0
            };
            let n = if c.sigma > 0.0 { noise[i].sample(&mut rng) } else { 0.0 };
            round_to(c.mean + drift + cycle + n + active[i], c.decimals)
        });
        let ts = start + TimeDelta::milliseconds((t * 1000.0).round() as i64);
        frames.push(SensorFrame {
            timestamp: ts.to_rfc3339_opts(SecondsFormat::Millis, true),
            seq: seq as u64,
            channels,
        });
    }
    Ok(frames)
}
