//! Synthetic seven-channel streams, fault injection and detection metrics.

mod generator;
mod inject;
mod metrics;

pub use generator::{
    generate, ChannelProfile, EventProfile, GeneratorConfig, DEFAULT_CONFIG_JSON, MAX_RATE_HZ,
    MIN_RATE_HZ,
};
pub use inject::{
    inject_anomalies, inject_corruption, CorruptedStream, LabeledStream, Magnitude,
    PERTURBED_CHANNELS, PROBE_ERROR_TEXT,
};
pub use metrics::{evaluate, parse_labels, read_labels, runs_detected, write_labels, Metrics};
