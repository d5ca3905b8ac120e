#![allow(dead_code)]

use std::io::Write;
use std::path::Path;

use ocae_core::preprocess::{write_csv, ChannelScaler, CSV_HEADER};
use ocae_core::{DetectorBundle, Layout, SensorFrame, Threshold};

/// Zero model with an identity scaler: every frame reconstructs to 0.5, so
/// a frame of 0.5s scores 0 and a frame of 1.0s scores 0.25.
pub fn scripted_bundle() -> DetectorBundle {
    let model = ocae_core::Autoencoder::zeros(Layout::ChannelToken, 8).unwrap();
    let scaler = ChannelScaler::new([0.0; 7], [1.0; 7]).unwrap();
    DetectorBundle::new(&model, scaler, Threshold::fixed(0.1)).unwrap()
}

pub fn frame(seq: u64, anomaly: bool) -> SensorFrame {
    SensorFrame {
        timestamp: format!("2025-01-01T00:00:{:02}.000Z", seq % 60),
        seq,
        channels: [if anomaly { 1.0 } else { 0.5 }; 7],
    }
}

pub fn line(f: &SensorFrame) -> String {
    f.to_cells().join(",") + "\n"
}

pub fn write_frames(path: &Path, frames: &[SensorFrame]) {
    let file = std::fs::File::create(path).unwrap();
    write_csv(file, frames.iter().map(|f| f.to_cells())).unwrap();
}

pub fn append(path: &Path, text: &str) {
    let mut f = std::fs::OpenOptions::new().append(true).create(true).open(path).unwrap();
    f.write_all(text.as_bytes()).unwrap();
}

pub fn header() -> String {
    format!("{CSV_HEADER}\n")
}
