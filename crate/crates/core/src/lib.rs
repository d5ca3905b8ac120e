//! Attention one-class autoencoder pipeline for seven-channel liquid sensors.
//!
//! Collect normal readings, scrub and scale them, train the autoencoder,
//! fix a reconstruction-error threshold, and ship the result as a
//! three-file [`store::DetectorBundle`].

pub mod autoencoder;
pub mod detector;
pub mod error;
pub mod pipeline;
pub mod preprocess;
pub mod scalar;
pub mod simgen;
pub mod store;
pub mod tuner;

pub use autoencoder::{AttentionAutoencoder, Layout, TrainConfig};
pub use detector::{calibrate, classify, Threshold, Verdict};
pub use error::{Error, Result};
pub use preprocess::{ChannelScaler, SensorFrame, N_CHANNELS};
pub use scalar::Scalar;
pub use store::{load_bundle, DetectorBundle};

/// Training-precision model.
pub type Autoencoder = AttentionAutoencoder<f64>;
/// Deployment-precision model, as stored in `model.ocae`.
pub type Autoencoder32 = AttentionAutoencoder<f32>;
