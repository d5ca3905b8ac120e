//! Reconstruction-error scoring and the mean + 2σ decision threshold.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoencoder::AttentionAutoencoder;
use crate::error::{Error, Result};
use crate::preprocess::{ChannelScaler, SensorFrame, N_CHANNELS};
use crate::scalar::Scalar;

/// Threshold used by the monitor when no threshold file is deployed.
pub const DEFAULT_THRESHOLD: f64 = 0.02;

/// Decision threshold on the reconstruction error.
///
/// `n` is the number of calibration errors; `n == 0` marks a threshold that
/// was read from text or defaulted rather than calibrated here, in which case
/// `mean == value` and `std == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Threshold {
    pub fn fixed(value: f64) -> Self {
        Self {
            value,
            mean: value,
            std: 0.0,
            n: 0,
        }
    }

    pub fn fallback() -> Self {
        Self::fixed(DEFAULT_THRESHOLD)
    }

    pub fn is_calibrated(&self) -> bool {
        self.n >= 2
    }

    /// File form: the decimal value and a newline.
    pub fn to_text(&self) -> String {
        format!("{}\n", self.value)
    }

    /// Lenient parse: surrounding whitespace is ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        let value: f64 = t
            .parse()
            .map_err(|_| Error::Schema(format!("threshold is not a number: {t:?}")))?;
        if !value.is_finite() || value < 0.0 {
            return Err(Error::Schema(format!(
                "threshold must be finite and non-negative, got {value}"
            )));
        }
        Ok(Self::fixed(value))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// Sets the threshold at mean + 2·(population std) of `errors`.
pub fn calibrate(errors: &[f64]) -> Result<Threshold> {
    let n = errors.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if let Some(bad) = errors.iter().find(|e| !e.is_finite() || **e < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "reconstruction errors must be finite and non-negative, got {bad}"
        )));
    }
    // Welford; exact for constant input.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &e) in errors.iter().enumerate() {
        let delta = e - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (e - mean);
    }
    let std = (m2 / n as f64).sqrt();
    Ok(Threshold {
        value: mean + 2.0 * std,
        mean,
        std,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub score: f64,
    pub is_anomaly: bool,
}

/// Strictly greater than the threshold is anomalous.
pub fn classify(score: f64, threshold: &Threshold) -> Verdict {
    Verdict {
        score,
        is_anomaly: score > threshold.value,
    }
}

/// Scaled model input for a frame.
pub fn scaled_input<T: Scalar>(scaler: &ChannelScaler, frame: &SensorFrame) -> [T; N_CHANNELS] {
    let scaled = scaler.transform_frame(frame);
    std::array::from_fn(|i| T::of(scaled[i]))
}

/// Reconstruction error of one frame.
pub fn score<T: Scalar>(
    model: &AttentionAutoencoder<T>,
    scaler: &ChannelScaler,
    frame: &SensorFrame,
) -> Result<f64> {
    Ok(model.score(&scaled_input(scaler, frame))?.as_f64())
}

pub fn reconstruction_errors<T: Scalar>(
    model: &AttentionAutoencoder<T>,
    scaler: &ChannelScaler,
    frames: &[SensorFrame],
) -> Result<Vec<f64>> {
    frames.iter().map(|f| score(model, scaler, f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::Layout;
    use proptest::prelude::*;

    #[test]
    fn calibrate_constant() {
        let t = calibrate(&[0.1, 0.1, 0.1]).unwrap();
        assert_eq!(t.std, 0.0);
        assert_eq!(t.value, 0.1);
    }

    #[test]
    fn calibrate_two_points() {
        let t = calibrate(&[0.0, 0.2]).unwrap();
        assert!((t.mean - 0.1).abs() < 1e-12);
        assert!((t.std - 0.1).abs() < 1e-12);
        assert!((t.value - 0.3).abs() < 1e-12);
        assert_eq!(t.n, 2);
    }

    #[test]
    fn calibrate_needs_two() {
        assert!(matches!(
            calibrate(&[0.5]),
            Err(Error::InsufficientData { needed: 2, got: 1 })
        ));
        assert!(calibrate(&[]).is_err());
    }

    #[test]
    fn classify_is_strict() {
        let t = Threshold::fixed(0.02);
        assert!(!classify(0.01, &t).is_anomaly);
        assert!(classify(0.05, &t).is_anomaly);
        assert!(!classify(0.02, &t).is_anomaly);
    }

    #[test]
    fn threshold_text_is_lenient() {
        assert_eq!(Threshold::parse("0.132\n").unwrap().value, 0.132);
        assert_eq!(Threshold::parse("  0.5 \r\n\t").unwrap().value, 0.5);
        assert!(Threshold::parse("abc").is_err());
        assert!(Threshold::parse("-1").is_err());
        let t = calibrate(&[0.013, 0.2 / 3.0, 0.04]).unwrap();
        assert_eq!(Threshold::parse(&t.to_text()).unwrap().value, t.value);
    }

    #[test]
    fn zero_model_scores_zero_at_mid_range() {
        let m = AttentionAutoencoder::<f64>::zeros(Layout::ChannelToken, 8).unwrap();
        let scaler = ChannelScaler::new([0.0; 7], [2.0; 7]).unwrap();
        let f = SensorFrame {
            timestamp: "t".into(),
            seq: 0,
            channels: [1.0; 7],
        };
        assert_eq!(score(&m, &scaler, &f).unwrap(), 0.0);
    }

    #[test]
    fn score_is_pure_and_composes() {
        let m = AttentionAutoencoder::<f64>::new(16, 4).unwrap();
        let scaler = ChannelScaler::new([6.0, 20.0, 1000.0, 18.0, 30.0, 400.0, 100.0], [8.0, 30.0, 2000.0, 28.0, 60.0, 800.0, 600.0]).unwrap();
        let f = SensorFrame {
            timestamp: "t".into(),
            seq: 3,
            channels: [7.1, 24.0, 1480.0, 22.5, 41.0, 455.0, 320.0],
        };
        let a = score(&m, &scaler, &f).unwrap();
        assert_eq!(a, score(&m, &scaler, &f.clone()).unwrap());
        let x = scaler.transform(&f.channels);
        let x_hat = m.forward(&x).unwrap().x_hat;
        let manual: f64 = x.iter().zip(&x_hat).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / 7.0;
        assert_eq!(a, manual);
    }

    proptest! {
        #[test]
        fn calibrate_at_least_mean_and_permutation_invariant(
            mut errs in prop::collection::vec(0.0..1.0f64, 2..50), k in 0usize..50
        ) {
            let a = calibrate(&errs).unwrap();
            prop_assert!(a.value >= a.mean);
            let n = errs.len();
            errs.rotate_left(k % n);
            let b = calibrate(&errs).unwrap();
            prop_assert!((a.value - b.value).abs() <= 1e-12 * a.value.max(1.0));
        }
    }
}
