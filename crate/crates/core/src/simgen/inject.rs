use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::preprocess::{SensorFrame, N_CHANNELS, SENTINEL};

/// Channels that receive micro-perturbations: pH and conductivity.
pub const PERTURBED_CHANNELS: [usize; 2] = [0, 2];

pub const PROBE_ERROR_TEXT: &str = "DS18B20 error: not connected";

/// Frames with per-row ground-truth anomaly flags.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream {
    pub frames: Vec<SensorFrame>,
    pub labels: Vec<bool>,
}

impl LabeledStream {
    pub fn normal(frames: Vec<SensorFrame>) -> Self {
        let labels = vec![false; frames.len()];
        Self { frames, labels }
    }

    pub fn anomaly_count(&self) -> usize {
        self.labels.iter().filter(|l| **l).count()
    }
}

/// Relative perturbation size: a single value or a `lo..hi` range sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Magnitude {
    pub lo: f64,
    pub hi: f64,
}

impl Magnitude {
    pub fn fixed(m: f64) -> Self {
        Self { lo: m, hi: m }
    }

    pub fn range(lo: f64, hi: f64) -> Result<Self> {
        let m = Self { lo, hi };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0 && self.lo <= self.hi && self.hi < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "magnitude must satisfy 0 < lo <= hi < 1, got {self}"
            )));
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

impl Default for Magnitude {
    fn default() -> Self {
        Self { lo: 0.02, hi: 0.03 }
    }
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lo == self.hi {
            write!(f, "{}", self.lo)
        } else {
            write!(f, "{}..{}", self.lo, self.hi)
        }
    }
}

impl FromStr for Magnitude {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad magnitude {s:?}")))
        };
        let m = match s.split_once("..") {
            Some((lo, hi)) => Self { lo: parse(lo)?, hi: parse(hi)? },
            None => Self::fixed(parse(s)?),
        };
        m.validate()?;
        Ok(m)
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("rate must lie in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Perturbs a seeded Bernoulli(`rate`) subset of rows on pH or conductivity
/// by `±magnitude × value`, in native units.
pub fn inject_anomalies(
    frames: &[SensorFrame],
    rate: f64,
    magnitude: Magnitude,
    seed: u64,
) -> Result<LabeledStream> {
    check_rate(rate)?;
    magnitude.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = LabeledStream::normal(frames.to_vec());
    if rate == 0.0 {
        return Ok(out);
    }
    for (frame, label) in out.frames.iter_mut().zip(out.labels.iter_mut()) {
        if !rng.random_bool(rate) {
            continue;
        }
        let ch = PERTURBED_CHANNELS[rng.random_range(0..PERTURBED_CHANNELS.len())];
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let m = magnitude.sample(&mut rng);
        frame.channels[ch] *= 1.0 + sign * m;
        *label = true;
    }
    Ok(out)
}

/// A stream rendered to CSV cells, some of them corrupted.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedStream {
    pub rows: Vec<Vec<String>>,
    pub labels: Vec<bool>,
    pub corrupted: Vec<bool>,
}

impl CorruptedStream {
    pub fn corrupted_count(&self) -> usize {
        self.corrupted.iter().filter(|c| **c).count()
    }
}

/// Replaces one channel cell on a seeded subset of rows with the saturation
/// sentinel or a probe error message. With `protect_labels`, anomalous rows
/// are never corrupted.
pub fn inject_corruption(
    stream: &LabeledStream,
    rate: f64,
    seed: u64,
    protect_labels: bool,
) -> Result<CorruptedStream> {
    check_rate(rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(stream.frames.len());
    let mut corrupted = Vec::with_capacity(stream.frames.len());
    for (frame, &label) in stream.frames.iter().zip(&stream.labels) {
        let mut cells = frame.to_cells();
        let hit = rate > 0.0 && rng.random_bool(rate);
        let hit = hit && !(protect_labels && label);
        if hit {
            let ch = rng.random_range(0..N_CHANNELS);
            let text = if rng.random_bool(0.5) { SENTINEL } else { PROBE_ERROR_TEXT };
            cells[2 + ch] = text.to_owned();
        }
        rows.push(cells);
        corrupted.push(hit);
    }
    Ok(CorruptedStream {
        rows,
        labels: stream.labels.clone(),
        corrupted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{clean, RawRow};
    use crate::simgen::{generate, GeneratorConfig};

    fn stream(n: usize) -> Vec<SensorFrame> {
        generate(&GeneratorConfig::default(), n).unwrap()
    }

    #[test]
    fn label_count_for_seeded_binomial() {
        let s = inject_anomalies(&stream(2000), 0.05, Magnitude::default(), 42).unwrap();
        let k = s.anomaly_count();
        assert!((80..=120).contains(&k), "{k}");
    }

    #[test]
    fn two_percent_on_ph() {
        let frames: Vec<SensorFrame> = (0..400)
            .map(|i| SensorFrame {
                timestamp: "t".into(),
                seq: i,
                channels: [7.0, 25.0, 1500.0, 22.0, 45.0, 450.0, 300.0],
            })
            .collect();
        let s = inject_anomalies(&frames, 0.5, Magnitude::fixed(0.02), 1).unwrap();
        let mut saw_ph = false;
        for (f, &l) in s.frames.iter().zip(&s.labels) {
            let ph = f.channels[0];
            if l && ph != 7.0 {
                saw_ph = true;
                assert!((ph - 7.14).abs() < 1e-12 || (ph - 6.86).abs() < 1e-12, "{ph}");
            }
            if !l {
                assert_eq!(f.channels, frames[0].channels);
            } else {
                let changed = (0..7).filter(|&c| f.channels[c] != frames[0].channels[c]).count();
                assert_eq!(changed, 1);
            }
        }
        assert!(saw_ph);
    }

    #[test]
    fn zero_rate_is_identity() {
        let frames = stream(100);
        let s = inject_anomalies(&frames, 0.0, Magnitude::default(), 3).unwrap();
        assert_eq!(s.frames, frames);
        assert!(s.labels.iter().all(|l| !l));
        let c = inject_corruption(&s, 0.0, 3, false).unwrap();
        assert_eq!(c.corrupted_count(), 0);
        assert_eq!(c.rows, frames.iter().map(SensorFrame::to_cells).collect::<Vec<_>>());
    }

    #[test]
    fn corrupted_rows_are_cleaned_away() {
        let s = inject_anomalies(&stream(1000), 0.05, Magnitude::default(), 5).unwrap();
        let c = inject_corruption(&s, 0.1, 6, false).unwrap();
        assert!(c.corrupted_count() > 50);
        let raw: Vec<RawRow> = c.rows.iter().map(|cells| RawRow { line: 0, cells: cells.clone() }).collect();
        let (frames, report) = clean(&raw);
        assert_eq!(report.rows_dropped_sentinel, c.corrupted_count());
        assert_eq!(frames.len(), 1000 - c.corrupted_count());
    }

    #[test]
    fn protected_labels_stay_clean() {
        let s = inject_anomalies(&stream(1000), 0.3, Magnitude::default(), 5).unwrap();
        let c = inject_corruption(&s, 0.5, 9, true).unwrap();
        assert!(c.corrupted_count() > 0);
        assert!(c.corrupted.iter().zip(&c.labels).all(|(c, l)| !(*c && *l)));
    }

    #[test]
    fn magnitude_parsing() {
        assert_eq!("0.02".parse::<Magnitude>().unwrap(), Magnitude::fixed(0.02));
        assert_eq!("0.02..0.03".parse::<Magnitude>().unwrap(), Magnitude::default());
        assert!("0.03..0.02".parse::<Magnitude>().is_err());
        assert!("x".parse::<Magnitude>().is_err());
    }
}
