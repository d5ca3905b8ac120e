//! The deployable bundle: `model.ocae`, `scaler.json` and `threshold.txt`
//! in one directory.
//!
//! `model.ocae` layout (little-endian):
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `OCAE`                           |
//! | 4      | 2    | version (1)                            |
//! | 6      | 1    | layout (1 channel-token, 0 time-axis)  |
//! | 7      | 2    | hidden_dim                             |
//! | 9      | 2    | n_channels (7)                         |
//! | 11     | 4·P  | parameters as f32, canonical order     |
//! | 11+4P  | 4    | CRC-32 of all preceding bytes          |
//!
//! Parameters are written block by block: enc1 weights (row-major) and bias,
//! attention W and b, then bottleneck, dec1, dec2 and out.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::autoencoder::{AttentionAutoencoder, Layout};
use crate::detector::{self, Threshold, Verdict};
use crate::error::{Error, Result};
use crate::preprocess::{ChannelScaler, SensorFrame, N_CHANNELS};
use crate::scalar::Scalar;

pub const MAGIC: [u8; 4] = *b"OCAE";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 11;
pub const CRC_LEN: usize = 4;

pub const MODEL_FILE: &str = "model.ocae";
pub const SCALER_FILE: &str = "scaler.json";
pub const THRESHOLD_FILE: &str = "threshold.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelFileHeader {
    pub magic: [u8; 4],
    pub version: u16,
    pub layout: u8,
    pub hidden_dim: u16,
    pub n_channels: u16,
}

impl ModelFileHeader {
    pub fn for_model<T: Scalar>(model: &AttentionAutoencoder<T>) -> Result<Self> {
        let hidden_dim = u16::try_from(model.hidden_dim)
            .map_err(|_| Error::Format(format!("hidden_dim {} exceeds u16", model.hidden_dim)))?;
        Ok(Self {
            magic: MAGIC,
            version: FORMAT_VERSION,
            layout: model.layout as u8,
            hidden_dim,
            n_channels: N_CHANNELS as u16,
        })
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&self.magic);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6] = self.layout;
        b[7..9].copy_from_slice(&self.hidden_dim.to_le_bytes());
        b[9..11].copy_from_slice(&self.n_channels.to_le_bytes());
        b
    }

    /// Parses and validates a header.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "truncated header: {} of {HEADER_LEN} bytes",
                bytes.len()
            )));
        }
        let h = Self {
            magic: bytes[0..4].try_into().unwrap(),
            version: u16::from_le_bytes([bytes[4], bytes[5]]),
            layout: bytes[6],
            hidden_dim: u16::from_le_bytes([bytes[7], bytes[8]]),
            n_channels: u16::from_le_bytes([bytes[9], bytes[10]]),
        };
        if h.magic != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", h.magic)));
        }
        if h.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", h.version)));
        }
        if Layout::from_byte(h.layout).is_none() {
            return Err(Error::Format(format!("unknown layout {}", h.layout)));
        }
        if h.hidden_dim == 0 || h.hidden_dim % 2 != 0 {
            return Err(Error::Format(format!("hidden_dim {} is not even", h.hidden_dim)));
        }
        if h.n_channels as usize != N_CHANNELS {
            return Err(Error::Format(format!("expected {N_CHANNELS} channels, got {}", h.n_channels)));
        }
        Ok(h)
    }
}

/// Exact `model.ocae` size for a model with `param_count` parameters.
pub fn model_file_size(param_count: usize) -> usize {
    HEADER_LEN + 4 * param_count + CRC_LEN
}

/// Serialises a model; parameters are narrowed to f32.
pub fn encode_model<T: Scalar>(model: &AttentionAutoencoder<T>) -> Result<Vec<u8>> {
    let header = ModelFileHeader::for_model(model)?;
    let mut buf = Vec::with_capacity(model_file_size(model.param_count()));
    buf.extend_from_slice(&header.to_bytes());
    for p in model.params() {
        let v = p.to_f32().expect("Scalar converts to f32");
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

pub fn decode_model(bytes: &[u8]) -> Result<AttentionAutoencoder<f32>> {
    let header = ModelFileHeader::parse(bytes)?;
    let layout = Layout::from_byte(header.layout).expect("validated");
    let mut model = AttentionAutoencoder::<f32>::zeros(layout, header.hidden_dim as usize)?;
    let expected = model_file_size(model.param_count());
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "length {} does not match expected {expected}",
            bytes.len()
        )));
    }
    let (body, crc) = bytes.split_at(expected - CRC_LEN);
    let stored = u32::from_le_bytes(crc.try_into().unwrap());
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Format(format!(
            "CRC mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }
    for (p, chunk) in model.params_mut().zip(body[HEADER_LEN..].chunks_exact(4)) {
        *p = f32::from_le_bytes(chunk.try_into().unwrap());
    }
    if !model.is_finite() {
        return Err(Error::Format("non-finite parameter".into()));
    }
    Ok(model)
}

/// Writes through a temporary file and renames, so readers never observe a
/// partial model.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Saves a model and returns the number of bytes written.
pub fn save_model<T: Scalar>(model: &AttentionAutoencoder<T>, path: impl AsRef<Path>) -> Result<usize> {
    let bytes = encode_model(model)?;
    write_atomic(path.as_ref(), &bytes)?;
    Ok(bytes.len())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<AttentionAutoencoder<f32>> {
    decode_model(&fs::read(path)?)
}

/// Hex SHA-256 of the model file bytes.
pub fn model_id(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Model, scaler and threshold, loaded together and immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorBundle {
    pub model: AttentionAutoencoder<f32>,
    pub scaler: ChannelScaler,
    pub threshold: Threshold,
    pub model_id: String,
}

/// Sizes of the three files written by [`save_bundle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct BundleFiles {
    pub model_bytes: usize,
    pub scaler_bytes: usize,
    pub threshold_bytes: usize,
}

impl DetectorBundle {
    pub fn new<T: Scalar>(model: &AttentionAutoencoder<T>, scaler: ChannelScaler, threshold: Threshold) -> Result<Self> {
        let bytes = encode_model(model)?;
        Ok(Self {
            model: decode_model(&bytes)?,
            scaler,
            threshold,
            model_id: model_id(&bytes),
        })
    }

    pub fn score(&self, frame: &SensorFrame) -> Result<f64> {
        detector::score(&self.model, &self.scaler, frame)
    }

    pub fn verdict(&self, frame: &SensorFrame) -> Result<Verdict> {
        Ok(detector::classify(self.score(frame)?, &self.threshold))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<BundleFiles> {
        save_bundle(dir, &self.model, &self.scaler, &self.threshold)
    }
}

pub fn bundle_paths(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (dir.join(MODEL_FILE), dir.join(SCALER_FILE), dir.join(THRESHOLD_FILE))
}

/// Writes all three files into `dir`, creating it if needed.
pub fn save_bundle<T: Scalar>(
    dir: impl AsRef<Path>,
    model: &AttentionAutoencoder<T>,
    scaler: &ChannelScaler,
    threshold: &Threshold,
) -> Result<BundleFiles> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let (model_path, scaler_path, threshold_path) = bundle_paths(dir);
    let scaler_json = scaler.to_json();
    let threshold_text = threshold.to_text();
    write_atomic(&scaler_path, scaler_json.as_bytes())?;
    write_atomic(&threshold_path, threshold_text.as_bytes())?;
    let model_bytes = save_model(model, &model_path)?;
    Ok(BundleFiles {
        model_bytes,
        scaler_bytes: scaler_json.len(),
        threshold_bytes: threshold_text.len(),
    })
}

/// Loads a bundle. A missing `threshold.txt` falls back to
/// [`detector::DEFAULT_THRESHOLD`]; anything missing or corrupt otherwise is
/// an error.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<DetectorBundle> {
    let dir = dir.as_ref();
    let (model_path, scaler_path, threshold_path) = bundle_paths(dir);
    let bytes = fs::read(&model_path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", model_path.display())))
    })?;
    let model = decode_model(&bytes)?;
    let scaler_text = fs::read_to_string(&scaler_path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", scaler_path.display())))
    })?;
    let scaler = ChannelScaler::from_json(&scaler_text)?;
    let threshold = match fs::read_to_string(&threshold_path) {
        Ok(text) => Threshold::parse(&text)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            log::warn!(
                "{} missing; using default threshold {}",
                threshold_path.display(),
                detector::DEFAULT_THRESHOLD
            );
            Threshold::fallback()
        }
        Err(e) => return Err(e.into()),
    };
    Ok(DetectorBundle {
        model,
        scaler,
        threshold,
        model_id: model_id(&bytes),
    })
}
