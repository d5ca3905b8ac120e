//! Sensor CSV parsing, corrupted-row scrubbing and per-channel min-max scaling.
//!
//! The on-disk stream layout is fixed:
//!
//! ```text
//! timestamp,seq,ph,liq_temp_c,cond_us_cm,amb_temp_c,humidity_pct,co2_ppm,light_lux
//! ```
//!
//! Columns 2..9 carry the seven channels in native units. Rows carrying the
//! saturation sentinel `255` or a `DS18B20 error` message are deleted rather
//! than imputed.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const N_CHANNELS: usize = 7;
pub const N_COLUMNS: usize = N_CHANNELS + 2;

pub const CSV_HEADER: &str =
    "timestamp,seq,ph,liq_temp_c,cond_us_cm,amb_temp_c,humidity_pct,co2_ppm,light_lux";

pub const CHANNEL_NAMES: [&str; N_CHANNELS] = [
    "ph",
    "liq_temp_c",
    "cond_us_cm",
    "amb_temp_c",
    "humidity_pct",
    "co2_ppm",
    "light_lux",
];

/// Saturation sentinel, matched against the trimmed cell text.
pub const SENTINEL: &str = "255";
/// Substring emitted by the temperature probe driver on a bus fault.
pub const SENSOR_ERROR: &str = "DS18B20 error";

pub type Channels = [f64; N_CHANNELS];

/// One cleaned reading of all seven channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub timestamp: String,
    pub seq: u64,
    pub channels: Channels,
}

impl SensorFrame {
    /// Renders the frame as CSV cells in schema order.
    pub fn to_cells(&self) -> Vec<String> {
        let mut cells = Vec::with_capacity(N_COLUMNS);
        cells.push(self.timestamp.clone());
        cells.push(self.seq.to_string());
        cells.extend(self.channels.iter().map(|v| v.to_string()));
        cells
    }

    pub fn to_row(&self) -> RawRow {
        RawRow {
            line: 0,
            cells: self.to_cells(),
        }
    }
}

/// A well-formed CSV line split into cells. `line` is the 1-based source line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRow {
    pub line: usize,
    pub cells: Vec<String>,
}

/// A line that did not have the schema's column count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejected {
    pub line: usize,
    pub text: String,
    pub columns: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedCsv {
    pub header: bool,
    pub rows: Vec<RawRow>,
    pub rejects: Vec<Rejected>,
}

/// Counts reported by [`clean`]. `rows_out = rows_in - dropped_sentinel - dropped_nonnumeric`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub rows_in: usize,
    pub rows_dropped_sentinel: usize,
    pub rows_dropped_nonnumeric: usize,
    pub rows_out: usize,
}

impl CleanReport {
    pub fn reconciles(&self) -> bool {
        self.rows_in
            .checked_sub(self.rows_dropped_sentinel + self.rows_dropped_nonnumeric)
            == Some(self.rows_out)
    }

    pub fn merge(&mut self, other: &CleanReport) {
        self.rows_in += other.rows_in;
        self.rows_dropped_sentinel += other.rows_dropped_sentinel;
        self.rows_dropped_nonnumeric += other.rows_dropped_nonnumeric;
        self.rows_out += other.rows_out;
    }
}

/// Reads a whole CSV stream. See [`parse_csv_str`].
pub fn parse_csv<R: Read>(mut reader: R) -> Result<ParsedCsv> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    Ok(parse_csv_str(&text))
}

pub fn read_csv_file(path: impl AsRef<Path>) -> Result<ParsedCsv> {
    parse_csv(fs::File::open(path)?)
}

/// Splits text into rows of cells.
///
/// The first non-blank line is a header when its `seq` cell is not an
/// integer. Lines with the wrong column count go to `rejects`.
pub fn parse_csv_str(text: &str) -> ParsedCsv {
    parse_lines(text.lines().enumerate().map(|(i, l)| (i + 1, l)), true)
}

/// Parses already-split lines. `allow_header` enables header detection on
/// the first non-blank line.
pub fn parse_lines<'a>(
    lines: impl IntoIterator<Item = (usize, &'a str)>,
    allow_header: bool,
) -> ParsedCsv {
    let mut out = ParsedCsv::default();
    let mut first = allow_header;
    for (line, raw) in lines {
        let text = raw.strip_suffix('\r').unwrap_or(raw);
        if text.trim().is_empty() {
            continue;
        }
        let cells: Vec<String> = text.split(',').map(str::to_owned).collect();
        if std::mem::take(&mut first) && is_header(&cells) {
            out.header = true;
            continue;
        }
        if cells.len() != N_COLUMNS {
            out.rejects.push(Rejected {
                line,
                text: text.to_owned(),
                columns: cells.len(),
            });
            continue;
        }
        out.rows.push(RawRow { line, cells });
    }
    out
}

pub fn is_header(cells: &[String]) -> bool {
    cells
        .get(1)
        .is_none_or(|seq| seq.trim().parse::<u64>().is_err())
}

fn is_corrupt_cell(cell: &str) -> bool {
    cell.trim() == SENTINEL || cell.contains(SENSOR_ERROR)
}

/// Outcome of cleaning a single row.
#[derive(Debug, Clone, PartialEq)]
pub enum RowOutcome {
    Frame(SensorFrame),
    Sentinel,
    NonNumeric,
}

pub fn clean_row(row: &RawRow) -> RowOutcome {
    let channel_cells = &row.cells[2..N_COLUMNS.min(row.cells.len())];
    if row.cells.len() != N_COLUMNS {
        return RowOutcome::NonNumeric;
    }
    if channel_cells.iter().any(|c| is_corrupt_cell(c)) {
        return RowOutcome::Sentinel;
    }
    let Ok(seq) = row.cells[1].trim().parse::<u64>() else {
        return RowOutcome::NonNumeric;
    };
    let mut channels = [0.0; N_CHANNELS];
    for (slot, cell) in channels.iter_mut().zip(channel_cells) {
        match cell.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => *slot = v,
            _ => return RowOutcome::NonNumeric,
        }
    }
    RowOutcome::Frame(SensorFrame {
        timestamp: row.cells[0].trim().to_owned(),
        seq,
        channels,
    })
}

/// Drops corrupted and non-numeric rows; survivors become frames in input order.
pub fn clean(rows: &[RawRow]) -> (Vec<SensorFrame>, CleanReport) {
    let mut report = CleanReport {
        rows_in: rows.len(),
        ..CleanReport::default()
    };
    let mut frames = Vec::with_capacity(rows.len());
    for row in rows {
        match clean_row(row) {
            RowOutcome::Frame(f) => frames.push(f),
            RowOutcome::Sentinel => report.rows_dropped_sentinel += 1,
            RowOutcome::NonNumeric => report.rows_dropped_nonnumeric += 1,
        }
    }
    report.rows_out = frames.len();
    (frames, report)
}

/// Reads and cleans a CSV file in one go.
pub fn load_frames(path: impl AsRef<Path>) -> Result<(Vec<SensorFrame>, CleanReport)> {
    let parsed = read_csv_file(path)?;
    Ok(clean(&parsed.rows))
}

/// Writes rows (already split into cells) under the schema header.
pub fn write_csv<W: Write>(mut w: W, rows: impl IntoIterator<Item = Vec<String>>) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()
}

/// Per-channel min-max scaler fitted on training frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelScaler {
    pub mins: Channels,
    pub maxs: Channels,
}

#[derive(Serialize, Deserialize)]
struct ScalerFile {
    version: u32,
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

const SCALER_VERSION: u32 = 1;

impl ChannelScaler {
    pub fn new(mins: Channels, maxs: Channels) -> Result<Self> {
        for i in 0..N_CHANNELS {
            if !(mins[i].is_finite() && maxs[i].is_finite()) {
                return Err(Error::Schema(format!("channel {i}: non-finite bound")));
            }
            if mins[i] > maxs[i] {
                return Err(Error::Schema(format!(
                    "channel {i}: min {} exceeds max {}",
                    mins[i], maxs[i]
                )));
            }
        }
        Ok(Self { mins, maxs })
    }

    /// Scales one reading. Constant channels map to 0; nothing is clamped.
    pub fn transform(&self, x: &Channels) -> Channels {
        std::array::from_fn(|i| {
            let range = self.maxs[i] - self.mins[i];
            if range > 0.0 {
                (x[i] - self.mins[i]) / range
            } else {
                0.0
            }
        })
    }

    pub fn transform_frame(&self, frame: &SensorFrame) -> Channels {
        self.transform(&frame.channels)
    }

    pub fn to_json(&self) -> String {
        let file = ScalerFile {
            version: SCALER_VERSION,
            mins: self.mins.to_vec(),
            maxs: self.maxs.to_vec(),
        };
        serde_json::to_string(&file).expect("scaler serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScalerFile = serde_json::from_str(text)?;
        if file.version != SCALER_VERSION {
            return Err(Error::Schema(format!(
                "unsupported scaler version {}",
                file.version
            )));
        }
        let to_channels = |name: &str, v: Vec<f64>| -> Result<Channels> {
            let n = v.len();
            v.try_into().map_err(|_| {
                Error::Schema(format!("{name}: expected {N_CHANNELS} values, got {n}"))
            })
        };
        Self::new(to_channels("mins", file.mins)?, to_channels("maxs", file.maxs)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Fits exact column-wise extrema.
pub fn fit_scaler(frames: &[SensorFrame]) -> Result<ChannelScaler> {
    fit_scaler_channels(frames.iter().map(|f| &f.channels))
}

pub fn fit_scaler_channels<'a>(rows: impl IntoIterator<Item = &'a Channels>) -> Result<ChannelScaler> {
    let mut mins = [f64::INFINITY; N_CHANNELS];
    let mut maxs = [f64::NEG_INFINITY; N_CHANNELS];
    let mut n = 0;
    for row in rows {
        n += 1;
        for i in 0..N_CHANNELS {
            mins[i] = mins[i].min(row[i]);
            maxs[i] = maxs[i].max(row[i]);
        }
    }
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    ChannelScaler::new(mins, maxs)
}

/// A sequence of `len` tokens, each `width` scalars, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSeq<T> {
    pub len: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> TokenSeq<T> {
    pub fn token(&self, i: usize) -> &[T] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn flatten(&self) -> Vec<T> {
        self.data.clone()
    }
}

/// Channel-token layout: channel `i` becomes token `i` of width 1.
pub fn to_model_input<T: Scalar>(scaled: &[T; N_CHANNELS]) -> TokenSeq<T> {
    TokenSeq {
        len: N_CHANNELS,
        width: 1,
        data: scaled.to_vec(),
    }
}

/// Degenerate time-axis layout: the whole vector is a single token.
pub fn to_time_axis_input<T: Scalar>(scaled: &[T; N_CHANNELS]) -> TokenSeq<T> {
    TokenSeq {
        len: 1,
        width: N_CHANNELS,
        data: scaled.to_vec(),
    }
}
