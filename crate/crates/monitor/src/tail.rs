//! Incremental reading of a growing sensor CSV.
//!
//! The tailer remembers a byte offset and the number of data rows consumed.
//! Only complete (newline-terminated) lines are consumed; a partially
//! written last line is left for the next poll. A file that became shorter
//! than the saved offset is treated as rotated and read again from the top.

use std::fs::File;
use std::io::{self, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use ocae_core::preprocess::{clean, is_header, parse_lines, CleanReport};
use ocae_core::SensorFrame;

/// Upper bound on bytes read per poll, so a large backlog is consumed in
/// pieces with bounded memory.
pub const DEFAULT_MAX_CHUNK: usize = 1 << 20;

#[derive(Debug, Default, Clone, PartialEq)]
pub struct TailBatch {
    /// Cleaned frames in file order.
    pub frames: Vec<SensorFrame>,
    /// Data rows consumed by this poll, including dropped and malformed ones.
    pub rows: u64,
    pub report: CleanReport,
    /// Lines with the wrong number of columns.
    pub malformed: usize,
    pub rotated: bool,
    /// True when the read stopped at the chunk limit and more data is waiting.
    pub more: bool,
}

#[derive(Debug, Clone)]
pub struct CsvTail {
    path: PathBuf,
    offset: u64,
    last_row: u64,
    /// Whether the first line of the file has been seen (and skipped if it
    /// is a header).
    started: bool,
    max_chunk: usize,
}

impl CsvTail {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            offset: 0,
            last_row: 0,
            started: false,
            max_chunk: DEFAULT_MAX_CHUNK,
        }
    }

    pub fn with_max_chunk(mut self, bytes: usize) -> Self {
        self.max_chunk = bytes.max(1);
        self
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Data rows consumed so far.
    pub fn last_row(&self) -> u64 {
        self.last_row
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    /// Reads whatever complete lines were appended since the last poll.
    ///
    /// A missing file yields an empty batch.
    pub fn poll(&mut self) -> io::Result<TailBatch> {
        let mut batch = TailBatch::default();
        let len = match std::fs::metadata(&self.path) {
            Ok(m) => m.len(),
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(batch),
            Err(e) => return Err(e),
        };
        if len < self.offset {
            log::warn!(
                "{} shrank from {} to {} bytes; treating it as rotated",
                self.path.display(),
                self.offset,
                len
            );
            self.offset = 0;
            self.last_row = 0;
            self.started = false;
            batch.rotated = true;
        }
        if len == self.offset {
            return Ok(batch);
        }

        let mut file = File::open(&self.path)?;
        file.seek(SeekFrom::Start(self.offset))?;
        let mut buf = Vec::with_capacity(self.max_chunk.min((len - self.offset) as usize));
        file.take(self.max_chunk as u64).read_to_end(&mut buf)?;
        let full = buf.len() == self.max_chunk;

        let end = match buf.iter().rposition(|b| *b == b'\n') {
            Some(i) => i + 1,
            // A line longer than the chunk limit is consumed whole as garbage.
            None if full => buf.len(),
            None => return Ok(batch),
        };
        self.offset += end as u64;
        batch.more = full;

        let text = String::from_utf8_lossy(&buf[..end]);
        let mut lines = Vec::new();
        for raw in text.split('\n') {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() {
                continue;
            }
            if !std::mem::replace(&mut self.started, true) {
                let cells: Vec<String> = line.split(',').map(str::to_owned).collect();
                if is_header(&cells) {
                    continue;
                }
            }
            self.last_row += 1;
            lines.push((self.last_row as usize, line));
        }
        batch.rows = lines.len() as u64;
        let parsed = parse_lines(lines, false);
        batch.malformed = parsed.rejects.len();
        let (frames, report) = clean(&parsed.rows);
        batch.frames = frames;
        batch.report = report;
        Ok(batch)
    }

    /// Polls until the backlog is drained.
    pub fn drain(&mut self) -> io::Result<TailBatch> {
        let mut all = self.poll()?;
        while all.more {
            let next = self.poll()?;
            all.frames.extend(next.frames);
            all.rows += next.rows;
            all.report.merge(&next.report);
            all.malformed += next.malformed;
            all.rotated |= next.rotated;
            all.more = next.more;
        }
        Ok(all)
    }
}

/// Stateless form: cleaned frames for data rows with index `>= last_row`,
/// plus the new row count. If the file now holds fewer rows than
/// `last_row` it was rotated, and reading restarts from row 0.
pub fn tail_csv(path: impl AsRef<Path>, last_row: u64) -> io::Result<(Vec<SensorFrame>, u64)> {
    let path = path.as_ref();
    let (rows, total) = index_rows(path)?;
    let skip = if total < last_row {
        log::warn!(
            "{} has {total} rows, fewer than the {last_row} already consumed; treating it as rotated",
            path.display()
        );
        0
    } else {
        last_row
    };
    let frames = rows
        .into_iter()
        .filter(|(row, _)| *row >= skip)
        .map(|(_, f)| f)
        .collect();
    Ok((frames, total))
}

/// Every cleaned frame paired with its 0-based data-row index, and the
/// number of complete data rows.
fn index_rows(path: &Path) -> io::Result<(Vec<(u64, SensorFrame)>, u64)> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(e),
    };
    let end = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    let text = String::from_utf8_lossy(&bytes[..end]);
    let mut out = Vec::new();
    let mut row = 0u64;
    let mut first = true;
    for raw in text.split('\n') {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        if std::mem::take(&mut first) {
            let cells: Vec<String> = line.split(',').map(str::to_owned).collect();
            if is_header(&cells) {
                continue;
            }
        }
        let parsed = parse_lines([(row as usize + 1, line)], false);
        if let Some(f) = clean(&parsed.rows).0.into_iter().next() {
            out.push((row, f));
        }
        row += 1;
    }
    Ok((out, row))
}
