use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts and the derived scores. Every 0/0 ratio is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            tn,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Fraction of true negatives flagged.
    pub fn false_positive_rate(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }
}

/// Position-wise confusion counts of predictions against labels.
pub fn evaluate(labels: &[bool], predictions: &[bool]) -> Result<Metrics> {
    if labels.len() != predictions.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels but {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&l, &p) in labels.iter().zip(predictions) {
        match (l, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fn_ += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, tn, fn_))
}

/// Counts maximal runs of positive labels and how many contain at least one
/// positive prediction.
pub fn runs_detected(labels: &[bool], predictions: &[bool]) -> (usize, usize) {
    let mut total = 0;
    let mut detected = 0;
    let mut in_run = false;
    let mut hit = false;
    for (&l, &p) in labels.iter().zip(predictions) {
        if l {
            if !in_run {
                in_run = true;
                hit = false;
                total += 1;
            }
            hit |= p;
        } else if in_run {
            in_run = false;
            detected += hit as usize;
        }
    }
    if in_run {
        detected += hit as usize;
    }
    (detected, total)
}

/// Writes `seq,label` rows with label 0/1.
pub fn write_labels(path: impl AsRef<Path>, seqs: &[u64], labels: &[bool]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "seq,label")?;
    for (s, l) in seqs.iter().zip(labels) {
        writeln!(f, "{s},{}", *l as u8)?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a `seq,label` file. The header line is optional.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<(u64, bool)>> {
    parse_labels(&fs::read_to_string(path)?)
}

pub fn parse_labels(text: &str) -> Result<Vec<(u64, bool)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("seq")) {
            continue;
        }
        let bad = || Error::Schema(format!("labels line {}: {line:?}", i + 1));
        let (seq, label) = line.split_once(',').ok_or_else(bad)?;
        let seq = seq.trim().parse::<u64>().map_err(|_| bad())?;
        let label = match label.trim() {
            "0" => false,
            "1" => true,
            _ => return Err(bad()),
        };
        out.push((seq, label));
    }
    Ok(out)
}
