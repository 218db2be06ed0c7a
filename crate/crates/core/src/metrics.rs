//! Classification and timing reports.

use std::io::Write;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::io::{fmt_opt, write_csv};

/// Measurements dropped before averaging wall-clock timings.
pub const TIMING_WARMUP: usize = 3;

/// Confusion counts with 1-based class labels; `confusion[actual-1][predicted-1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    /// `None` when the class was never predicted.
    pub precision: Vec<Option<f64>>,
    /// `None` when the class never occurs.
    pub recall: Vec<Option<f64>>,
}

impl ClassificationReport {
    pub fn classes(&self) -> usize {
        self.confusion.len()
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.classes()).map(|i| self.confusion[i][i]).sum()
    }

    /// Count of samples whose actual class is `class` (1-based).
    pub fn actual_count(&self, class: usize) -> usize {
        self.confusion[class - 1].iter().sum()
    }

    pub fn predicted_count(&self, class: usize) -> usize {
        self.confusion.iter().map(|row| row[class - 1]).sum()
    }

    /// Rows per actual class with precision and recall margins.
    pub fn write_csv<W: Write>(&self, w: W, meta: &[(&str, String)]) -> Result<()> {
        let r = self.classes();
        let mut columns: Vec<String> = vec!["actual".into()];
        columns.extend((1..=r).map(|c| format!("pred_{c}")));
        columns.extend(["recall".into(), "precision".into()]);
        let rows = (0..r).map(|i| {
            let mut row = vec![(i + 1).to_string()];
            row.extend(self.confusion[i].iter().map(|c| c.to_string()));
            row.push(fmt_opt(self.recall[i]));
            row.push(fmt_opt(self.precision[i]));
            row
        });
        let mut rows: Vec<Vec<String>> = rows.collect();
        let mut last = vec!["accuracy".to_string()];
        last.extend((0..r).map(|_| String::new()));
        last.push(self.accuracy.to_string());
        last.push(String::new());
        rows.push(last);
        let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
        write_csv(w, meta, &cols, rows)
    }
}

/// Accuracy `100 * correct / total`; precision and recall per class in percent.
pub fn classification_report(predictions: &[usize], labels: &[usize], r: usize) -> Result<ClassificationReport> {
    if predictions.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut confusion = vec![vec![0usize; r]; r];
    for (&p, &a) in predictions.iter().zip(labels) {
        for label in [p, a] {
            if label == 0 || label > r {
                return Err(Error::LabelOutOfRange { label, classes: r });
            }
        }
        confusion[a - 1][p - 1] += 1;
    }
    let pct = |num: usize, den: usize| (den > 0).then(|| 100.0 * num as f64 / den as f64);
    let total = predictions.len();
    let correct: usize = (0..r).map(|i| confusion[i][i]).sum();
    let precision = (0..r).map(|c| pct(confusion[c][c], confusion.iter().map(|row| row[c]).sum())).collect();
    let recall = (0..r).map(|c| pct(confusion[c][c], confusion[c].iter().sum())).collect();
    Ok(ClassificationReport { confusion, accuracy: 100.0 * correct as f64 / total as f64, precision, recall })
}

/// Per-frame processing times of one segment, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentTiming {
    /// Frame to scalogram stack.
    pub t_f: f64,
    /// Classifier pass.
    pub t_c: f64,
    /// One forecast.
    pub t_p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub segments: Vec<SegmentTiming>,
    /// Samples per frame hop, `M - L`.
    pub hop: usize,
    pub per_segment: Vec<f64>,
    pub t_infr: f64,
}

/// `T_infr^i = (T_f + T_c + (M-L) T_p) / (M-L)`, averaged over segments.
pub fn segment_inference_time(s: SegmentTiming, hop: usize) -> f64 {
    let h = hop as f64;
    (s.t_f + s.t_c + h * s.t_p) / h
}

pub fn timing_report(segments: &[SegmentTiming], frame_len: usize, overlap: usize) -> Result<TimingReport> {
    if frame_len <= overlap {
        return Err(Error::config(format!("frame length {frame_len} must exceed overlap {overlap}")));
    }
    if segments.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let hop = frame_len - overlap;
    let per_segment: Vec<f64> = segments.iter().map(|&s| segment_inference_time(s, hop)).collect();
    let t_infr = per_segment.iter().sum::<f64>() / per_segment.len() as f64;
    Ok(TimingReport { segments: segments.to_vec(), hop, per_segment, t_infr })
}

/// Wall-clock samples with the first [`TIMING_WARMUP`] discarded.
#[derive(Debug, Clone, Default)]
pub struct Stopwatch {
    seen: usize,
    samples: Vec<f64>,
}

impl Stopwatch {
    pub fn time<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.record(start.elapsed().as_secs_f64());
        out
    }

    pub fn record(&mut self, seconds: f64) {
        self.seen += 1;
        if self.seen > TIMING_WARMUP {
            self.samples.push(seconds);
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.samples.is_empty()).then(|| self.samples.iter().sum::<f64>() / self.samples.len() as f64)
    }

    pub fn variance(&self) -> Option<f64> {
        let m = self.mean()?;
        Some(self.samples.iter().map(|s| (s - m).powi(2)).sum::<f64>() / self.samples.len() as f64)
    }
}

/// Write `key=value` lines.
pub fn write_summary<W: Write>(mut w: W, entries: &[(&str, String)]) -> Result<()> {
    for (k, v) in entries {
        writeln!(w, "{k}={v}")?;
    }
    Ok(())
}
