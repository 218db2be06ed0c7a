//! Time-series representation, framing arithmetic, attack signals and the
//! synthetic complexity dataset generator.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_comment_header, write_comment_header};

/// Uniformly sampled measurements of a single sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    samples: Vec<f64>,
    fs: f64,
    t0: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        Self::with_start(samples, fs, 0.0)
    }

    pub fn with_start(samples: Vec<f64>, fs: f64, t0: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::config(format!("sampling frequency must be positive, got {fs}")));
        }
        if !t0.is_finite() {
            return Err(Error::NonFinite("series start time".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("time series sample {i}")));
        }
        Ok(Self { samples, fs, t0 })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Time stamp of sample `i` in seconds.
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.fs
    }

    /// Write as `t,value[,label]` CSV. `labels`, when given, must match the sample count.
    pub fn write_csv<W: Write>(
        &self,
        mut w: W,
        labels: Option<&[u8]>,
        header: &[(&str, String)],
    ) -> Result<()> {
        if let Some(l) = labels {
            if l.len() != self.len() {
                return Err(Error::shape(format!(
                    "{} labels for {} samples",
                    l.len(),
                    self.len()
                )));
            }
        }
        let mut meta: Vec<(&str, String)> = vec![("fs", self.fs.to_string()), ("t0", self.t0.to_string())];
        meta.extend(header.iter().cloned());
        write_comment_header(&mut w, &meta)?;
        let mut out = csv::Writer::from_writer(w);
        match labels {
            Some(labels) => {
                out.write_record(["t", "value", "label"])?;
                for (i, (v, l)) in self.samples.iter().zip(labels).enumerate() {
                    out.write_record(&[self.time(i).to_string(), v.to_string(), l.to_string()])?;
                }
            }
            None => {
                out.write_record(["t", "value"])?;
                for (i, v) in self.samples.iter().enumerate() {
                    out.write_record(&[self.time(i).to_string(), v.to_string()])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Read a series written by [`TimeSeries::write_csv`]. The sampling rate comes
    /// from the `# fs=` header when present, otherwise from the first time step.
    pub fn read_csv<R: Read>(r: R) -> Result<(Self, Option<Vec<u8>>)> {
        let mut buf = String::new();
        let mut r = r;
        r.read_to_string(&mut buf)?;
        let meta = read_comment_header(&buf);
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(buf.as_bytes());
        let has_label = reader.headers()?.len() >= 3;
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Format(format!("row missing column {i}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(e.to_string()))
            };
            times.push(parse(0)?);
            values.push(parse(1)?);
            if has_label {
                let l = rec
                    .get(2)
                    .ok_or_else(|| Error::Format("row missing label".into()))?
                    .trim()
                    .parse::<u8>()
                    .map_err(|e| Error::Format(e.to_string()))?;
                labels.push(l);
            }
        }
        if values.is_empty() {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        let fs = match meta.get("fs") {
            Some(v) => v.parse::<f64>().map_err(|e| Error::Format(e.to_string()))?,
            None if times.len() >= 2 => 1.0 / (times[1] - times[0]),
            None => return Err(Error::Format("cannot infer sampling rate".into())),
        };
        let t0 = match meta.get("t0") {
            Some(v) => v.parse::<f64>().map_err(|e| Error::Format(e.to_string()))?,
            None => times[0],
        };
        let ts = TimeSeries::with_start(values, fs, t0)?;
        Ok((ts, has_label.then_some(labels)))
    }
}

/// Frame length `M` and overlap `L`, both in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub frame_len: usize,
    pub overlap: usize,
}

impl FrameConfig {
    pub fn new(frame_len: usize, overlap: usize) -> Result<Self> {
        if frame_len == 0 || overlap >= frame_len {
            return Err(Error::config(format!(
                "frame config requires 0 <= L < M, got M={frame_len}, L={overlap}"
            )));
        }
        Ok(Self { frame_len, overlap })
    }

    /// `M = round(lambda * fs)`.
    pub fn from_lambda(lambda: f64, fs: f64, overlap: usize) -> Result<Self> {
        if !(lambda > 0.0 && fs > 0.0) {
            return Err(Error::config("lambda and fs must be positive"));
        }
        Self::new((lambda * fs).round() as usize, overlap)
    }

    /// Samples between consecutive frame starts, `M - L`.
    pub fn hop(&self) -> usize {
        self.frame_len - self.overlap
    }

    fn validate(&self) -> Result<()> {
        Self::new(self.frame_len, self.overlap).map(|_| ())
    }
}

/// One window of a series. `index` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame<'a> {
    pub index: usize,
    pub start: usize,
    pub samples: &'a [f64],
}

/// Frame count from the closed form `floor((N_y - L) / (M - L)) + 1`.
///
/// The last start this admits can overrun the series; see
/// [`realized_frame_count`] for the number of frames [`split_frames`] yields.
pub fn frame_count(n_samples: usize, cfg: FrameConfig) -> Result<usize> {
    cfg.validate()?;
    if n_samples < cfg.frame_len {
        return Err(Error::InsufficientSamples { needed: cfg.frame_len, got: n_samples });
    }
    Ok((n_samples - cfg.overlap) / cfg.hop() + 1)
}

/// Number of frames whose start satisfies `start + M <= N_y`.
pub fn realized_frame_count(n_samples: usize, cfg: FrameConfig) -> Result<usize> {
    cfg.validate()?;
    if n_samples < cfg.frame_len {
        return Err(Error::InsufficientSamples { needed: cfg.frame_len, got: n_samples });
    }
    Ok((n_samples - cfg.frame_len) / cfg.hop() + 1)
}

/// Split into frames of `M` samples advancing by `M - L`; trailing samples that
/// do not fill a frame are dropped.
pub fn split_frames(samples: &[f64], cfg: FrameConfig) -> Result<Vec<Frame<'_>>> {
    let n = realized_frame_count(samples.len(), cfg)?;
    let hop = cfg.hop();
    Ok((0..n)
        .map(|i| {
            let start = i * hop;
            Frame { index: i + 1, start, samples: &samples[start..start + cfg.frame_len] }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackKind {
    None,
    /// Linear frequency sweep from `f0` to `f1` Hz across the window.
    Chirp { f0: f64, f1: f64 },
    /// Constant offset.
    Bias,
    /// Tabulated waveform starting at `t_start`, sampled at `fs`; zero past its end.
    Custom { samples: Vec<f64>, fs: f64 },
}

/// Additive false-data-injection signal `a_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSignal {
    #[serde(flatten)]
    pub kind: AttackKind,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub t_start: f64,
    #[serde(default)]
    pub t_end: f64,
}

impl AttackSignal {
    pub fn none() -> Self {
        Self { kind: AttackKind::None, amplitude: 0.0, t_start: 0.0, t_end: 0.0 }
    }

    pub fn chirp(amplitude: f64, f0: f64, f1: f64, t_start: f64, t_end: f64) -> Self {
        Self { kind: AttackKind::Chirp { f0, f1 }, amplitude, t_start, t_end }
    }

    pub fn bias(amplitude: f64, t_start: f64, t_end: f64) -> Self {
        Self { kind: AttackKind::Bias, amplitude, t_start, t_end }
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.kind, AttackKind::None) {
            return Ok(());
        }
        if !self.amplitude.is_finite() {
            return Err(Error::NonFinite("attack amplitude".into()));
        }
        if !(self.t_start <= self.t_end) {
            return Err(Error::config(format!(
                "attack window [{}, {}] is reversed",
                self.t_start, self.t_end
            )));
        }
        if let AttackKind::Custom { fs, .. } = &self.kind {
            if !(*fs > 0.0) {
                return Err(Error::config("custom attack needs positive fs"));
            }
        }
        Ok(())
    }

    pub fn is_active(&self, t: f64) -> bool {
        !matches!(self.kind, AttackKind::None) && t >= self.t_start && t <= self.t_end
    }

    /// `a_t`; zero outside `[t_start, t_end]`.
    pub fn value_at(&self, t: f64) -> f64 {
        if !self.is_active(t) {
            return 0.0;
        }
        let tau = t - self.t_start;
        match &self.kind {
            AttackKind::None => 0.0,
            AttackKind::Bias => self.amplitude,
            AttackKind::Chirp { f0, f1 } => {
                let span = self.t_end - self.t_start;
                let sweep = if span > 0.0 { (f1 - f0) / (2.0 * span) } else { 0.0 };
                let phase = f0 * tau + sweep * tau * tau;
                self.amplitude * (2.0 * PI * phase).sin()
            }
            AttackKind::Custom { samples, fs } => {
                let i = (tau * fs).round() as usize;
                samples.get(i).map_or(0.0, |v| self.amplitude * v)
            }
        }
    }
}

/// `y~_t = y_t + a_t` over the attack window; identity elsewhere.
pub fn apply_attack(ts: &TimeSeries, atk: &AttackSignal) -> Result<TimeSeries> {
    atk.validate()?;
    let samples = ts
        .samples()
        .iter()
        .enumerate()
        .map(|(i, y)| y + atk.value_at(ts.time(i)))
        .collect();
    TimeSeries::with_start(samples, ts.fs(), ts.t0())
}

/// Waveform family of a generated segment. Discriminants are the complexity
/// class labels used throughout (1 = least complex).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Sinusoid = 1,
    Square = 2,
    Noise = 3,
}

impl SignalKind {
    pub const ALL: [SignalKind; 3] = [SignalKind::Sinusoid, SignalKind::Square, SignalKind::Noise];

    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn from_label(label: u8) -> Option<Self> {
        match label {
            1 => Some(SignalKind::Sinusoid),
            2 => Some(SignalKind::Square),
            3 => Some(SignalKind::Noise),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub total_samples: usize,
    pub partitions: usize,
    pub fs: f64,
    pub freq_range: (f64, f64),
    pub amp_range: (f64, f64),
    /// Sinusoids summed per segment.
    pub components: usize,
    /// Waveform parameters are redrawn every `segment_len` samples.
    pub segment_len: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            total_samples: 15_000,
            partitions: 3,
            fs: 100.0,
            freq_range: (0.5, 2.0),
            amp_range: (0.5, 10.0),
            components: 3,
            segment_len: 500,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    fn validate(&self) -> Result<()> {
        let (f_lo, f_hi) = self.freq_range;
        let (a_lo, a_hi) = self.amp_range;
        if !(f_lo > 0.0 && f_lo <= f_hi && f_hi.is_finite()) {
            return Err(Error::config(format!("invalid frequency range {:?}", self.freq_range)));
        }
        if !(a_lo >= 0.0 && a_lo <= a_hi && a_hi.is_finite()) {
            return Err(Error::config(format!("invalid amplitude range {:?}", self.amp_range)));
        }
        if !(self.fs > 0.0) {
            return Err(Error::config("fs must be positive"));
        }
        if self.components == 0 || self.segment_len == 0 {
            return Err(Error::config("components and segment_len must be positive"));
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn sinusoid_bank(
    rng: &mut ChaCha8Rng,
    cfg: &GeneratorConfig,
    amplitudes: bool,
) -> Vec<(f64, f64, f64)> {
    (0..cfg.components)
        .map(|_| {
            let f = draw(rng, cfg.freq_range);
            let a = if amplitudes { draw(rng, cfg.amp_range) } else { 1.0 };
            let phase = rng.gen_range(0.0..2.0 * PI);
            (f, a, phase)
        })
        .collect()
}

fn fill_segment(
    out: &mut Vec<f64>,
    kind: SignalKind,
    len: usize,
    cfg: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
) {
    let mut remaining = len;
    while remaining > 0 {
        let chunk = remaining.min(cfg.segment_len);
        let base = out.len();
        match kind {
            SignalKind::Sinusoid => {
                let bank = sinusoid_bank(rng, cfg, true);
                out.extend((0..chunk).map(|i| {
                    let t = (base + i) as f64 / cfg.fs;
                    bank.iter().map(|(f, a, p)| a * (2.0 * PI * f * t + p).sin()).sum::<f64>()
                }));
            }
            SignalKind::Square => {
                let bank = sinusoid_bank(rng, cfg, true);
                out.extend((0..chunk).map(|i| {
                    let t = (base + i) as f64 / cfg.fs;
                    bank.iter()
                        .map(|(f, a, p)| if (2.0 * PI * f * t + p).sin() >= 0.0 { *a } else { -a })
                        .sum::<f64>()
                }));
            }
            SignalKind::Noise => {
                let amp = draw(rng, cfg.amp_range);
                out.extend((0..chunk).map(|_| if amp > 0.0 { rng.gen_range(-amp..=amp) } else { 0.0 }));
            }
        }
        remaining -= chunk;
    }
}

/// Concatenate segments of the given kinds and lengths. Returns the series and
/// one label per sample.
pub fn generate_segments(
    layout: &[(SignalKind, usize)],
    cfg: &GeneratorConfig,
) -> Result<(TimeSeries, Vec<u8>)> {
    cfg.validate()?;
    let total: usize = layout.iter().map(|(_, n)| n).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for &(kind, len) in layout {
        fill_segment(&mut samples, kind, len, cfg, &mut rng);
        labels.extend(std::iter::repeat(kind.label()).take(len));
    }
    Ok((TimeSeries::new(samples, cfg.fs)?, labels))
}

/// Three equal partitions: sum of sinusoids, square waves, white noise.
pub fn generate_complexity_dataset(cfg: &GeneratorConfig) -> Result<(TimeSeries, Vec<u8>)> {
    if cfg.partitions != SignalKind::ALL.len() {
        return Err(Error::config(format!(
            "the generator produces exactly 3 partitions, {} requested",
            cfg.partitions
        )));
    }
    if cfg.total_samples == 0 || cfg.total_samples % cfg.partitions != 0 {
        return Err(Error::config(format!(
            "total_samples={} is not divisible into {} equal partitions",
            cfg.total_samples, cfg.partitions
        )));
    }
    let part = cfg.total_samples / cfg.partitions;
    let layout: Vec<_> = SignalKind::ALL.iter().map(|&k| (k, part)).collect();
    generate_segments(&layout, cfg)
}

/// 1501-sample test layout with switching complexity: level 1 at samples
/// 201-300, 501-700, 1001-1100; level 2 at 401-500, 701-800, 1301-1400;
/// level 3 elsewhere (1-based, inclusive).
pub fn switching_layout() -> Vec<(SignalKind, usize)> {
    use SignalKind::*;
    vec![
        (Noise, 200),
        (Sinusoid, 100),
        (Noise, 100),
        (Square, 100),
        (Sinusoid, 200),
        (Square, 100),
        (Noise, 200),
        (Sinusoid, 100),
        (Noise, 200),
        (Square, 100),
        (Noise, 101),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(m: usize, l: usize) -> FrameConfig {
        FrameConfig::new(m, l).unwrap()
    }

    #[test]
    fn frame_count_closed_form() {
        assert_eq!(frame_count(15000, cfg(60, 54)).unwrap(), 2492);
        assert_eq!(frame_count(10500, cfg(60, 54)).unwrap(), 1742);
        assert_eq!(frame_count(61, cfg(60, 0)).unwrap(), 2);
        assert!(frame_count(59, cfg(60, 0)).is_err());
    }

    #[test]
    fn realized_frames_never_overrun() {
        assert_eq!(realized_frame_count(10500, cfg(60, 54)).unwrap(), 1741);
        let s = vec![0.0; 100];
        let frames = split_frames(&s, cfg(10, 5)).unwrap();
        assert_eq!(frames.len(), 19);
        assert_eq!(frames[1].start, 5);
        assert_eq!(frames[1].index, 2);
        let s = vec![0.0; 66];
        let frames = split_frames(&s, cfg(60, 54)).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[1].start, 6);
        let s: Vec<f64> = (0..60).map(f64::from).collect();
        let frames = split_frames(&s, cfg(60, 54)).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].samples, &s[..]);
    }

    #[test]
    fn short_series_is_rejected() {
        let err = frame_count(10, cfg(60, 54)).unwrap_err();
        assert!(err.to_string().contains("insufficient samples"));
        assert!(split_frames(&[], cfg(2, 1)).is_err());
    }

    #[test]
    fn frame_config_from_lambda() {
        let c = FrameConfig::from_lambda(0.6, 100.0, 54).unwrap();
        assert_eq!(c.frame_len, 60);
        assert!(FrameConfig::new(10, 10).is_err());
    }

    #[test]
    fn attack_none_and_bias() {
        let ts = TimeSeries::new((0..50).map(|i| i as f64 * 0.3).collect(), 10.0).unwrap();
        let same = apply_attack(&ts, &AttackSignal::none()).unwrap();
        assert_eq!(same, ts);
        let shifted = apply_attack(&ts, &AttackSignal::bias(2.5, 0.0, 100.0)).unwrap();
        for (a, b) in shifted.samples().iter().zip(ts.samples()) {
            assert_eq!(*a, b + 2.5);
        }
    }

    #[test]
    fn chirp_is_confined_to_window() {
        let ts = TimeSeries::new(vec![0.0; 1500], 100.0).unwrap();
        let atk = AttackSignal::chirp(4.0, 0.2, 2.0, 3.0, 10.0);
        let out = apply_attack(&ts, &atk).unwrap();
        for (i, v) in out.samples().iter().enumerate() {
            let t = ts.time(i);
            if t < 3.0 || t > 10.0 {
                assert_eq!(*v, 0.0);
            } else {
                assert!(v.abs() <= 4.0 + 1e-12);
            }
        }
        let peak = out.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak > 3.9);
    }

    #[test]
    fn dataset_partitions() {
        let c = GeneratorConfig { total_samples: 300, seed: 7, ..Default::default() };
        let (ts, labels) = generate_complexity_dataset(&c).unwrap();
        assert_eq!(ts.len(), 300);
        assert!(labels[..100].iter().all(|&l| l == 1));
        assert!(labels[100..200].iter().all(|&l| l == 2));
        assert!(labels[200..].iter().all(|&l| l == 3));
        let (again, _) = generate_complexity_dataset(&c).unwrap();
        assert_eq!(ts, again);
        assert!(generate_complexity_dataset(&GeneratorConfig { total_samples: 301, ..c.clone() }).is_err());
        assert!(generate_complexity_dataset(&GeneratorConfig { freq_range: (2.0, 1.0), ..c }).is_err());
    }

    #[test]
    fn forced_unit_amplitude_sinusoid() {
        let c = GeneratorConfig {
            total_samples: 3000,
            amp_range: (1.0, 1.0),
            components: 1,
            segment_len: 1000,
            ..Default::default()
        };
        let (ts, _) = generate_segments(&[(SignalKind::Sinusoid, 1000)], &c).unwrap();
        let peak = ts.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak <= 1.0 && peak > 0.999, "peak {peak}");
    }

    #[test]
    fn switching_layout_is_1501_samples() {
        let n: usize = switching_layout().iter().map(|(_, n)| n).sum();
        assert_eq!(n, 1501);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let c = GeneratorConfig { total_samples: 99, seed: 3, ..Default::default() };
        let (ts, labels) = generate_complexity_dataset(&c).unwrap();
        let mut buf = Vec::new();
        ts.write_csv(&mut buf, Some(&labels), &[("seed", "3".into())]).unwrap();
        let (back, back_labels) = TimeSeries::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ts);
        assert_eq!(back_labels.unwrap(), labels);
    }

    #[test]
    fn invalid_series_rejected() {
        assert!(TimeSeries::new(vec![], 1.0).is_err());
        assert!(TimeSeries::new(vec![1.0], 0.0).is_err());
        assert!(TimeSeries::new(vec![f64::NAN], 1.0).is_err());
    }
}
