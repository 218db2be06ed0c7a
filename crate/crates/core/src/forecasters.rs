//! Base forecasters of the stacked ensemble: `q`-step-ahead prediction from
//! `k`-sample windows.
//!
//! Each window is expressed as residuals about its least-squares line and
//! scaled by a factor frozen from the training split. The network predicts the
//! target's residual about the extrapolated line and is exactly odd in its
//! input, so constant and straight-line windows are continued exactly.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::rmse;
use crate::error::{Error, Result};
use crate::io::write_csv;
use crate::nn::layers::param_count;
use crate::nn::{
    checkpoint, train, ConcatSkip, Conv1d, Dense, DepthwiseConv1d, Gru, Layer, Lstm, Mode, OddSymmetric,
    OptimizerConfig, Relu, Residual, Sequential, Target, Tensor, TrainConfig, TrainHistory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Gru,
    Lstm,
    ConvLstm,
    /// Residual convolution stack feeding an LSTM.
    DeepA,
    /// Separable convolution stack feeding an LSTM.
    DeepB,
}

impl Architecture {
    pub const ALL: [Architecture; 5] =
        [Architecture::Gru, Architecture::Lstm, Architecture::ConvLstm, Architecture::DeepA, Architecture::DeepB];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Gru => "gru",
            Architecture::Lstm => "lstm",
            Architecture::ConvLstm => "conv-lstm",
            Architecture::DeepA => "deep-a",
            Architecture::DeepB => "deep-b",
        }
    }

    /// Design factors (advanced recurrence, depth, convolution, residual path).
    pub fn design_factors(self) -> DesignFactors {
        let f = |a, b, c, d| DesignFactors { advanced_recurrent: a, deep: b, convolutional: c, residual: d };
        match self {
            Architecture::Gru => f(false, false, false, false),
            Architecture::Lstm => f(true, false, false, false),
            Architecture::ConvLstm => f(true, false, true, true),
            Architecture::DeepA | Architecture::DeepB => f(true, true, true, true),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config(format!("unknown architecture {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignFactors {
    pub advanced_recurrent: bool,
    pub deep: bool,
    pub convolutional: bool,
    pub residual: bool,
}

impl DesignFactors {
    pub fn marks(&self) -> [bool; 4] {
        [self.advanced_recurrent, self.deep, self.convolutional, self.residual]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastSpec {
    pub k: usize,
    pub q: usize,
    pub architecture: Architecture,
    pub factors: DesignFactors,
    pub hidden: usize,
    pub conv_channels: usize,
    /// Zero the convolution branch of the concatenating skip (ablation).
    #[serde(default)]
    pub ablate_conv_branch: bool,
}

impl ForecastSpec {
    pub fn new(architecture: Architecture, k: usize, q: usize) -> Self {
        Self {
            k,
            q,
            architecture,
            factors: architecture.design_factors(),
            hidden: 16,
            conv_channels: 8,
            ablate_conv_branch: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.q == 0 {
            return Err(Error::config("k and q must be at least 1"));
        }
        if self.hidden == 0 || self.conv_channels == 0 {
            return Err(Error::config("layer widths must be positive"));
        }
        if self.factors.residual && !self.factors.convolutional {
            return Err(Error::config("a residual path requires convolutional layers"));
        }
        if self.factors != self.architecture.design_factors() {
            return Err(Error::config(format!(
                "design factors {:?} do not describe {}",
                self.factors.marks(),
                self.architecture
            )));
        }
        if self.ablate_conv_branch && self.architecture != Architecture::ConvLstm {
            return Err(Error::config("only conv-lstm has a concatenating skip to ablate"));
        }
        Ok(())
    }
}

/// Least-squares line through `window` at unit spacing: value at the last
/// index and slope per sample.
pub fn trend_line(window: &[f64]) -> (f64, f64) {
    let k = window.len();
    let mean = window.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return (mean, 0.0);
    }
    let centre = (k - 1) as f64 / 2.0;
    let (mut num, mut den) = (0.0, 0.0);
    for (j, &v) in window.iter().enumerate() {
        let d = j as f64 - centre;
        num += d * (v - mean);
        den += d * d;
    }
    let slope = num / den;
    (mean + slope * centre, slope)
}

/// Residuals of `window` about its trend line, and the line extrapolated `q`
/// samples past the last one.
pub fn detrend(window: &[f64], q: usize) -> (Vec<f64>, f64) {
    let (last, slope) = trend_line(window);
    let k = window.len();
    let res = window.iter().enumerate().map(|(j, &v)| v - (last - slope * (k - 1 - j) as f64)).collect();
    (res, last + slope * q as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchStats {
    pub mean: f64,
    pub variance: f64,
    pub trials: usize,
}

#[derive(Clone)]
pub struct Forecaster {
    spec: ForecastSpec,
    net: OddSymmetric,
    scale: f64,
    bench: Option<BenchStats>,
}

impl fmt::Debug for Forecaster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Forecaster")
            .field("spec", &self.spec)
            .field("scale", &self.scale)
            .field("bench", &self.bench)
            .finish_non_exhaustive()
    }
}

fn recurrent_head(arch: Architecture, input: usize, hidden: usize, rng: &mut ChaCha8Rng, net: &mut Sequential) {
    if arch == Architecture::Gru {
        net.push(Gru::new(input, hidden, false, rng));
    } else {
        net.push(Lstm::new(input, hidden, false, rng));
    }
    net.push(Dense::new(hidden, 1, rng));
}

/// Network for `spec` with seeded initialization and unit scale.
pub fn build_architecture(spec: ForecastSpec, seed: u64) -> Result<Forecaster> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, c) = (spec.hidden, spec.conv_channels);
    let mut net = Sequential::new();
    let rec_input = match spec.architecture {
        Architecture::Gru | Architecture::Lstm => 1,
        Architecture::ConvLstm => {
            let branch = Sequential::new().with(Conv1d::new(1, c, 5, &mut rng)).with(Relu::new());
            let mut skip = ConcatSkip::new(branch);
            skip.zero_branch = spec.ablate_conv_branch;
            net.push(skip);
            c + 1
        }
        Architecture::DeepA => {
            net.push(Conv1d::new(1, c, 5, &mut rng));
            net.push(Relu::new());
            for _ in 0..4 {
                let inner = Sequential::new()
                    .with(Conv1d::new(c, c, 3, &mut rng))
                    .with(Relu::new())
                    .with(Conv1d::new(c, c, 3, &mut rng));
                net.push(Residual::new(inner));
                net.push(Relu::new());
            }
            c
        }
        Architecture::DeepB => {
            net.push(DepthwiseConv1d::new(1, 5, &mut rng));
            net.push(Dense::new(1, c, &mut rng));
            net.push(Relu::new());
            for _ in 0..2 {
                let inner = Sequential::new()
                    .with(DepthwiseConv1d::new(c, 5, &mut rng))
                    .with(Dense::new(c, c, &mut rng))
                    .with(Relu::new());
                net.push(Residual::new(inner));
            }
            c
        }
    };
    recurrent_head(spec.architecture, rec_input, h, &mut rng, &mut net);
    Ok(Forecaster { spec, net: OddSymmetric::new(net), scale: 1.0, bench: None })
}

impl Forecaster {
    pub fn spec(&self) -> &ForecastSpec {
        &self.spec
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.net)
    }

    /// Mean inference seconds `T^l`, once benchmarked.
    pub fn inference_time(&self) -> Option<f64> {
        self.bench.map(|b| b.mean)
    }

    pub fn bench(&self) -> Option<BenchStats> {
        self.bench
    }

    pub fn set_inference_time(&mut self, stats: BenchStats) {
        self.bench = Some(stats);
    }

    pub fn network_mut(&mut self) -> &mut dyn Layer {
        &mut self.net
    }

    fn inputs(&self, windows: &[&[f64]]) -> Result<(Tensor, Vec<f64>)> {
        let k = self.spec.k;
        let mut data = Vec::with_capacity(windows.len() * k);
        let mut baselines = Vec::with_capacity(windows.len());
        for w in windows {
            if w.len() != k {
                return Err(Error::shape(format!("window of {} samples, model expects k={k}", w.len())));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("forecast window".into()));
            }
            let (res, base) = detrend(w, self.spec.q);
            data.extend(res.iter().map(|r| r / self.scale));
            baselines.push(base);
        }
        Ok((Tensor::new(vec![windows.len(), k, 1], data)?, baselines))
    }

    pub fn forecast_batch(&mut self, windows: &[&[f64]]) -> Result<Vec<f64>> {
        if windows.is_empty() {
            return Ok(Vec::new());
        }
        let (x, base) = self.inputs(windows)?;
        let out = self.net.forward(&x, Mode::Eval)?;
        Ok(out.data().iter().zip(base).map(|(o, b)| b + self.scale * o).collect())
    }

    /// `y_{t+q}` from the `k` most recent samples.
    pub fn forecast(&mut self, window: &[f64]) -> Result<f64> {
        Ok(self.forecast_batch(&[window])?[0])
    }

    /// Forecasts for every full window of each segment, in order.
    pub fn forecast_series(&mut self, series: &[f64]) -> Result<Vec<f64>> {
        let (k, q) = (self.spec.k, self.spec.q);
        if series.len() < k + q {
            return Ok(Vec::new());
        }
        let starts: Vec<usize> = (0..=series.len() - k - q).collect();
        let mut out = Vec::with_capacity(starts.len());
        for chunk in starts.chunks(256) {
            let windows: Vec<&[f64]> = chunk.iter().map(|&s| &series[s..s + k]).collect();
            out.extend(self.forecast_batch(&windows)?);
        }
        Ok(out)
    }

    /// Mean wall-clock seconds per single-window forecast over `trials` runs,
    /// after a few untimed warm-up calls. Stored on the model.
    pub fn benchmark_inference(&mut self, window: &[f64], trials: usize) -> Result<BenchStats> {
        if trials == 0 {
            return Err(Error::config("benchmark needs at least one trial"));
        }
        for _ in 0..crate::metrics::TIMING_WARMUP {
            self.forecast(window)?;
        }
        let mut times = Vec::with_capacity(trials);
        for _ in 0..trials {
            let start = Instant::now();
            std::hint::black_box(self.forecast(window)?);
            times.push(start.elapsed().as_secs_f64());
        }
        let mean = times.iter().sum::<f64>() / trials as f64;
        let variance = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / trials as f64;
        let stats = BenchStats { mean, variance, trials };
        self.bench = Some(stats);
        Ok(stats)
    }

    /// Scale factor, then the nn checkpoint.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.scale.to_le_bytes())?;
        checkpoint::save(&self.net, w)
    }

    pub fn load<R: Read>(spec: ForecastSpec, mut r: R) -> Result<Self> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        let scale = f64::from_le_bytes(b);
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Format(format!("invalid forecaster scale {scale}")));
        }
        let mut f = build_architecture(spec, 0)?;
        checkpoint::load(&mut f.net, r)?;
        f.scale = scale;
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    /// Spacing between training window starts.
    pub stride: usize,
    pub seed: u64,
}

impl Default for ForecastTraining {
    fn default() -> Self {
        Self { epochs: 6, batch_size: 32, lr: 5e-3, lr_decay: 0.7, stride: 3, seed: 0 }
    }
}

/// `(segment, start)` of every window with a target inside its segment.
pub fn window_index(segments: &[&[f64]], k: usize, q: usize, stride: usize) -> Vec<(usize, usize)> {
    let stride = stride.max(1);
    segments
        .iter()
        .enumerate()
        .flat_map(|(s, seg)| {
            let last = seg.len().checked_sub(k + q).map(|l| l + 1).unwrap_or(0);
            (0..last).step_by(stride).map(move |i| (s, i))
        })
        .collect()
}

/// Fit a forecaster to windows drawn from the training segments.
pub fn train_forecaster(
    spec: ForecastSpec,
    segments: &[&[f64]],
    training: &ForecastTraining,
) -> Result<(Forecaster, TrainHistory)> {
    let (k, q) = (spec.k, spec.q);
    let mut index = window_index(segments, k, q, training.stride);
    if index.is_empty() {
        return Err(Error::InsufficientSamples { needed: k + q, got: segments.iter().map(|s| s.len()).max().unwrap_or(0) });
    }
    let mut model = build_architecture(spec, training.seed)?;
    let mut sq = 0.0;
    let mut count = 0usize;
    for &(s, i) in &index {
        let (res, _) = detrend(&segments[s][i..i + k], q);
        sq += res.iter().map(|r| r * r).sum::<f64>();
        count += k;
    }
    let rms = (sq / count as f64).sqrt();
    model.scale = if rms > 1e-12 { rms } else { 1.0 };
    index.shuffle(&mut ChaCha8Rng::seed_from_u64(training.seed ^ 0x5eed));
    let tc = TrainConfig {
        epochs: training.epochs,
        batch_size: training.batch_size,
        optimizer: OptimizerConfig::adam(training.lr),
        lr_decay: training.lr_decay,
        seed: training.seed,
    };
    let scale = model.scale;
    let history = train(&mut model.net, index.len(), &tc, |batch| {
        let mut x = Vec::with_capacity(batch.len() * k);
        let mut y = Vec::with_capacity(batch.len());
        for &b in batch {
            let (s, i) = index[b];
            let seg = segments[s];
            let (res, base) = detrend(&seg[i..i + k], q);
            x.extend(res.iter().map(|r| r / scale));
            y.push((seg[i + k + q - 1] - base) / scale);
        }
        Ok((Tensor::new(vec![batch.len(), k, 1], x)?, Target::Values(Tensor::new(vec![batch.len(), 1], y)?)))
    })?;
    Ok((model, history))
}

/// Forecasts and targets over all windows of the segments.
pub fn evaluate(model: &mut Forecaster, segments: &[&[f64]]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (k, q) = (model.spec.k, model.spec.q);
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for seg in segments {
        pred.extend(model.forecast_series(seg)?);
        if seg.len() >= k + q {
            truth.extend_from_slice(&seg[k + q - 1..]);
        }
    }
    Ok((pred, truth))
}

/// RMSE of the persistence forecast `y_{t+q} = y_t` over the same windows.
pub fn persistence_rmse(segments: &[&[f64]], k: usize, q: usize) -> Result<f64> {
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for seg in segments {
        if seg.len() >= k + q {
            pred.extend_from_slice(&seg[k - 1..seg.len() - q]);
            truth.extend_from_slice(&seg[k + q - 1..]);
        }
    }
    rmse(&truth, &pred)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub model_id: usize,
    pub architecture: Architecture,
    pub train_rmse: f64,
    pub val_rmse: f64,
    pub t_l_seconds: f64,
}

pub fn write_manifest<W: Write>(w: W, meta: &[(&str, String)], rows: &[ManifestRow]) -> Result<()> {
    write_csv(
        w,
        meta,
        &["modelId", "architecture", "trainRMSE", "valRMSE", "T_l_seconds"],
        rows.iter().map(|r| {
            vec![
                r.model_id.to_string(),
                r.architecture.to_string(),
                r.train_rmse.to_string(),
                r.val_rmse.to_string(),
                r.t_l_seconds.to_string(),
            ]
        }),
    )
}

pub fn read_manifest<R: Read>(r: R) -> Result<Vec<ManifestRow>> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::Format("short manifest row".into()));
        let num = |i: usize| -> Result<f64> {
            field(i)?.parse().map_err(|_| Error::Format(format!("bad number in manifest column {i}")))
        };
        rows.push(ManifestRow {
            model_id: field(0)?.parse().map_err(|_| Error::Format("bad model id".into()))?,
            architecture: field(1)?.parse()?,
            train_rmse: num(2)?,
            val_rmse: num(3)?,
            t_l_seconds: num(4)?,
        });
    }
    Ok(rows)
}
