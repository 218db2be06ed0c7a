//! Stage I front end: frames to scalogram stacks, batch or streaming.

use std::borrow::Borrow;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{colorize, resize_gray, to_grayscale, GrayFrame, ScalogramStack};
use crate::signal::{split_frames, FrameConfig};
use crate::wavelet::{build_scale_grid, scalogram, CwtBank, MorseParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub frame_len: usize,
    pub overlap: usize,
    pub scales: usize,
    pub beta: f64,
    pub gamma: f64,
    pub zeta: usize,
    pub channels: usize,
    pub fs: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { frame_len: 60, overlap: 54, scales: 48, beta: 3.0, gamma: 3.0, zeta: 64, channels: 4, fs: 100.0 }
    }
}

impl FeatureConfig {
    pub fn frames(&self) -> Result<FrameConfig> {
        FrameConfig::new(self.frame_len, self.overlap)
    }
}

/// Frame -> CWT -> scalogram -> color -> gray -> `zeta x zeta`, then
/// stride-1 stacking of `c'` frames.
#[derive(Debug)]
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    frames: FrameConfig,
    bank: CwtBank,
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig) -> Result<Self> {
        let frames = cfg.frames()?;
        if cfg.zeta == 0 || cfg.channels == 0 {
            return Err(Error::config("zeta and c' must be positive"));
        }
        let params = MorseParams::new(cfg.beta, cfg.gamma)?;
        let grid = build_scale_grid(cfg.fs, cfg.scales, &params, cfg.frame_len)?;
        let bank = CwtBank::new(&grid, &params, cfg.frame_len)?;
        Ok(Self { cfg, frames, bank })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn frame_config(&self) -> FrameConfig {
        self.frames
    }

    /// One resized grayscale scalogram image.
    pub fn image(&self, frame: &[f64], frame_index: usize) -> Result<GrayFrame> {
        let sc = scalogram(&self.bank.transform(frame, frame_index)?);
        resize_gray(&to_grayscale(&colorize(&sc)), self.cfg.zeta)
    }

    /// All stacks of a finite series, in frame order.
    pub fn stacks(&self, samples: &[f64]) -> Result<Vec<ScalogramStack>> {
        let images = split_frames(samples, self.frames)?
            .into_iter()
            .map(|f| self.image(f.samples, f.index))
            .collect::<Result<Vec<_>>>()?;
        let c = self.cfg.channels;
        if images.len() < c {
            let needed = self.cfg.frame_len + (c - 1) * self.frames.hop();
            return Err(Error::InsufficientSamples { needed, got: samples.len() });
        }
        images
            .windows(c)
            .map(|w| ScalogramStack::from_frames(&w.iter().collect::<Vec<_>>()))
            .collect()
    }

    /// Sample range `[start, end)` covered by the stack whose first frame has
    /// 1-based index `first_frame_index`.
    pub fn stack_span(&self, first_frame_index: usize) -> (usize, usize) {
        let hop = self.frames.hop();
        let start = (first_frame_index - 1) * hop;
        (start, start + (self.cfg.channels - 1) * hop + self.cfg.frame_len)
    }

    /// Samples needed before the first stack is available.
    pub fn warmup_len(&self) -> usize {
        self.cfg.frame_len + (self.cfg.channels - 1) * self.frames.hop()
    }
}

/// Online stacking: push samples one by one; a new stack is produced each
/// time a frame completes once `c'` frames exist.
#[derive(Debug)]
pub struct StackStream<F: Borrow<FeatureExtractor>> {
    fx: F,
    buffer: VecDeque<f64>,
    seen: usize,
    images: VecDeque<GrayFrame>,
    frames_done: usize,
}

impl<F: Borrow<FeatureExtractor>> StackStream<F> {
    pub fn new(fx: F) -> Self {
        Self { fx, buffer: VecDeque::new(), seen: 0, images: VecDeque::new(), frames_done: 0 }
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        self.fx.borrow()
    }

    pub fn push(&mut self, sample: f64) -> Result<Option<ScalogramStack>> {
        let fx: &FeatureExtractor = self.fx.borrow();
        let m = fx.cfg.frame_len;
        self.buffer.push_back(sample);
        if self.buffer.len() > m {
            self.buffer.pop_front();
        }
        self.seen += 1;
        let complete = self.seen >= m && (self.seen - m) % fx.frames.hop() == 0;
        if !complete {
            return Ok(None);
        }
        self.frames_done += 1;
        let frame: Vec<f64> = self.buffer.iter().copied().collect();
        self.images.push_back(fx.image(&frame, self.frames_done)?);
        if self.images.len() > fx.cfg.channels {
            self.images.pop_front();
        }
        if self.images.len() < fx.cfg.channels {
            return Ok(None);
        }
        ScalogramStack::from_frames(&self.images.iter().collect::<Vec<_>>()).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FeatureExtractor {
        FeatureExtractor::new(FeatureConfig { zeta: 16, scales: 12, channels: 3, ..Default::default() }).unwrap()
    }

    #[test]
    fn batch_and_stream_agree() {
        let fx = small();
        let y: Vec<f64> = (0..150).map(|i| (i as f64 * 0.3).sin() + 0.01 * i as f64).collect();
        let batch = fx.stacks(&y).unwrap();
        let mut stream = StackStream::new(&fx);
        let mut online = Vec::new();
        for &v in &y {
            if let Some(s) = stream.push(v).unwrap() {
                online.push(s);
            }
        }
        assert_eq!(batch, online);
        // 16 frames, 3 per stack
        assert_eq!(batch.len(), 14);
        assert_eq!(fx.stack_span(1), (0, 72));
        assert_eq!(fx.warmup_len(), 72);
    }

    #[test]
    fn short_input_errors() {
        assert!(matches!(small().stacks(&[0.0; 65]), Err(Error::InsufficientSamples { .. })));
    }
}
