//! Continuous wavelet transform with generalized Morse wavelets.
//!
//! The transform is an analytic filter bank: each frame is zero-padded to the
//! next power of two, transformed, multiplied by the scaled Morse response
//! `psi(s * omega)` for every scale, and inverse-transformed. Negative
//! frequencies are discarded, so rows of the result are analytic signals.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generalized Morse wavelet `a * omega^beta * exp(-omega^gamma)` for omega > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorseParams {
    pub beta: f64,
    pub gamma: f64,
    norm_const: f64,
}

impl MorseParams {
    /// Normalized so the frequency-domain peak equals 2.
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !(beta > 0.0 && gamma > 0.0 && beta.is_finite() && gamma.is_finite()) {
            return Err(Error::config(format!(
                "Morse parameters must be positive, got beta={beta}, gamma={gamma}"
            )));
        }
        let peak = (beta / gamma).powf(1.0 / gamma);
        // log of omega^beta * exp(-omega^gamma) at the peak
        let log_peak = beta * peak.ln() - beta / gamma;
        let norm_const = 2.0 * (-log_peak).exp();
        Ok(Self { beta, gamma, norm_const })
    }

    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    /// Radian frequency of the response maximum, `(beta/gamma)^(1/gamma)`.
    pub fn peak_frequency(&self) -> f64 {
        (self.beta / self.gamma).powf(1.0 / self.gamma)
    }

    /// Time-bandwidth product `sqrt(beta * gamma)`.
    pub fn duration(&self) -> f64 {
        (self.beta * self.gamma).sqrt()
    }
}

impl Default for MorseParams {
    fn default() -> Self {
        Self::new(20.0, 3.0).expect("default Morse parameters are valid")
    }
}

/// Frequency response of the Morse wavelet; zero for `omega <= 0`.
pub fn morse_wavelet_freq(params: &MorseParams, omega: f64) -> f64 {
    if !(omega > 0.0) {
        return 0.0;
    }
    let log_v = params.beta * omega.ln() - omega.powf(params.gamma);
    params.norm_const * log_v.exp()
}

/// Log-spaced wavelet scales, in samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleGrid {
    scales: Vec<f64>,
    fs: f64,
    peak: f64,
}

impl ScaleGrid {
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn s_min(&self) -> f64 {
        self.scales[0]
    }

    pub fn s_max(&self) -> f64 {
        self.scales[self.scales.len() - 1]
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    /// Peak frequency in Hz of the wavelet at `scale`.
    pub fn peak_frequency_hz(&self, scale: f64) -> f64 {
        self.peak / (2.0 * PI * scale) * self.fs
    }

    /// Peak frequencies in Hz, one per scale (strictly decreasing).
    pub fn peak_frequencies(&self) -> Vec<f64> {
        self.scales.iter().map(|&s| self.peak_frequency_hz(s)).collect()
    }
}

/// Scales from the Nyquist-peaked wavelet up to the largest scale whose
/// wavelet footprint (two time spreads) fits in `frame_len` samples.
pub fn build_scale_grid(fs: f64, count: usize, params: &MorseParams, frame_len: usize) -> Result<ScaleGrid> {
    if count == 0 {
        return Err(Error::config("scale grid needs at least one scale"));
    }
    if !(fs > 0.0) {
        return Err(Error::config("sampling frequency must be positive"));
    }
    if frame_len < 2 {
        return Err(Error::config("frame length must be at least 2"));
    }
    let peak = params.peak_frequency();
    let s_min = peak / PI;
    let s_max = (frame_len as f64 * peak / (2.0 * params.duration())).max(s_min);
    let scales = if count == 1 {
        vec![(s_min * s_max).sqrt()]
    } else {
        let (lo, hi) = (s_min.ln(), s_max.ln());
        let mut v: Vec<f64> = (0..count)
            .map(|i| (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp())
            .collect();
        if s_max == s_min {
            // Degenerate frame: spread scales geometrically above s_min.
            for (i, s) in v.iter_mut().enumerate() {
                *s = s_min * 1.05f64.powi(i as i32);
            }
        }
        v
    };
    Ok(ScaleGrid { scales, fs, peak })
}

/// Complex CWT coefficients, `rows` scales by `cols` time samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CwtMatrix {
    pub values: Vec<Complex64>,
    pub rows: usize,
    pub cols: usize,
    pub frame_index: usize,
}

impl CwtMatrix {
    pub fn get(&self, scale: usize, m: usize) -> Complex64 {
        self.values[scale * self.cols + m]
    }
}

/// Squared CWT magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalogram {
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub frame_index: usize,
}

impl Scalogram {
    pub fn get(&self, scale: usize, m: usize) -> f64 {
        self.values[scale * self.cols + m]
    }

    pub fn row(&self, scale: usize) -> &[f64] {
        &self.values[scale * self.cols..(scale + 1) * self.cols]
    }

    /// CSV matrix: one line per scale, one column per time sample.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for r in 0..self.rows {
            out.write_record(self.row(r).iter().map(|v| v.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Precomputed filter bank for a fixed frame length.
#[derive(Clone)]
pub struct CwtBank {
    grid: ScaleGrid,
    frame_len: usize,
    padded: usize,
    filters: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CwtBank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CwtBank")
            .field("scales", &self.grid.len())
            .field("frame_len", &self.frame_len)
            .field("padded", &self.padded)
            .finish()
    }
}

impl CwtBank {
    pub fn new(grid: &ScaleGrid, params: &MorseParams, frame_len: usize) -> Result<Self> {
        if frame_len < 2 {
            return Err(Error::config("frame length must be at least 2"));
        }
        let padded = frame_len.next_power_of_two();
        let mut filters = Vec::with_capacity(grid.len() * padded);
        for &s in grid.scales() {
            for k in 0..padded {
                // bins above Nyquist are negative frequencies
                let omega = if k <= padded / 2 { 2.0 * PI * k as f64 / padded as f64 } else { -1.0 };
                filters.push(morse_wavelet_freq(params, s * omega));
            }
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            grid: grid.clone(),
            frame_len,
            padded,
            filters,
            forward: planner.plan_fft_forward(padded),
            inverse: planner.plan_fft_inverse(padded),
        })
    }

    pub fn grid(&self) -> &ScaleGrid {
        &self.grid
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn transform(&self, samples: &[f64], frame_index: usize) -> Result<CwtMatrix> {
        if samples.len() != self.frame_len {
            return Err(Error::shape(format!(
                "frame has {} samples, bank expects {}",
                samples.len(),
                self.frame_len
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("frame {frame_index}")));
        }
        let n = self.padded;
        let mut spectrum: Vec<Complex64> = samples
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
            .take(n)
            .collect();
        self.forward.process(&mut spectrum);
        let rows = self.grid.len();
        let mut values = Vec::with_capacity(rows * self.frame_len);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let scale = 1.0 / n as f64;
        for r in 0..rows {
            let filt = &self.filters[r * n..(r + 1) * n];
            for ((b, x), h) in buf.iter_mut().zip(&spectrum).zip(filt) {
                *b = x * (h * scale);
            }
            self.inverse.process(&mut buf);
            values.extend_from_slice(&buf[..self.frame_len]);
        }
        Ok(CwtMatrix { values, rows, cols: self.frame_len, frame_index })
    }
}

/// One-shot transform of a single frame.
pub fn cwt_frame(samples: &[f64], frame_index: usize, grid: &ScaleGrid, params: &MorseParams) -> Result<CwtMatrix> {
    CwtBank::new(grid, params, samples.len())?.transform(samples, frame_index)
}

/// `|w(s, m)|^2` elementwise.
pub fn scalogram(cwt: &CwtMatrix) -> Scalogram {
    Scalogram {
        values: cwt.values.iter().map(|c| c.norm_sqr()).collect(),
        rows: cwt.rows,
        cols: cwt.cols,
        frame_index: cwt.frame_index,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> MorseParams {
        MorseParams::default()
    }

    #[test]
    fn negative_frequencies_are_zero() {
        assert_eq!(morse_wavelet_freq(&params(), -1.0), 0.0);
        assert_eq!(morse_wavelet_freq(&params(), 0.0), 0.0);
    }

    #[test]
    fn peak_location_matches_grid_scan() {
        let p = params();
        let analytic = p.peak_frequency();
        let (mut best, mut best_w) = (0.0, 0.0);
        for i in 1..200_000 {
            let w = i as f64 * 1e-5 * 4.0;
            let v = morse_wavelet_freq(&p, w);
            if v > best {
                best = v;
                best_w = w;
            }
        }
        assert!((best_w - analytic).abs() < 1e-4, "{best_w} vs {analytic}");
        assert!((morse_wavelet_freq(&p, analytic) - 2.0).abs() < 1e-12);
        assert!((best - 2.0).abs() < 1e-8);
    }

    #[test]
    fn decays_monotonically_past_peak() {
        let p = params();
        let mut prev = morse_wavelet_freq(&p, p.peak_frequency());
        let mut w = p.peak_frequency();
        for _ in 0..200 {
            w += 0.05;
            let v = morse_wavelet_freq(&p, w);
            assert!(v <= prev);
            prev = v;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn grid_shape_and_fs_scaling() {
        let p = params();
        let g = build_scale_grid(100.0, 92, &p, 60).unwrap();
        assert_eq!(g.len(), 92);
        let f = g.peak_frequencies();
        assert!(f.windows(2).all(|w| w[0] > w[1]));
        assert!((f[0] - 50.0).abs() < 1e-9);
        let g2 = build_scale_grid(200.0, 92, &p, 60).unwrap();
        for (a, b) in g2.peak_frequencies().iter().zip(&f) {
            assert!((a / b - 2.0).abs() < 1e-12);
        }
        let one = build_scale_grid(100.0, 1, &p, 60).unwrap();
        assert!((one.scales()[0] - (g.s_min() * g.s_max()).sqrt()).abs() < 1e-12);
        assert!(build_scale_grid(100.0, 0, &p, 60).is_err());
    }

    #[test]
    fn zero_frame_gives_zero_matrix() {
        let p = params();
        let g = build_scale_grid(100.0, 16, &p, 60).unwrap();
        let w = cwt_frame(&[0.0; 60], 1, &g, &p).unwrap();
        assert_eq!((w.rows, w.cols), (16, 60));
        assert!(w.values.iter().all(|c| c.norm() == 0.0));
        assert!(scalogram(&w).values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_frame_rejected() {
        let p = params();
        let g = build_scale_grid(100.0, 4, &p, 8).unwrap();
        let mut x = [0.0; 8];
        x[3] = f64::NAN;
        assert!(cwt_frame(&x, 1, &g, &p).is_err());
    }

    #[test]
    fn scalogram_is_squared_magnitude() {
        let p = params();
        let g = build_scale_grid(100.0, 8, &p, 32).unwrap();
        let x: Vec<f64> = (0..32).map(|i| ((i * 7 % 11) as f64).sin()).collect();
        let w = cwt_frame(&x, 1, &g, &p).unwrap();
        let sc = scalogram(&w);
        assert_eq!(sc.get(0, 0), w.get(0, 0).norm_sqr());
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let sc2 = scalogram(&cwt_frame(&x2, 1, &g, &p).unwrap());
        for (a, b) in sc2.values.iter().zip(&sc.values) {
            assert!((a - 4.0 * b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}
