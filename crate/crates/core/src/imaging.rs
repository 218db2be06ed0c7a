//! Scalogram frames as images: colorize, grayscale, channel stacking and
//! nearest-neighbour resizing.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::wavelet::Scalogram;

/// Colormap anchors (position, r, g, b). Black through red and yellow to
/// white; luminance is strictly increasing along the map.
const HOT: [(f64, [f64; 3]); 4] = [
    (0.0, [0.0, 0.0, 0.0]),
    (0.375, [255.0, 0.0, 0.0]),
    (0.75, [255.0, 255.0, 0.0]),
    (1.0, [255.0, 255.0, 255.0]),
];

pub const COLORMAP_VERSION: &str = "hot-db40-v1";

/// Dynamic range shown by the colormap, in decades of energy.
pub const COLORMAP_DECADES: f64 = 4.0;

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Map normalized energy `v` in [0, 1] to an 8-bit RGB triple. The hot ramp
/// spans the top 40 dB; anything lower is black.
pub fn colormap(v: f64) -> [u8; 3] {
    let v = if v > 0.0 { (1.0 + v.min(1.0).log10() / COLORMAP_DECADES).max(0.0) } else { 0.0 };
    let i = HOT.windows(2).position(|w| v <= w[1].0).unwrap_or(HOT.len() - 2);
    let (x0, c0) = HOT[i];
    let (x1, c1) = HOT[i + 1];
    let t = (v - x0) / (x1 - x0);
    let mut out = [0u8; 3];
    for k in 0..3 {
        out[k] = (c0[k] + t * (c1[k] - c0[k])).round() as u8;
    }
    out
}

/// `width` = time samples, `height` = scales.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbFrame {
    pub width: usize,
    pub height: usize,
    /// Row-major `[y][x][channel]`.
    pub pixels: Vec<[u8; 3]>,
    pub frame_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    /// Row-major `[y][x]`, values in [0, 255].
    pub pixels: Vec<f32>,
    pub frame_index: usize,
}

impl GrayFrame {
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }
}

/// Multi-channel image, channel-first `[c][y][x]`, channels oldest to newest.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<f32>,
    pub first_frame_index: usize,
}

impl MultiChannelImage {
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.pixels[c * n..(c + 1) * n]
    }
}

/// Square resized stack fed to the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalogramStack {
    pub zeta: usize,
    pub channels: usize,
    /// Channel-first `[c][y][x]`.
    pub pixels: Vec<f32>,
    pub first_frame_index: usize,
}

impl ScalogramStack {
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.zeta * self.zeta;
        &self.pixels[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.pixels[(c * self.zeta + y) * self.zeta + x]
    }

    /// Build from resized single-channel frames (oldest first).
    pub fn from_frames(frames: &[&GrayFrame]) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::shape("empty stack"))?;
        if first.width != first.height || frames.iter().any(|f| f.width != first.width || f.height != first.height) {
            return Err(Error::shape("stack frames must share one square size"));
        }
        let mut pixels = Vec::with_capacity(frames.len() * first.pixels.len());
        for f in frames {
            pixels.extend_from_slice(&f.pixels);
        }
        Ok(Self { zeta: first.width, channels: frames.len(), pixels, first_frame_index: first.frame_index })
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.pixels
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Per-frame min-max normalize and map through the colormap. A constant
/// scalogram maps to the low end.
pub fn colorize(sc: &Scalogram) -> RgbFrame {
    let (lo, hi) = sc
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let pixels = sc
        .values
        .iter()
        .map(|&v| colormap(if span > 0.0 { (v - lo) / span } else { 0.0 }))
        .collect();
    RgbFrame { width: sc.cols, height: sc.rows, pixels, frame_index: sc.frame_index }
}

/// Luminosity weights 0.299 / 0.587 / 0.114.
pub fn to_grayscale(img: &RgbFrame) -> GrayFrame {
    let pixels = img
        .pixels
        .iter()
        .map(|p| (LUMA[0] * p[0] as f64 + LUMA[1] * p[1] as f64 + LUMA[2] * p[2] as f64) as f32)
        .collect();
    GrayFrame { width: img.width, height: img.height, pixels, frame_index: img.frame_index }
}

/// Sliding window (stride 1) of `c_prime` consecutive frames stacked channel-wise.
pub fn stack_channels(frames: &[GrayFrame], c_prime: usize) -> Result<Vec<MultiChannelImage>> {
    if c_prime == 0 {
        return Err(Error::config("c' must be at least 1"));
    }
    if frames.len() < c_prime {
        return Err(Error::InsufficientSamples { needed: c_prime, got: frames.len() });
    }
    let (w, h) = (frames[0].width, frames[0].height);
    if frames.iter().any(|f| f.width != w || f.height != h) {
        return Err(Error::shape("frames differ in size"));
    }
    Ok(frames
        .windows(c_prime)
        .map(|win| {
            let mut pixels = Vec::with_capacity(c_prime * w * h);
            for f in win {
                pixels.extend_from_slice(&f.pixels);
            }
            MultiChannelImage { width: w, height: h, channels: c_prime, pixels, first_frame_index: win[0].frame_index }
        })
        .collect())
}

fn resize_plane(src: &[f32], w: usize, h: usize, zeta: usize, out: &mut Vec<f32>) {
    for py in 0..zeta {
        let sy = py * h / zeta;
        for px in 0..zeta {
            let sx = px * w / zeta;
            out.push(src[sy * w + sx]);
        }
    }
}

/// Nearest-neighbour: output `(px, py)` reads input `(floor(px*w/zeta), floor(py*h/zeta))`.
pub fn resize(img: &MultiChannelImage, zeta: usize) -> Result<ScalogramStack> {
    if zeta == 0 {
        return Err(Error::config("zeta must be at least 1"));
    }
    let mut pixels = Vec::with_capacity(zeta * zeta * img.channels);
    for c in 0..img.channels {
        resize_plane(img.channel(c), img.width, img.height, zeta, &mut pixels);
    }
    Ok(ScalogramStack { zeta, channels: img.channels, pixels, first_frame_index: img.first_frame_index })
}

/// Resize a single grayscale frame to `zeta x zeta`.
pub fn resize_gray(frame: &GrayFrame, zeta: usize) -> Result<GrayFrame> {
    if zeta == 0 {
        return Err(Error::config("zeta must be at least 1"));
    }
    let mut pixels = Vec::with_capacity(zeta * zeta);
    resize_plane(&frame.pixels, frame.width, frame.height, zeta, &mut pixels);
    Ok(GrayFrame { width: zeta, height: zeta, pixels, frame_index: frame.frame_index })
}

/// Write stacks as one binary tensor file: little-endian `(zeta, zeta, c')`
/// as u32, then each stack's float32 intensities row-major in `[y][x][c]` order.
pub fn write_stacks<W: Write>(mut w: W, stacks: &[ScalogramStack]) -> Result<()> {
    let first = stacks.first().ok_or_else(|| Error::shape("no stacks to write"))?;
    let (zeta, c) = (first.zeta, first.channels);
    for v in [zeta, zeta, c] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(zeta * zeta * c * 4);
    for s in stacks {
        if s.zeta != zeta || s.channels != c {
            return Err(Error::shape("stacks differ in shape"));
        }
        buf.clear();
        for y in 0..zeta {
            for x in 0..zeta {
                for ch in 0..c {
                    buf.extend_from_slice(&s.get(ch, x, y).to_le_bytes());
                }
            }
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Inverse of [`write_stacks`]. Frame indices are not stored and come back as 0.
pub fn read_stacks<R: Read>(mut r: R) -> Result<Vec<ScalogramStack>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 12 {
        return Err(Error::Format("stack file shorter than its header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let (zeta, zeta2, c) = (word(0), word(1), word(2));
    if zeta != zeta2 || zeta == 0 || c == 0 {
        return Err(Error::Format(format!("bad stack header ({zeta}, {zeta2}, {c})")));
    }
    let per = zeta * zeta * c * 4;
    let body = &bytes[12..];
    if body.len() % per != 0 {
        return Err(Error::Format("stack file body is not a whole number of stacks".into()));
    }
    Ok(body
        .chunks_exact(per)
        .map(|chunk| {
            let mut pixels = vec![0f32; zeta * zeta * c];
            for (i, b) in chunk.chunks_exact(4).enumerate() {
                let ch = i % c;
                let xy = i / c;
                let (y, x) = (xy / zeta, xy % zeta);
                pixels[(ch * zeta + y) * zeta + x] = f32::from_le_bytes(b.try_into().unwrap());
            }
            ScalogramStack { zeta, channels: c, pixels, first_frame_index: 0 }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> f32) -> GrayFrame {
        let pixels = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        GrayFrame { width: w, height: h, pixels, frame_index: 1 }
    }

    #[test]
    fn colormap_luminance_is_monotone() {
        let mut prev = -1.0;
        for i in 0..=1000 {
            let [r, g, b] = colormap(i as f64 / 1000.0);
            let l = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
            assert!(l >= prev);
            prev = l;
        }
        assert_eq!(colormap(0.0), [0, 0, 0]);
        assert_eq!(colormap(1.0), [255, 255, 255]);
    }

    #[test]
    fn colorize_rules() {
        let sc = Scalogram { values: vec![3.0; 6], rows: 2, cols: 3, frame_index: 1 };
        let img = colorize(&sc);
        assert!(img.pixels.iter().all(|p| *p == colormap(0.0)));

        let sc = Scalogram { values: vec![0.0, 1.0, 5.0, 2.0, 0.5, 0.1], rows: 2, cols: 3, frame_index: 1 };
        let img = colorize(&sc);
        assert_eq!(img.pixels[2], colormap(1.0));
        let doubled = Scalogram { values: sc.values.iter().map(|v| 2.0 * v).collect(), ..sc.clone() };
        assert_eq!(colorize(&doubled), img);
    }

    #[test]
    fn grayscale_fixed_points() {
        let img = RgbFrame { width: 3, height: 1, pixels: vec![[255; 3], [0; 3], [100; 3]], frame_index: 1 };
        let g = to_grayscale(&img);
        assert!((g.pixels[0] - 255.0).abs() < 1e-4);
        assert_eq!(g.pixels[1], 0.0);
        assert!((g.pixels[2] - 100.0).abs() < 1e-4);
    }

    #[test]
    fn stacking_counts() {
        let frames: Vec<GrayFrame> = (0..10)
            .map(|i| GrayFrame { frame_index: i + 1, ..gray(4, 3, move |x, _| (x + i) as f32) })
            .collect();
        let stacks = stack_channels(&frames, 8).unwrap();
        assert_eq!(stacks.len(), 3);
        assert_eq!(stacks[1].first_frame_index, 2);
        assert_eq!(stacks[1].channel(7), &frames[8].pixels[..]);
        let single = stack_channels(&frames, 1).unwrap();
        assert_eq!(single.len(), 10);
        assert_eq!(single[4].pixels, frames[4].pixels);
        assert!(stack_channels(&frames[..5], 8).is_err());
    }

    #[test]
    fn resize_rules() {
        let frames = vec![gray(60, 48, |x, y| (x * 3 + y) as f32)];
        let img = &stack_channels(&frames, 1).unwrap()[0];
        let r = resize(img, 227).unwrap();
        assert_eq!((r.zeta, r.channels, r.pixels.len()), (227, 1, 227 * 227));
        assert_eq!(r.get(0, 226, 226), frames[0].get(226 * 60 / 227, 226 * 48 / 227));

        let sq = vec![gray(5, 5, |x, y| (x * 7 + y) as f32)];
        let img = &stack_channels(&sq, 1).unwrap()[0];
        assert_eq!(resize(img, 5).unwrap().pixels, sq[0].pixels);

        let constant = vec![gray(9, 4, |_, _| 42.0)];
        let img = &stack_channels(&constant, 1).unwrap()[0];
        assert!(resize(img, 13).unwrap().pixels.iter().all(|&v| v == 42.0));
    }

    #[test]
    fn stack_file_round_trip() {
        let frames: Vec<GrayFrame> = (0..3).map(|i| gray(4, 4, move |x, y| (x * 10 + y + i) as f32)).collect();
        let refs: Vec<&GrayFrame> = frames.iter().collect();
        let s = ScalogramStack::from_frames(&refs).unwrap();
        let mut buf = Vec::new();
        write_stacks(&mut buf, &[s.clone(), s.clone()]).unwrap();
        assert_eq!(&buf[..12], &[4, 0, 0, 0, 4, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(buf.len(), 12 + 2 * 4 * 4 * 3 * 4);
        // second float is (y=0, x=0, c=1)
        assert_eq!(f32::from_le_bytes(buf[16..20].try_into().unwrap()), s.get(1, 0, 0));
        let back = read_stacks(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].pixels, s.pixels);
    }
}
