//! Optimally improved permutation entropy (OIPE) of scalogram stacks.
//!
//! A stack is binarized, each channel is scanned column-wise into a count
//! series, and the channels are fused by elementwise product. The fused
//! series is embedded, symbolized by uniform quantization into `H` levels,
//! and the Shannon entropy of the symbolic patterns is normalized by
//! `ln(H^D)`. `H` itself is picked per series by K-fold cross-validation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ScalogramStack;

/// Fused count series, one value per image column.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedSeries {
    pub values: Vec<f64>,
}

/// Binarization threshold: midpoint of the stack's intensity range.
pub fn binarization_threshold(stack: &ScalogramStack) -> f64 {
    let (lo, hi) = stack.min_max();
    lo as f64 + (hi as f64 - lo as f64) / 2.0
}

/// Binarize at the midpoint threshold, count set pixels per column, and fuse
/// channels by elementwise product.
pub fn binarize_and_fuse(stack: &ScalogramStack) -> FusedSeries {
    binarize_and_fuse_at(stack, binarization_threshold(stack))
}

/// As [`binarize_and_fuse`] with an explicit threshold; a pixel is set when
/// strictly above it.
pub fn binarize_and_fuse_at(stack: &ScalogramStack, threshold: f64) -> FusedSeries {
    let z = stack.zeta;
    let mut fused = vec![1.0f64; z];
    for c in 0..stack.channels {
        let plane = stack.channel(c);
        for (x, f) in fused.iter_mut().enumerate() {
            let count = (0..z).filter(|&y| plane[y * z + x] as f64 > threshold).count();
            *f *= count as f64;
        }
    }
    FusedSeries { values: fused }
}

/// Delay-embedding matrix, `rows` vectors of length `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    pub values: Vec<f64>,
    pub rows: usize,
    pub dim: usize,
    pub delay: usize,
}

impl EmbeddingSpace {
    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }
}

pub fn embed(y: &[f64], dim: usize, delay: usize) -> Result<EmbeddingSpace> {
    if dim == 0 || delay == 0 {
        return Err(Error::config("embedding dimension and delay must be positive"));
    }
    let span = (dim - 1) * delay + 1;
    if y.len() < span {
        return Err(Error::InsufficientSamples { needed: span, got: y.len() });
    }
    let rows = y.len() - (dim - 1) * delay;
    let mut values = Vec::with_capacity(rows * dim);
    for j in 0..rows {
        values.extend((0..dim).map(|k| y[j + k * delay]));
    }
    Ok(EmbeddingSpace { values, rows, dim, delay })
}

/// Integer symbol patterns. Columns after the first may leave `[0, H-1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicSpace {
    pub symbols: Vec<i64>,
    pub rows: usize,
    pub dim: usize,
    pub levels: usize,
    pub delta: f64,
}

impl SymbolicSpace {
    pub fn row(&self, j: usize) -> &[i64] {
        &self.symbols[j * self.dim..(j + 1) * self.dim]
    }
}

/// Uniform quantization of the first column into `H` bins of width
/// `(y_max - y_min) / H`; later columns are offset from the first by whole bins.
/// A constant input (zero bin width) maps to all-zero symbols.
pub fn symbolize(e: &EmbeddingSpace, levels: usize) -> Result<SymbolicSpace> {
    if levels < 2 {
        return Err(Error::config(format!("need at least 2 quantization levels, got {levels}")));
    }
    let (lo, hi) = e
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let delta = (hi - lo) / levels as f64;
    let mut symbols = Vec::with_capacity(e.values.len());
    for j in 0..e.rows {
        let row = e.row(j);
        if !(delta > 0.0) {
            symbols.extend(std::iter::repeat(0).take(e.dim));
            continue;
        }
        let first = (((row[0] - lo) / delta).floor() as i64).min(levels as i64 - 1);
        symbols.push(first);
        for &v in &row[1..] {
            symbols.push(first + ((v - row[0]) / delta).floor() as i64);
        }
    }
    Ok(SymbolicSpace { symbols, rows: e.rows, dim: e.dim, levels, delta })
}

/// Occurrence counts of each distinct row.
fn pattern_counts(q: &SymbolicSpace) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..q.rows).collect();
    idx.sort_by(|&a, &b| q.row(a).cmp(q.row(b)));
    let mut counts = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && q.row(idx[j]) == q.row(idx[i]) {
            j += 1;
        }
        counts.push(j - i);
        i = j;
    }
    counts
}

/// `-sum p ln p / ln(H^D)` over observed pattern frequencies, clamped to [0, 1].
pub fn normalized_entropy(q: &SymbolicSpace) -> f64 {
    if q.rows == 0 {
        return 0.0;
    }
    let n = q.rows as f64;
    let h: f64 = pattern_counts(q)
        .into_iter()
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    let norm = q.dim as f64 * (q.levels as f64).ln();
    let en = h / norm;
    if en > 1.0 {
        log::debug!("entropy {en} exceeds 1 (more observed patterns than H^D); clamped");
        1.0
    } else {
        en.max(0.0)
    }
}

/// Entropy of `y` at a fixed `H`.
pub fn entropy_at(y: &[f64], dim: usize, delay: usize, levels: usize) -> Result<f64> {
    Ok(normalized_entropy(&symbolize(&embed(y, dim, delay)?, levels)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OipeConfig {
    pub dim: usize,
    pub delay: usize,
    pub h_min: usize,
    pub h_max: usize,
    pub folds: usize,
}

impl Default for OipeConfig {
    fn default() -> Self {
        Self { dim: 4, delay: 1, h_min: 2, h_max: 32, folds: 10 }
    }
}

impl OipeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h_min < 2 || self.h_max < self.h_min {
            return Err(Error::config(format!(
                "need 2 <= H_min <= H_max, got {}..{}",
                self.h_min, self.h_max
            )));
        }
        if self.folds < 2 {
            return Err(Error::config("cross-validation needs at least 2 folds"));
        }
        if self.dim == 0 || self.delay == 0 {
            return Err(Error::config("embedding dimension and delay must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HSelection {
    pub h_star: usize,
    /// `(H, Err(H))` for every candidate, ascending in `H`.
    pub err_curve: Vec<(usize, f64)>,
}

/// Contiguous fold bounds `[start, end)`.
pub fn fold_bounds(n: usize, k: usize) -> Vec<(usize, usize)> {
    (0..k).map(|i| (i * n / k, (i + 1) * n / k)).collect()
}

/// Pick `H` minimizing the mean train/validation entropy gap over `K`
/// contiguous folds. Each subset is symbolized with its own bounds. Ties go
/// to the smaller `H`.
pub fn select_h(series: &[f64], cfg: &OipeConfig) -> Result<HSelection> {
    cfg.validate()?;
    let span = (cfg.dim - 1) * cfg.delay + 1;
    let bounds = fold_bounds(series.len(), cfg.folds);
    let mut splits = Vec::with_capacity(cfg.folds);
    for (i, &(a, b)) in bounds.iter().enumerate() {
        let train: Vec<f64> = series[..a].iter().chain(&series[b..]).copied().collect();
        if b - a < span {
            return Err(Error::FoldTooShort { fold: i + 1, len: b - a, needed: span });
        }
        if train.len() < span {
            return Err(Error::FoldTooShort { fold: i + 1, len: train.len(), needed: span });
        }
        let val_e = embed(&series[a..b], cfg.dim, cfg.delay)?;
        let train_e = embed(&train, cfg.dim, cfg.delay)?;
        splits.push((train_e, val_e));
    }
    let mut err_curve = Vec::with_capacity(cfg.h_max - cfg.h_min + 1);
    let mut best: Option<(usize, f64)> = None;
    for h in cfg.h_min..=cfg.h_max {
        let mut total = 0.0;
        for (train_e, val_e) in &splits {
            let en_t = normalized_entropy(&symbolize(train_e, h)?);
            let en_v = normalized_entropy(&symbolize(val_e, h)?);
            total += (en_t - en_v).abs();
        }
        let err = total / cfg.folds as f64;
        err_curve.push((h, err));
        if best.map_or(true, |(_, e)| err < e) {
            best = Some((h, err));
        }
    }
    let h_star = best.map(|(h, _)| h).unwrap_or(cfg.h_min);
    Ok(HSelection { h_star, err_curve })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub en: f64,
    pub h_star: usize,
    pub err_curve: Vec<(usize, f64)>,
    pub level: Option<usize>,
}

/// Full OIPE of a fused series: select `H*`, then entropy of the whole series at `H*`.
pub fn oipe(series: &FusedSeries, cfg: &OipeConfig) -> Result<EntropyReport> {
    let sel = select_h(&series.values, cfg)?;
    let en = entropy_at(&series.values, cfg.dim, cfg.delay, sel.h_star)?;
    Ok(EntropyReport { en, h_star: sel.h_star, err_curve: sel.err_curve, level: None })
}

/// Entropy of a stack end to end.
pub fn stack_entropy(stack: &ScalogramStack, cfg: &OipeConfig) -> Result<EntropyReport> {
    oipe(&binarize_and_fuse(stack), cfg)
}

/// Number of complexity levels, `floor(rho * n)`.
pub fn level_count(rho: f64, n_models: usize) -> usize {
    (rho * n_models as f64).floor() as usize
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    let in_range = thresholds.iter().all(|&t| t > 0.0 && t < 1.0);
    let increasing = thresholds.windows(2).all(|w| w[0] < w[1]);
    if !in_range || !increasing {
        return Err(Error::config(format!(
            "complexity thresholds must be strictly increasing in (0, 1): {thresholds:?}"
        )));
    }
    Ok(())
}

/// Level in `1..=r`: bins are left-closed, `[tau_{k-1}, tau_k)`.
pub fn complexity_level(en: f64, thresholds: &[f64]) -> Result<usize> {
    check_thresholds(thresholds)?;
    Ok(1 + thresholds.iter().filter(|&&t| en >= t).count())
}

/// Thresholds separating classes `1..=r` (labels in `classes`) by entropy.
/// Each cut minimizes misclassification between adjacent classes.
pub fn fit_thresholds(entropies: &[f64], classes: &[u8], r: usize) -> Result<Vec<f64>> {
    if entropies.len() != classes.len() {
        return Err(Error::shape("entropy and class counts differ"));
    }
    if r < 2 {
        return Err(Error::config("need at least two complexity levels"));
    }
    let mut cuts = Vec::with_capacity(r - 1);
    for k in 1..r as u8 {
        let mut pts: Vec<(f64, bool)> = entropies
            .iter()
            .zip(classes)
            .filter(|(_, &c)| c == k || c == k + 1)
            .map(|(&e, &c)| (e, c == k + 1))
            .collect();
        if !pts.iter().any(|p| !p.1) || !pts.iter().any(|p| p.1) {
            return Err(Error::MissingClass(if pts.iter().any(|p| p.1) { k as usize } else { k as usize + 1 }));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        // cut below index i: everything before is "low", from i on is "high"
        let total_high = pts.iter().filter(|p| p.1).count();
        let mut high_below = 0;
        let mut low_below = 0;
        let mut best = (usize::MAX, 0.0);
        for i in 0..=pts.len() {
            if i > 0 && i < pts.len() && pts[i].0 == pts[i - 1].0 {
                if pts[i - 1].1 { high_below += 1 } else { low_below += 1 }
                continue;
            }
            if i > 0 {
                if pts[i - 1].1 { high_below += 1 } else { low_below += 1 }
            }
            let low_above = (pts.len() - total_high) - low_below;
            let errors = high_below + low_above;
            let cut = match i {
                0 => pts[0].0,
                i if i == pts.len() => pts[i - 1].0 + 1e-9,
                i => 0.5 * (pts[i - 1].0 + pts[i].0),
            };
            if errors < best.0 {
                best = (errors, cut);
            }
        }
        cuts.push(best.1.clamp(1e-9, 1.0 - 1e-9));
    }
    check_thresholds(&cuts)?;
    Ok(cuts)
}

/// Fraction of samples whose level equals their class label.
pub fn label_purity(entropies: &[f64], classes: &[u8], thresholds: &[f64]) -> Result<f64> {
    let mut hits = 0usize;
    for (&e, &c) in entropies.iter().zip(classes) {
        if complexity_level(e, thresholds)? == c as usize {
            hits += 1;
        }
    }
    Ok(hits as f64 / entropies.len().max(1) as f64)
}

/// `stackIndex,En,Hstar,level` CSV.
pub fn write_reports_csv<W: Write>(w: W, reports: &[EntropyReport], meta: &[(&str, String)]) -> Result<()> {
    crate::io::write_csv(
        w,
        meta,
        &["stackIndex", "En", "Hstar", "level"],
        reports.iter().enumerate().map(|(i, r)| {
            vec![
                (i + 1).to_string(),
                r.en.to_string(),
                r.h_star.to_string(),
                r.level.map_or_else(String::new, |l| l.to_string()),
            ]
        }),
    )
}

/// Inverse of [`write_reports_csv`]; error curves are not stored and come
/// back empty.
pub fn read_reports_csv<R: std::io::Read>(r: R) -> Result<Vec<EntropyReport>> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).map(str::trim).ok_or_else(|| Error::Format("short entropy row".into()));
        let bad = |i: usize| Error::Format(format!("bad value in entropy column {i}"));
        let level = match field(3)? {
            "" => None,
            s => Some(s.parse().map_err(|_| bad(3))?),
        };
        out.push(EntropyReport {
            en: field(1)?.parse().map_err(|_| bad(1))?,
            h_star: field(2)?.parse().map_err(|_| bad(2))?,
            err_curve: Vec::new(),
            level,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(values: &[f64], dim: usize) -> EmbeddingSpace {
        EmbeddingSpace { values: values.to_vec(), rows: values.len() / dim, dim, delay: 1 }
    }

    #[test]
    fn fuse_rules() {
        let zero = ScalogramStack { zeta: 4, channels: 2, pixels: vec![0.0; 32], first_frame_index: 1 };
        assert!(binarize_and_fuse(&zero).values.iter().all(|&v| v == 0.0));

        let ones = ScalogramStack { zeta: 5, channels: 1, pixels: vec![200.0; 25], first_frame_index: 1 };
        assert!(binarize_and_fuse_at(&ones, 128.0).values.iter().all(|&v| v == 5.0));

        let mut px = vec![1.0f32; 9];
        px[0] = 255.0;
        let s = ScalogramStack { zeta: 3, channels: 1, pixels: px, first_frame_index: 1 };
        assert_eq!(binarization_threshold(&s), 128.0);
    }

    #[test]
    fn fuse_multiplies_channel_counts() {
        // channel 0: column 0 has 2 set pixels; channel 1: column 0 has 1
        let z = 2;
        let pixels = vec![9.0, 0.0, 9.0, 0.0, 9.0, 9.0, 0.0, 0.0];
        let s = ScalogramStack { zeta: z, channels: 2, pixels, first_frame_index: 1 };
        assert_eq!(binarize_and_fuse(&s).values, vec![2.0, 0.0]);
    }

    #[test]
    fn embedding_shapes() {
        let y: Vec<f64> = (0..227).map(f64::from).collect();
        assert_eq!(embed(&y, 4, 1).unwrap().rows, 224);
        assert_eq!(embed(&y, 1, 1).unwrap().rows, 227);
        let e = embed(&[1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        assert_eq!(e.rows, 2);
        assert_eq!(e.row(0), &[1.0, 3.0]);
        assert_eq!(e.row(1), &[2.0, 4.0]);
        assert!(embed(&[1.0, 2.0], 3, 1).is_err());
    }

    #[test]
    fn symbolize_arithmetic() {
        let e = space(&[0.0, 3.0, 5.0, 8.0], 2);
        let q = symbolize(&e, 4).unwrap();
        assert_eq!(q.delta, 2.0);
        assert_eq!(q.row(0), &[0, 1]);
        assert_eq!(q.row(1)[0], 2);
        assert_eq!(q.row(1)[1], 3);
        let flat = symbolize(&space(&[7.0; 8], 2), 4).unwrap();
        assert!(flat.symbols.iter().all(|&s| s == 0));
        assert!(symbolize(&e, 1).is_err());
    }

    #[test]
    fn entropy_extremes() {
        let flat = symbolize(&space(&[7.0; 8], 2), 4).unwrap();
        assert_eq!(normalized_entropy(&flat), 0.0);
        // all H^D = 4 patterns of H=2, D=2, once each
        let q = SymbolicSpace { symbols: vec![0, 0, 0, 1, 1, 0, 1, 1], rows: 4, dim: 2, levels: 2, delta: 1.0 };
        assert!((normalized_entropy(&q) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_equiprobable_patterns_at_h32_d4() {
        let mut symbols = Vec::new();
        for j in 0..224 {
            symbols.extend_from_slice(if j % 2 == 0 { &[0, 1, 2, 3] } else { &[5, 5, 5, 5] });
        }
        let q = SymbolicSpace { symbols, rows: 224, dim: 4, levels: 32, delta: 1.0 };
        let expected = 2f64.ln() / (32f64.powi(4)).ln();
        assert!((normalized_entropy(&q) - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_series_selects_h_min() {
        let cfg = OipeConfig { h_min: 3, h_max: 9, ..Default::default() };
        let sel = select_h(&[4.0; 64], &cfg).unwrap();
        assert_eq!(sel.h_star, 3);
        assert!(sel.err_curve.iter().all(|&(_, e)| e == 0.0));
    }

    #[test]
    fn short_fold_is_named() {
        let cfg = OipeConfig { folds: 10, dim: 4, ..Default::default() };
        match select_h(&[1.0; 30], &cfg) {
            Err(Error::FoldTooShort { fold, .. }) => assert_eq!(fold, 1),
            other => panic!("expected FoldTooShort, got {other:?}"),
        }
    }

    #[test]
    fn levels_follow_left_closed_bins() {
        let t = [0.678, 0.892];
        assert_eq!(complexity_level(0.5, &t).unwrap(), 1);
        assert_eq!(complexity_level(0.7, &t).unwrap(), 2);
        assert_eq!(complexity_level(0.95, &t).unwrap(), 3);
        assert_eq!(complexity_level(0.678, &t).unwrap(), 2);
        assert!(complexity_level(0.5, &[0.9, 0.3]).is_err());
        assert_eq!(level_count(0.6, 5), 3);
    }

    #[test]
    fn thresholds_separate_clean_classes() {
        let en = [0.1, 0.12, 0.3, 0.33, 0.6, 0.61];
        let cls = [1, 1, 2, 2, 3, 3];
        let t = fit_thresholds(&en, &cls, 3).unwrap();
        assert!(t[0] > 0.12 && t[0] < 0.3);
        assert!(t[1] > 0.33 && t[1] < 0.6);
        assert_eq!(label_purity(&en, &cls, &t).unwrap(), 1.0);
    }

    #[test]
    fn reports_round_trip() {
        let reports = vec![
            EntropyReport { en: 0.25, h_star: 9, err_curve: vec![(8, 0.1)], level: Some(2) },
            EntropyReport { en: 0.1 + 0.2, h_star: 12, err_curve: Vec::new(), level: None },
        ];
        let mut buf = Vec::new();
        write_reports_csv(&mut buf, &reports, &[("seed", "3".into())]).unwrap();
        let back = read_reports_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!((back[0].en, back[0].h_star, back[0].level), (0.25, 9, Some(2)));
        assert_eq!((back[1].en, back[1].level), (0.1 + 0.2, None));
    }
}
