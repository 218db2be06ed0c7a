#![allow(dead_code)]

use std::collections::HashMap;

/// Entropy by explicit pattern dictionary, written from the definition.
pub fn entropy_oracle(y: &[f64], dim: usize, delay: usize, levels: usize) -> f64 {
    let rows = y.len() - (dim - 1) * delay;
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / levels as f64;
    let mut dict: HashMap<Vec<i64>, u64> = HashMap::new();
    for j in 0..rows {
        let pattern: Vec<i64> = if width > 0.0 {
            let anchor = y[j];
            let base = (((anchor - lo) / width).floor() as i64).min(levels as i64 - 1);
            (0..dim).map(|k| base + ((y[j + k * delay] - anchor) / width).floor() as i64).collect()
        } else {
            vec![0; dim]
        };
        *dict.entry(pattern).or_default() += 1;
    }
    let mut counts: Vec<u64> = dict.into_values().collect();
    counts.sort_unstable();
    let n = rows as f64;
    let h: f64 = counts.iter().map(|&c| c as f64 / n).map(|p| -p * p.ln()).sum();
    (h / (dim as f64 * (levels as f64).ln())).clamp(0.0, 1.0)
}

/// Two-pass RMSE: squared errors first, then their mean.
pub fn rmse_two_pass(a: &[f64], b: &[f64]) -> f64 {
    let sq: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).collect();
    (sq.iter().sum::<f64>() / sq.len() as f64).sqrt()
}

/// Count of starts `0, hop, 2 hop, ...` with `start + m <= n`.
pub fn frames_by_enumeration(n: usize, m: usize, l: usize) -> usize {
    let mut count = 0;
    let mut start = 0;
    while start + m <= n {
        count += 1;
        start += m - l;
    }
    count
}
