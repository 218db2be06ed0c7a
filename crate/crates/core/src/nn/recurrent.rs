//! GRU and LSTM cells and sequence layers over `[N, T, F]` inputs.

use rand_chacha::ChaCha8Rng;

use super::layers::{Layer, Mode};
use super::tensor::{gemm, sigmoid, Param, Tensor};
use crate::error::{Error, Result};

/// `W_y y + W_h h + b` for one gate; `W_y` is `[H, F]`, `W_h` is `[H, H]`.
#[derive(Debug, Clone)]
pub struct Gate {
    pub w_y: Param,
    pub w_h: Param,
    pub b: Param,
}

impl Gate {
    fn new(prefix: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_y: Param::new(format!("{prefix}.w_y"), Tensor::uniform(&[hidden, input], bound, rng)),
            w_h: Param::new(format!("{prefix}.w_h"), Tensor::uniform(&[hidden, hidden], bound, rng)),
            b: Param::new(format!("{prefix}.b"), Tensor::uniform(&[hidden], bound, rng)),
        }
    }

    fn zeroed(prefix: &str, input: usize, hidden: usize) -> Self {
        Self {
            w_y: Param::new(format!("{prefix}.w_y"), Tensor::zeros(&[hidden, input])),
            w_h: Param::new(format!("{prefix}.w_h"), Tensor::zeros(&[hidden, hidden])),
            b: Param::new(format!("{prefix}.b"), Tensor::zeros(&[hidden])),
        }
    }

    fn hidden(&self) -> usize {
        self.b.value.len()
    }

    fn input(&self) -> usize {
        self.w_y.value.shape()[1]
    }

    /// Pre-activation for `n` rows.
    fn pre(&self, n: usize, y: &[f64], h: &[f64]) -> Vec<f64> {
        let (f, hd) = (self.input(), self.hidden());
        let mut out = Vec::with_capacity(n * hd);
        for _ in 0..n {
            out.extend_from_slice(self.b.value.data());
        }
        gemm(n, f, hd, 1.0, y, false, self.w_y.value.data(), true, 1.0, &mut out);
        gemm(n, hd, hd, 1.0, h, false, self.w_h.value.data(), true, 1.0, &mut out);
        out
    }

    /// Accumulate parameter gradients for pre-activation gradient `da` and
    /// add the input gradients into `dy` and `dh`.
    fn back(&mut self, n: usize, da: &[f64], y: &[f64], h: &[f64], dy: &mut [f64], dh: &mut [f64]) {
        let (f, hd) = (self.input(), self.hidden());
        gemm(hd, n, f, 1.0, da, true, y, false, 1.0, self.w_y.grad.data_mut());
        gemm(hd, n, hd, 1.0, da, true, h, false, 1.0, self.w_h.grad.data_mut());
        let gb = self.b.grad.data_mut();
        for r in 0..n {
            for (b, g) in gb.iter_mut().zip(&da[r * hd..(r + 1) * hd]) {
                *b += g;
            }
        }
        gemm(n, hd, f, 1.0, da, false, self.w_y.value.data(), false, 1.0, dy);
        gemm(n, hd, hd, 1.0, da, false, self.w_h.value.data(), false, 1.0, dh);
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w_y);
        f(&mut self.w_h);
        f(&mut self.b);
    }

    fn visit_ref(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.w_y);
        f(&self.w_h);
        f(&self.b);
    }
}

/// Update gate `z`, reset gate `r`, candidate `h~`:
/// `h_t = (1 - z) * h_{t-1} + z * h~`, `h~ = tanh(W_hy y + W_hh (r * h_{t-1}) + b_h)`.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub z: Gate,
    pub r: Gate,
    pub h: Gate,
}

#[derive(Debug, Clone)]
struct GruStep {
    y: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    rh: Vec<f64>,
    cand: Vec<f64>,
}

impl GruCell {
    pub fn new(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self { z: Gate::new("gru.z", input, hidden, rng), r: Gate::new("gru.r", input, hidden, rng), h: Gate::new("gru.h", input, hidden, rng) }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self { z: Gate::zeroed("gru.z", input, hidden), r: Gate::zeroed("gru.r", input, hidden), h: Gate::zeroed("gru.h", input, hidden) }
    }

    pub fn hidden_size(&self) -> usize {
        self.z.hidden()
    }

    pub fn input_size(&self) -> usize {
        self.z.input()
    }

    fn step(&self, n: usize, y: &[f64], h_prev: &[f64]) -> (Vec<f64>, GruStep) {
        let z: Vec<f64> = self.z.pre(n, y, h_prev).into_iter().map(sigmoid).collect();
        let r: Vec<f64> = self.r.pre(n, y, h_prev).into_iter().map(sigmoid).collect();
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let cand: Vec<f64> = self.h.pre(n, y, &rh).into_iter().map(f64::tanh).collect();
        let h = (0..z.len()).map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * cand[i]).collect();
        (h, GruStep { y: y.to_vec(), h_prev: h_prev.to_vec(), z, r, rh, cand })
    }

    /// Returns the gradient w.r.t. `h_prev`, adding the input gradient to `dy`.
    fn step_back(&mut self, n: usize, s: &GruStep, dh: &[f64], dy: &mut [f64]) -> Vec<f64> {
        let len = dh.len();
        let mut dh_prev: Vec<f64> = (0..len).map(|i| dh[i] * (1.0 - s.z[i])).collect();
        let da_h: Vec<f64> = (0..len).map(|i| dh[i] * s.z[i] * (1.0 - s.cand[i] * s.cand[i])).collect();
        let da_z: Vec<f64> = (0..len).map(|i| dh[i] * (s.cand[i] - s.h_prev[i]) * s.z[i] * (1.0 - s.z[i])).collect();
        let mut drh = vec![0.0; len];
        self.h.back(n, &da_h, &s.y, &s.rh, dy, &mut drh);
        let da_r: Vec<f64> = (0..len).map(|i| drh[i] * s.h_prev[i] * s.r[i] * (1.0 - s.r[i])).collect();
        for i in 0..len {
            dh_prev[i] += drh[i] * s.r[i];
        }
        self.z.back(n, &da_z, &s.y, &s.h_prev, dy, &mut dh_prev);
        self.r.back(n, &da_r, &s.y, &s.h_prev, dy, &mut dh_prev);
        dh_prev
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.z.visit(f);
        self.r.visit(f);
        self.h.visit(f);
    }

    fn visit_ref(&self, f: &mut dyn FnMut(&Param)) {
        self.z.visit_ref(f);
        self.r.visit_ref(f);
        self.h.visit_ref(f);
    }
}

fn check_vec(what: &str, v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::shape(format!("{what}: expected length {len}, got {}", v.len())));
    }
    Ok(())
}

/// One GRU step for a single input vector.
pub fn gru_step(cell: &GruCell, y: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    check_vec("gru input", y, cell.input_size())?;
    check_vec("gru hidden", h_prev, cell.hidden_size())?;
    Ok(cell.step(1, y, h_prev).0)
}

/// Input, forget and output gates plus candidate `g`:
/// `c_t = f * c_{t-1} + i * g`, `h_t = o * tanh(c_t)`.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub i: Gate,
    pub f: Gate,
    pub o: Gate,
    pub c: Gate,
}

#[derive(Debug, Clone)]
struct LstmStep {
    y: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmCell {
    pub fn new(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            i: Gate::new("lstm.i", input, hidden, rng),
            f: Gate::new("lstm.f", input, hidden, rng),
            o: Gate::new("lstm.o", input, hidden, rng),
            c: Gate::new("lstm.c", input, hidden, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            i: Gate::zeroed("lstm.i", input, hidden),
            f: Gate::zeroed("lstm.f", input, hidden),
            o: Gate::zeroed("lstm.o", input, hidden),
            c: Gate::zeroed("lstm.c", input, hidden),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.i.hidden()
    }

    pub fn input_size(&self) -> usize {
        self.i.input()
    }

    fn step(&self, n: usize, y: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>, LstmStep) {
        let i: Vec<f64> = self.i.pre(n, y, h_prev).into_iter().map(sigmoid).collect();
        let f: Vec<f64> = self.f.pre(n, y, h_prev).into_iter().map(sigmoid).collect();
        let o: Vec<f64> = self.o.pre(n, y, h_prev).into_iter().map(sigmoid).collect();
        let g: Vec<f64> = self.c.pre(n, y, h_prev).into_iter().map(f64::tanh).collect();
        let c: Vec<f64> = (0..i.len()).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h = (0..i.len()).map(|k| o[k] * tanh_c[k]).collect();
        let cache = LstmStep { y: y.to_vec(), h_prev: h_prev.to_vec(), c_prev: c_prev.to_vec(), i, f, o, g, tanh_c };
        (h, c, cache)
    }

    /// Returns `(dh_prev, dc_prev)`, adding the input gradient to `dy`.
    fn step_back(&mut self, n: usize, s: &LstmStep, dh: &[f64], dc_next: &[f64], dy: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
        let len = dh.len();
        let mut dai = vec![0.0; len];
        let mut daf = vec![0.0; len];
        let mut dao = vec![0.0; len];
        let mut dag = vec![0.0; len];
        let mut dc_prev = vec![0.0; len];
        for k in 0..len {
            let dc = dc_next[k] + dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
            dao[k] = dh[k] * s.tanh_c[k] * s.o[k] * (1.0 - s.o[k]);
            dai[k] = dc * s.g[k] * s.i[k] * (1.0 - s.i[k]);
            daf[k] = dc * s.c_prev[k] * s.f[k] * (1.0 - s.f[k]);
            dag[k] = dc * s.i[k] * (1.0 - s.g[k] * s.g[k]);
            dc_prev[k] = dc * s.f[k];
        }
        let mut dh_prev = vec![0.0; len];
        self.i.back(n, &dai, &s.y, &s.h_prev, dy, &mut dh_prev);
        self.f.back(n, &daf, &s.y, &s.h_prev, dy, &mut dh_prev);
        self.o.back(n, &dao, &s.y, &s.h_prev, dy, &mut dh_prev);
        self.c.back(n, &dag, &s.y, &s.h_prev, dy, &mut dh_prev);
        (dh_prev, dc_prev)
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.i.visit(f);
        self.f.visit(f);
        self.o.visit(f);
        self.c.visit(f);
    }

    fn visit_ref(&self, f: &mut dyn FnMut(&Param)) {
        self.i.visit_ref(f);
        self.f.visit_ref(f);
        self.o.visit_ref(f);
        self.c.visit_ref(f);
    }
}

/// One LSTM step for a single input vector; returns `(h_t, c_t)`.
pub fn lstm_step(cell: &LstmCell, y: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_vec("lstm input", y, cell.input_size())?;
    check_vec("lstm hidden", h_prev, cell.hidden_size())?;
    check_vec("lstm cell", c_prev, cell.hidden_size())?;
    let (h, c, _) = cell.step(1, y, h_prev, c_prev);
    Ok((h, c))
}

fn seq_dims(x: &Tensor, features: usize, what: &str) -> Result<(usize, usize)> {
    x.expect_rank(3, what)?;
    let s = x.shape();
    if s[2] != features {
        return Err(Error::shape(format!("{what} expects {features} features, got shape {s:?}")));
    }
    Ok((s[0], s[1]))
}

fn time_slice(x: &Tensor, t: usize) -> Vec<f64> {
    let s = x.shape();
    let (n, steps, f) = (s[0], s[1], s[2]);
    let mut out = Vec::with_capacity(n * f);
    for b in 0..n {
        out.extend_from_slice(&x.data()[(b * steps + t) * f..][..f]);
    }
    out
}

fn scatter_time(dst: &mut [f64], steps: usize, t: usize, width: usize, src: &[f64]) {
    let n = src.len() / width;
    for b in 0..n {
        let row = &mut dst[(b * steps + t) * width..][..width];
        for (d, s) in row.iter_mut().zip(&src[b * width..(b + 1) * width]) {
            *d += s;
        }
    }
}

/// Shared unroll for both recurrent layers: `[N, T, F]` to `[N, H]` (last
/// state) or `[N, T, H]`.
macro_rules! recurrent_layer_common {
    () => {
        fn output(&self, n: usize, steps: usize, hs: Vec<Vec<f64>>) -> Result<Tensor> {
            let hd = self.cell.hidden_size();
            if self.return_sequences {
                let mut out = vec![0.0; n * steps * hd];
                for (t, h) in hs.iter().enumerate() {
                    scatter_time(&mut out, steps, t, hd, h);
                }
                Tensor::new(vec![n, steps, hd], out)
            } else {
                Tensor::new(vec![n, hd], hs.into_iter().last().unwrap_or_default())
            }
        }

        fn step_grad(&self, grad: &Tensor, t: usize, n: usize, steps: usize) -> Vec<f64> {
            let hd = self.cell.hidden_size();
            if self.return_sequences {
                time_slice(grad, t)
            } else if t + 1 == steps {
                grad.data().to_vec()
            } else {
                vec![0.0; n * hd]
            }
        }
    };
}

#[derive(Debug, Clone)]
pub struct Gru {
    pub cell: GruCell,
    pub return_sequences: bool,
    cache: Vec<GruStep>,
    in_shape: Vec<usize>,
}

impl Gru {
    pub fn new(input: usize, hidden: usize, return_sequences: bool, rng: &mut ChaCha8Rng) -> Self {
        Self { cell: GruCell::new(input, hidden, rng), return_sequences, cache: Vec::new(), in_shape: Vec::new() }
    }

    recurrent_layer_common!();
}

impl Layer for Gru {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (n, steps) = seq_dims(x, self.cell.input_size(), "gru")?;
        let mut h = vec![0.0; n * self.cell.hidden_size()];
        self.cache.clear();
        let mut hs = Vec::with_capacity(steps);
        for t in 0..steps {
            let (next, cache) = self.cell.step(n, &time_slice(x, t), &h);
            self.cache.push(cache);
            h = next;
            hs.push(h.clone());
        }
        self.in_shape = x.shape().to_vec();
        self.output(n, steps, hs)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        if self.in_shape.len() != 3 {
            return Err(Error::shape("gru: backward called before forward"));
        }
        let (n, steps, f) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
        let mut dx = vec![0.0; n * steps * f];
        let mut dh_next = vec![0.0; n * self.cell.hidden_size()];
        let cache = std::mem::take(&mut self.cache);
        for t in (0..steps).rev() {
            let mut dh = self.step_grad(grad, t, n, steps);
            dh.iter_mut().zip(&dh_next).for_each(|(a, b)| *a += b);
            let mut dy = vec![0.0; n * f];
            dh_next = self.cell.step_back(n, &cache[t], &dh, &mut dy);
            scatter_time(&mut dx, steps, t, f, &dy);
        }
        self.cache = cache;
        Tensor::new(self.in_shape.clone(), dx)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.cell.visit(f);
    }

    fn visit_params_ref(&self, f: &mut dyn FnMut(&Param)) {
        self.cell.visit_ref(f);
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }

    fn name(&self) -> &'static str {
        "gru"
    }
}

#[derive(Debug, Clone)]
pub struct Lstm {
    pub cell: LstmCell,
    pub return_sequences: bool,
    cache: Vec<LstmStep>,
    in_shape: Vec<usize>,
}

impl Lstm {
    pub fn new(input: usize, hidden: usize, return_sequences: bool, rng: &mut ChaCha8Rng) -> Self {
        Self { cell: LstmCell::new(input, hidden, rng), return_sequences, cache: Vec::new(), in_shape: Vec::new() }
    }

    recurrent_layer_common!();
}

impl Layer for Lstm {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (n, steps) = seq_dims(x, self.cell.input_size(), "lstm")?;
        let hd = self.cell.hidden_size();
        let (mut h, mut c) = (vec![0.0; n * hd], vec![0.0; n * hd]);
        self.cache.clear();
        let mut hs = Vec::with_capacity(steps);
        for t in 0..steps {
            let (nh, nc, cache) = self.cell.step(n, &time_slice(x, t), &h, &c);
            self.cache.push(cache);
            h = nh;
            c = nc;
            hs.push(h.clone());
        }
        self.in_shape = x.shape().to_vec();
        self.output(n, steps, hs)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        if self.in_shape.len() != 3 {
            return Err(Error::shape("lstm: backward called before forward"));
        }
        let (n, steps, f) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
        let hd = self.cell.hidden_size();
        let mut dx = vec![0.0; n * steps * f];
        let mut dh_next = vec![0.0; n * hd];
        let mut dc_next = vec![0.0; n * hd];
        let cache = std::mem::take(&mut self.cache);
        for t in (0..steps).rev() {
            let mut dh = self.step_grad(grad, t, n, steps);
            dh.iter_mut().zip(&dh_next).for_each(|(a, b)| *a += b);
            let mut dy = vec![0.0; n * f];
            let (a, b) = self.cell.step_back(n, &cache[t], &dh, &dc_next, &mut dy);
            dh_next = a;
            dc_next = b;
            scatter_time(&mut dx, steps, t, f, &dy);
        }
        self.cache = cache;
        Tensor::new(self.in_shape.clone(), dx)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.cell.visit(f);
    }

    fn visit_params_ref(&self, f: &mut dyn FnMut(&Param)) {
        self.cell.visit_ref(f);
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }

    fn name(&self) -> &'static str {
        "lstm"
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::nn::gradcheck::check_layer;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    fn rand_vec(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
    }

    fn dot(w: &Param, row: usize, v: &[f64]) -> f64 {
        let cols = w.value.shape()[1];
        (0..cols).map(|j| w.value.data()[row * cols + j] * v[j]).sum()
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn zero_gru_halves_state() {
        let cell = GruCell::zeros(3, 2);
        let h = gru_step(&cell, &[1.0, 2.0, 3.0], &[0.4, -0.8]).unwrap();
        assert_eq!(h, vec![0.2, -0.4]);
    }

    #[test]
    fn closed_update_gate_holds_state() {
        let mut cell = GruCell::new(2, 3, &mut rng());
        cell.z.b.value.fill(-50.0);
        let h_prev = [0.3, -0.2, 0.9];
        let h = gru_step(&cell, &[0.5, 0.5], &h_prev).unwrap();
        for (a, b) in h.iter().zip(&h_prev) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(gru_step(&cell, &[0.5], &h_prev).is_err());
    }

    #[test]
    fn gru_matches_scalar_oracle() {
        let mut r = rng();
        let cell = GruCell::new(4, 3, &mut r);
        let y = rand_vec(4, &mut r);
        let hp = rand_vec(3, &mut r);
        let got = gru_step(&cell, &y, &hp).unwrap();
        for k in 0..3 {
            let z = sig(dot(&cell.z.w_y, k, &y) + dot(&cell.z.w_h, k, &hp) + cell.z.b.value.data()[k]);
            let rh: Vec<f64> = (0..3)
                .map(|j| sig(dot(&cell.r.w_y, j, &y) + dot(&cell.r.w_h, j, &hp) + cell.r.b.value.data()[j]) * hp[j])
                .collect();
            let cand = (dot(&cell.h.w_y, k, &y) + dot(&cell.h.w_h, k, &rh) + cell.h.b.value.data()[k]).tanh();
            let want = (1.0 - z) * hp[k] + z * cand;
            assert!((got[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn lstm_rules() {
        let cell = LstmCell::zeros(2, 2);
        let (h, c) = lstm_step(&cell, &[1.0, 1.0], &[0.3, 0.3], &[0.8, -0.4]).unwrap();
        assert_eq!(c, vec![0.4, -0.2]);
        assert!((h[0] - 0.5 * 0.4f64.tanh()).abs() < 1e-15);

        let mut hold = LstmCell::new(2, 2, &mut rng());
        hold.f.b.value.fill(60.0);
        hold.i.b.value.fill(-60.0);
        let (_, c) = lstm_step(&hold, &[0.2, -0.7], &[0.1, 0.1], &[0.8, -0.4]).unwrap();
        assert!((c[0] - 0.8).abs() < 1e-12 && (c[1] + 0.4).abs() < 1e-12);
    }

    #[test]
    fn lstm_matches_scalar_oracle() {
        let mut r = rng();
        let cell = LstmCell::new(3, 4, &mut r);
        let (y, hp, cp) = (rand_vec(3, &mut r), rand_vec(4, &mut r), rand_vec(4, &mut r));
        let (h, c) = lstm_step(&cell, &y, &hp, &cp).unwrap();
        for k in 0..4 {
            let g = |gate: &Gate| dot(&gate.w_y, k, &y) + dot(&gate.w_h, k, &hp) + gate.b.value.data()[k];
            let ck = sig(g(&cell.f)) * cp[k] + sig(g(&cell.i)) * g(&cell.c).tanh();
            assert!((c[k] - ck).abs() < 1e-12);
            assert!((h[k] - sig(g(&cell.o)) * ck.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn bptt_gradients() {
        let mut r = rng();
        let x = Tensor::uniform(&[2, 10, 3], 1.0, &mut r);
        check_layer(&mut Gru::new(3, 4, false, &mut r), &x, Mode::Train, 20, 7).unwrap();
        check_layer(&mut Gru::new(3, 4, true, &mut r), &x, Mode::Train, 20, 8).unwrap();
        check_layer(&mut Lstm::new(3, 4, false, &mut r), &x, Mode::Train, 20, 9).unwrap();
        check_layer(&mut Lstm::new(3, 4, true, &mut r), &x, Mode::Train, 20, 10).unwrap();
    }
}
