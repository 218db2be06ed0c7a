//! Feed-forward layers. Image tensors are `[N, C, H, W]`; dense layers act on
//! the last axis of any tensor.

use rand_chacha::ChaCha8Rng;

use super::tensor::{gemm, sigmoid, Param, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A differentiable layer. `forward` caches what `backward` needs;
/// `backward` accumulates parameter gradients and returns the input gradient.
pub trait Layer: Send {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor>;
    fn backward(&mut self, grad: &Tensor) -> Result<Tensor>;
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param));
    fn visit_params_ref(&self, f: &mut dyn FnMut(&Param));
    fn clone_box(&self) -> Box<dyn Layer>;
    fn name(&self) -> &'static str;
}

impl Clone for Box<dyn Layer> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

pub fn zero_grads(layer: &mut dyn Layer) {
    layer.visit_params(&mut |p| p.zero_grad());
}

pub fn param_count(layer: &dyn Layer) -> usize {
    let mut n = 0;
    layer.visit_params_ref(&mut |p| {
        if p.trainable {
            n += p.value.len()
        }
    });
    n
}

fn no_cache(what: &str) -> Error {
    Error::shape(format!("{what}: backward called before forward"))
}

/// `y = x W^T + b` over the last axis; `W` is `[out, in]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            weight: Param::new("dense.weight", Tensor::uniform(&[outputs, inputs], bound, rng)),
            bias: Param::new("dense.bias", Tensor::uniform(&[outputs], bound, rng)),
            input: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.shape()[0]
    }
}

impl Layer for Dense {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (i, o) = (self.inputs(), self.outputs());
        let last = *x.shape().last().unwrap_or(&0);
        if last != i {
            return Err(Error::shape(format!("dense expects last axis {i}, got shape {:?}", x.shape())));
        }
        let rows = x.len() / i;
        let mut out = Vec::with_capacity(rows * o);
        for _ in 0..rows {
            out.extend_from_slice(self.bias.value.data());
        }
        gemm(rows, i, o, 1.0, x.data(), false, self.weight.value.data(), true, 1.0, &mut out);
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = o;
        self.input = Some(x.clone());
        Tensor::new(shape, out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or_else(|| no_cache("dense"))?;
        let (i, o) = (self.inputs(), self.outputs());
        let rows = x.len() / i;
        if grad.len() != rows * o {
            return Err(Error::shape("dense: gradient shape mismatch"));
        }
        gemm(o, rows, i, 1.0, grad.data(), true, x.data(), false, 1.0, self.weight.grad.data_mut());
        let gb = self.bias.grad.data_mut();
        for r in 0..rows {
            for (b, g) in gb.iter_mut().zip(&grad.data()[r * o..(r + 1) * o]) {
                *b += g;
            }
        }
        let mut dx = vec![0.0; rows * i];
        gemm(rows, o, i, 1.0, grad.data(), false, self.weight.value.data(), false, 0.0, &mut dx);
        Tensor::new(x.shape().to_vec(), dx)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }

    fn visit_params_ref(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }

    fn name(&self) -> &'static str {
        "dense"
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Vec<bool>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Relu {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        self.mask = x.data().iter().map(|&v| v > 0.0).collect();
        let data = x.data().iter().map(|&v| v.max(0.0)).collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        if grad.len() != self.mask.len() {
            return Err(no_cache("relu"));
        }
        let data = grad.data().iter().zip(&self.mask).map(|(&g, &m)| if m { g } else { 0.0 }).collect();
        Tensor::new(grad.shape().to_vec(), data)
    }

    fn visit_params(&mut self, _f: &mut dyn FnMut(&mut Param)) {}
    fn visit_params_ref(&self, _f: &mut dyn FnMut(&Param)) {}

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }

    fn name(&self) -> &'static str {
        "relu"
    }
}

/// Collapse everything after the batch axis.
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    shape: Vec<usize>,
}

impl Flatten {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Flatten {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        self.shape = x.shape().to_vec();
        let n = x.batch();
        x.clone().reshape(&[n, x.len() / n.max(1)])
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        grad.clone().reshape(&self.shape)
    }

    fn visit_params(&mut self, _f: &mut dyn FnMut(&mut Param)) {}
    fn visit_params_ref(&self, _f: &mut dyn FnMut(&Param)) {}

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }

    fn name(&self) -> &'static str {
        "flatten"
    }
}

/// Layers applied in order.
#[derive(Clone, Default)]
pub struct Sequential {
    pub layers: Vec<Box<dyn Layer>>,
}

impl std::fmt::Debug for Sequential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.layers.iter().map(|l| l.name())).finish()
    }
}

impl Sequential {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, layer: impl Layer + 'static) -> &mut Self {
        self.layers.push(Box::new(layer));
        self
    }

    pub fn with(mut self, layer: impl Layer + 'static) -> Self {
        self.layers.push(Box::new(layer));
        self
    }
}

impl Layer for Sequential {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut cur = x.clone();
        for l in &mut self.layers {
            cur = l.forward(&cur, mode)?;
        }
        Ok(cur)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = grad.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for l in &mut self.layers {
            l.visit_params(f);
        }
    }

    fn visit_params_ref(&self, f: &mut dyn FnMut(&Param)) {
        for l in &self.layers {
            l.visit_params_ref(f);
        }
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }

    fn name(&self) -> &'static str {
        "sequential"
    }
}

fn dims4(x: &Tensor, what: &str) -> Result<(usize, usize, usize, usize)> {
    x.expect_rank(4, what)?;
    let s = x.shape();
    Ok((s[0], s[1], s[2], s[3]))
}

/// Stride-1 2-D convolution with zero "same" padding (odd kernels).
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    kernel: usize,
    cols: Vec<f64>,
    in_shape: Vec<usize>,
}

impl Conv2d {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd");
        let fan_in = in_ch * kernel * kernel;
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            weight: Param::new("conv2d.weight", Tensor::uniform(&[out_ch, in_ch, kernel, kernel], bound, rng)),
            bias: Param::new("conv2d.bias", Tensor::uniform(&[out_ch], bound, rng)),
            kernel,
            cols: Vec::new(),
            in_shape: Vec::new(),
        }
    }

    fn channels(&self) -> (usize, usize) {
        (self.weight.value.shape()[1], self.weight.value.shape()[0])
    }

    fn im2col(&self, x: &[f64], c: usize, h: usize, w: usize, cols: &mut [f64]) {
        let k = self.kernel;
        let p = k / 2;
        let hw = h * w;
        for ci in 0..c {
            let plane = &x[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - p as isize;
                        let dst = &mut row[y * w..(y + 1) * w];
                        if sy < 0 || sy >= h as isize {
                            dst.fill(0.0);
                            continue;
                        }
                        let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                        for (xo, d) in dst.iter_mut().enumerate() {
                            let sx = xo as isize + kx as isize - p as isize;
                            *d = if sx < 0 || sx >= w as isize { 0.0 } else { src[sx as usize] };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], c: usize, h: usize, w: usize, dx: &mut [f64]) {
        let k = self.kernel;
        let p = k / 2;
        let hw = h * w;
        for ci in 0..c {
            let plane = &mut dx[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((ci * k + ky) * k + kx) * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - p as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for xo in 0..w {
                            let sx = xo as isize + kx as isize - p as isize;
                            if sx >= 0 && sx < w as isize {
                                plane[sy as usize * w + sx as usize] += row[y * w + xo];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (n, c, h, w) = dims4(x, "conv2d")?;
        let (cin, cout) = self.channels();
        if c != cin {
            return Err(Error::shape(format!("conv2d expects {cin} channels, got {c}")));
        }
        let kk = cin * self.kernel * self.kernel;
        let hw = h * w;
        self.cols.resize(n * kk * hw, 0.0);
        let mut out = vec![0.0; n * cout * hw];
        let mut cols = std::mem::take(&mut self.cols);
        for s in 0..n {
            let col = &mut cols[s * kk * hw..(s + 1) * kk * hw];
            self.im2col(&x.data()[s * c * hw..(s + 1) * c * hw], c, h, w, col);
            let o = &mut out[s * cout * hw..(s + 1) * cout * hw];
            for (co, b) in self.bias.value.data().iter().enumerate() {
                o[co * hw..(co + 1) * hw].fill(*b);
            }
            gemm(cout, kk, hw, 1.0, self.weight.value.data(), false, col, false, 1.0, o);
        }
        self.cols = cols;
        self.in_shape = x.shape().to_vec();
        Tensor::new(vec![n, cout, h, w], out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        if self.in_shape.len() != 4 {
            return Err(no_cache("conv2d"));
        }
        let (n, c, h, w) = (self.in_shape[0], self.in_shape[1], self.in_shape[2], self.in_shape[3]);
        let (_, cout) = self.channels();
        let kk = c * self.kernel * self.kernel;
        let hw = h * w;
        if grad.len() != n * cout * hw {
            return Err(Error::shape("conv2d: gradient shape mismatch"));
        }
        let mut dx = vec![0.0; n * c * hw];
        let mut dcol = vec![0.0; kk * hw];
        for s in 0..n {
            let g = &grad.data()[s * cout * hw..(s + 1) * cout * hw];
            let col = &self.cols[s * kk * hw..(s + 1) * kk * hw];
            gemm(cout, hw, kk, 1.0, g, false, col, true, 1.0, self.weight.grad.data_mut());
            for (co, b) in self.bias.grad.data_mut().iter_mut().enumerate() {
                *b += g[co * hw..(co + 1) * hw].iter().sum::<f64>();
            }
            gemm(kk, cout, hw, 1.0, self.weight.value.data(), true, g, false, 0.0, &mut dcol);
            self.col2im(&dcol, c, h, w, &mut dx[s * c * hw..(s + 1) * c * hw]);
        }
        Tensor::new(self.in_shape.clone(), dx)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }

    fn visit_params_ref(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }

    fn name(&self) -> &'static str {
        "conv2d"
    }
}

/// Non-overlapping 2x2 max pooling (odd trailing rows/columns dropped).
#[derive(Debug, Clone, Default)]
pub struct MaxPool2d {
    argmax: Vec<usize>,
    in_shape: Vec<usize>,
}

impl MaxPool2d {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for MaxPool2d {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (n, c, h, w) = dims4(x, "maxpool")?;
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Vec::with_capacity(n * c * oh * ow);
        self.argmax.clear();
        let d = x.data();
        for plane in 0..n * c {
            let base = plane * h * w;
            for y in 0..oh {
                for xo in 0..ow {
                    let mut best = base + 2 * y * w + 2 * xo;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = base + (2 * y + dy) * w + 2 * xo + dx;
                        if d[i] > d[best] {
                            best = i;
                        }
                    }
                    out.push(d[best]);
                    self.argmax.push(best);
                }
            }
        }
        self.in_shape = x.shape().to_vec();
        Tensor::new(vec![n, c, oh, ow], out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        if grad.len() != self.argmax.len() {
            return Err(no_cache("maxpool"));
        }
        let mut dx = Tensor::zeros(&self.in_shape);
        let d = dx.data_mut();
        for (&i, &g) in self.argmax.iter().zip(grad.data()) {
            d[i] += g;
        }
        Ok(dx)
    }

    fn visit_params(&mut self, _f: &mut dyn FnMut(&mut Param)) {}
    fn visit_params_ref(&self, _f: &mut dyn FnMut(&Param)) {}

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }

    fn name(&self) -> &'static str {
        "maxpool2d"
    }
}

/// Per-channel batch normalization over `N, H, W`.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub momentum: f64,
    pub eps: f64,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    in_shape: Vec<usize>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new("bn.gamma", Tensor::full(&[channels], 1.0)),
            beta: Param::new("bn.beta", Tensor::zeros(&[channels])),
            running_mean: Param::buffer("bn.running_mean", Tensor::zeros(&[channels])),
            running_var: Param::buffer("bn.running_var", Tensor::full(&[channels], 1.0)),
            momentum: 0.1,
            eps: 1e-5,
            xhat: Vec::new(),
            inv_std: Vec::new(),
            in_shape: Vec::new(),
        }
    }
}

impl Layer for BatchNorm2d {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (n, c, h, w) = dims4(x, "batchnorm")?;
        if c != self.gamma.value.len() {
            return Err(Error::shape(format!("batchnorm expects {} channels, got {c}", self.gamma.value.len())));
        }
        let hw = h * w;
        let count = (n * hw) as f64;
        let d = x.data();
        let mut out = vec![0.0; d.len()];
        self.xhat.resize(d.len(), 0.0);
        self.inv_std.resize(c, 0.0);
        for ch in 0..c {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut s = 0.0;
                    for smp in 0..n {
                        s += d[(smp * c + ch) * hw..][..hw].iter().sum::<f64>();
                    }
                    let mean = s / count;
                    let mut v = 0.0;
                    for smp in 0..n {
                        v += d[(smp * c + ch) * hw..][..hw].iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
                    }
                    let var = v / count;
                    let m = self.momentum;
                    let rm = &mut self.running_mean.value.data_mut()[ch];
                    *rm = (1.0 - m) * *rm + m * mean;
                    let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
                    let rv = &mut self.running_var.value.data_mut()[ch];
                    *rv = (1.0 - m) * *rv + m * unbiased;
                    (mean, var)
                }
                Mode::Eval => (self.running_mean.value.data()[ch], self.running_var.value.data()[ch]),
            };
            let inv = 1.0 / (var + self.eps).sqrt();
            self.inv_std[ch] = inv;
            let (g, b) = (self.gamma.value.data()[ch], self.beta.value.data()[ch]);
            for smp in 0..n {
                let off = (smp * c + ch) * hw;
                for i in off..off + hw {
                    let xh = (d[i] - mean) * inv;
                    self.xhat[i] = xh;
                    out[i] = g * xh + b;
                }
            }
        }
        self.in_shape = x.shape().to_vec();
        Tensor::new(x.shape().to_vec(), out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        if grad.len() != self.xhat.len() || self.in_shape.len() != 4 {
            return Err(no_cache("batchnorm"));
        }
        let (n, c, h, w) = (self.in_shape[0], self.in_shape[1], self.in_shape[2], self.in_shape[3]);
        let hw = h * w;
        let count = (n * hw) as f64;
        let g = grad.data();
        let mut dx = vec![0.0; g.len()];
        for ch in 0..c {
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for smp in 0..n {
                let off = (smp * c + ch) * hw;
                for i in off..off + hw {
                    sum_g += g[i];
                    sum_gx += g[i] * self.xhat[i];
                }
            }
            self.gamma.grad.data_mut()[ch] += sum_gx;
            self.beta.grad.data_mut()[ch] += sum_g;
            let k = self.gamma.value.data()[ch] * self.inv_std[ch] / count;
            for smp in 0..n {
                let off = (smp * c + ch) * hw;
                for i in off..off + hw {
                    dx[i] = k * (count * g[i] - sum_g - self.xhat[i] * sum_gx);
                }
            }
        }
        Tensor::new(self.in_shape.clone(), dx)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }

    fn visit_params_ref(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.gamma);
        f(&self.beta);
        f(&self.running_mean);
        f(&self.running_var);
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }

    fn name(&self) -> &'static str {
        "batchnorm2d"
    }
}

/// Channel mean and max maps, a `k x k` convolution and a sigmoid give a
/// single-channel weight map that multiplies every input channel.
#[derive(Debug, Clone)]
pub struct SpatialAttention {
    pub conv: Conv2d,
    input: Option<Tensor>,
    argmax: Vec<usize>,
    map: Vec<f64>,
}

impl SpatialAttention {
    pub fn new(kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut conv = Conv2d::new(2, 1, kernel, rng);
        conv.weight.name = "attention.weight".into();
        conv.bias.name = "attention.bias".into();
        Self { conv, input: None, argmax: Vec::new(), map: Vec::new() }
    }

    /// Attention weights of the last forward pass, `[N, H, W]` flattened.
    pub fn last_map(&self) -> &[f64] {
        &self.map
    }
}

impl Layer for SpatialAttention {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (n, c, h, w) = dims4(x, "attention")?;
        let hw = h * w;
        let d = x.data();
        let mut pooled = vec![0.0; n * 2 * hw];
        self.argmax.resize(n * hw, 0);
        for s in 0..n {
            for p in 0..hw {
                let mut sum = 0.0;
                let mut best = 0;
                for ch in 0..c {
                    let v = d[(s * c + ch) * hw + p];
                    sum += v;
                    if v > d[(s * c + best) * hw + p] {
                        best = ch;
                    }
                }
                pooled[s * 2 * hw + p] = sum / c as f64;
                pooled[s * 2 * hw + hw + p] = d[(s * c + best) * hw + p];
                self.argmax[s * hw + p] = best;
            }
        }
        let logits = self.conv.forward(&Tensor::new(vec![n, 2, h, w], pooled)?, mode)?;
        self.map = logits.data().iter().map(|&v| sigmoid(v)).collect();
        let mut out = vec![0.0; d.len()];
        for s in 0..n {
            for ch in 0..c {
                let off = (s * c + ch) * hw;
                for p in 0..hw {
                    out[off + p] = d[off + p] * self.map[s * hw + p];
                }
            }
        }
        self.input = Some(x.clone());
        Tensor::new(x.shape().to_vec(), out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or_else(|| no_cache("attention"))?;
        let (n, c, h, w) = dims4(x, "attention")?;
        let hw = h * w;
        let (d, g) = (x.data(), grad.data());
        let mut dx = vec![0.0; d.len()];
        let mut dlogit = vec![0.0; n * hw];
        for s in 0..n {
            for p in 0..hw {
                let a = self.map[s * hw + p];
                let mut da = 0.0;
                for ch in 0..c {
                    let i = (s * c + ch) * hw + p;
                    da += g[i] * d[i];
                    dx[i] = g[i] * a;
                }
                dlogit[s * hw + p] = da * a * (1.0 - a);
            }
        }
        let dpool = self.conv.backward(&Tensor::new(vec![n, 1, h, w], dlogit)?)?;
        let dp = dpool.data();
        for s in 0..n {
            for p in 0..hw {
                let dmean = dp[s * 2 * hw + p] / c as f64;
                for ch in 0..c {
                    dx[(s * c + ch) * hw + p] += dmean;
                }
                let best = self.argmax[s * hw + p];
                dx[(s * c + best) * hw + p] += dp[s * 2 * hw + hw + p];
            }
        }
        Tensor::new(x.shape().to_vec(), dx)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv.visit_params(f);
    }

    fn visit_params_ref(&self, f: &mut dyn FnMut(&Param)) {
        self.conv.visit_params_ref(f);
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }

    fn name(&self) -> &'static str {
        "spatial_attention"
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::nn::gradcheck::check_layer;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn dense_closed_form_gradient() {
        // single output, squared loss: dL/dW = 2 (y_hat - y) x
        let mut d = Dense::new(3, 1, &mut rng());
        let x = Tensor::new(vec![1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        let y_hat = d.forward(&x, Mode::Train).unwrap().data()[0];
        let y = 0.3;
        d.backward(&Tensor::new(vec![1, 1], vec![2.0 * (y_hat - y)]).unwrap()).unwrap();
        for (g, xi) in d.weight.grad.data().iter().zip(x.data()) {
            assert!((g - 2.0 * (y_hat - y) * xi).abs() < 1e-14);
        }
        zero_grads(&mut d);
        d.backward(&Tensor::new(vec![1, 1], vec![0.0]).unwrap()).unwrap();
        assert!(d.weight.grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn identity_conv() {
        let mut c = Conv2d::new(1, 1, 1, &mut rng());
        c.weight.value.data_mut()[0] = 1.0;
        c.bias.value.data_mut()[0] = 0.0;
        let x = Tensor::uniform(&[2, 1, 5, 4], 1.0, &mut rng());
        assert_eq!(c.forward(&x, Mode::Eval).unwrap(), x);
    }

    #[test]
    fn conv_matches_sliding_window_oracle() {
        let mut r = rng();
        let mut c = Conv2d::new(1, 1, 3, &mut r);
        let mut img = vec![0.0; 25];
        img[12] = 1.0;
        let x = Tensor::new(vec![1, 1, 5, 5], img.clone()).unwrap();
        let out = c.forward(&x, Mode::Eval).unwrap();
        let wt = c.weight.value.data();
        let b = c.bias.value.data()[0];
        for y in 0..5i32 {
            for xo in 0..5i32 {
                let mut s = b;
                for ky in 0..3i32 {
                    for kx in 0..3i32 {
                        let (sy, sx) = (y + ky - 1, xo + kx - 1);
                        if (0..5).contains(&sy) && (0..5).contains(&sx) {
                            s += wt[(ky * 3 + kx) as usize] * img[(sy * 5 + sx) as usize];
                        }
                    }
                }
                assert!((out.data()[(y * 5 + xo) as usize] - s).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn saturated_attention_is_identity() {
        let mut a = SpatialAttention::new(7, &mut rng());
        a.conv.weight.value.fill(0.0);
        a.conv.bias.value.fill(60.0);
        let x = Tensor::uniform(&[2, 3, 6, 6], 1.0, &mut rng());
        let y = a.forward(&x, Mode::Eval).unwrap();
        for (u, v) in x.data().iter().zip(y.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn pool_picks_maxima() {
        let x = Tensor::new(vec![1, 1, 2, 4], vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 7.0, 1.0]).unwrap();
        let y = MaxPool2d::new().forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.data(), &[5.0, 7.0]);
    }

    #[test]
    fn batchnorm_eval_uses_running_stats() {
        let mut bn = BatchNorm2d::new(2);
        let x = Tensor::uniform(&[4, 2, 3, 3], 2.0, &mut rng());
        let y = bn.forward(&x, Mode::Eval).unwrap();
        for (u, v) in x.data().iter().zip(y.data()) {
            assert!((u / (1.0f64 + 1e-5).sqrt() - v).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng();
        let x = Tensor::uniform(&[3, 4], 1.0, &mut r);
        check_layer(&mut Dense::new(4, 3, &mut r), &x, Mode::Train, 20, 1).unwrap();
        let img = Tensor::uniform(&[2, 3, 6, 6], 1.0, &mut r);
        check_layer(&mut Conv2d::new(3, 4, 3, &mut r), &img, Mode::Train, 20, 2).unwrap();
        check_layer(&mut MaxPool2d::new(), &img, Mode::Train, 20, 3).unwrap();
        check_layer(&mut BatchNorm2d::new(3), &img, Mode::Train, 20, 4).unwrap();
        check_layer(&mut SpatialAttention::new(7, &mut r), &img, Mode::Train, 20, 5).unwrap();
        check_layer(&mut Relu::new(), &img, Mode::Train, 20, 6).unwrap();
    }
}
