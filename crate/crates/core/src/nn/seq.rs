//! Layers over sequences `[N, T, C]`: 1-D convolutions and skip wrappers.

use rand_chacha::ChaCha8Rng;

use super::layers::{Layer, Mode, Sequential};
use super::tensor::{gemm, Param, Tensor};
use crate::error::{Error, Result};

fn dims3(x: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    x.expect_rank(3, what)?;
    let s = x.shape();
    Ok((s[0], s[1], s[2]))
}

/// Stride-1 convolution along time with "same" zero padding (odd kernels).
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: Param,
    pub bias: Param,
    kernel: usize,
    cols: Vec<f64>,
    in_shape: Vec<usize>,
}

impl Conv1d {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd");
        let bound = 1.0 / ((in_ch * kernel) as f64).sqrt();
        Self {
            weight: Param::new("conv1d.weight", Tensor::uniform(&[out_ch, in_ch, kernel], bound, rng)),
            bias: Param::new("conv1d.bias", Tensor::uniform(&[out_ch], bound, rng)),
            kernel,
            cols: Vec::new(),
            in_shape: Vec::new(),
        }
    }

    fn channels(&self) -> (usize, usize) {
        (self.weight.value.shape()[1], self.weight.value.shape()[0])
    }
}

impl Layer for Conv1d {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (n, t, c) = dims3(x, "conv1d")?;
        let (cin, cout) = self.channels();
        if c != cin {
            return Err(Error::shape(format!("conv1d expects {cin} channels, got {c}")));
        }
        let k = self.kernel;
        let p = k / 2;
        let kk = cin * k;
        self.cols.clear();
        self.cols.resize(n * t * kk, 0.0);
        let d = x.data();
        for s in 0..n {
            for ti in 0..t {
                let row = &mut self.cols[(s * t + ti) * kk..][..kk];
                for ci in 0..cin {
                    for j in 0..k {
                        let src = ti as isize + j as isize - p as isize;
                        if src >= 0 && (src as usize) < t {
                            row[ci * k + j] = d[(s * t + src as usize) * c + ci];
                        }
                    }
                }
            }
        }
        let mut out = Vec::with_capacity(n * t * cout);
        for _ in 0..n * t {
            out.extend_from_slice(self.bias.value.data());
        }
        gemm(n * t, kk, cout, 1.0, &self.cols, false, self.weight.value.data(), true, 1.0, &mut out);
        self.in_shape = x.shape().to_vec();
        Tensor::new(vec![n, t, cout], out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        if self.in_shape.len() != 3 {
            return Err(Error::shape("conv1d: backward called before forward"));
        }
        let (n, t, c) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
        let (cin, cout) = self.channels();
        let k = self.kernel;
        let p = k / 2;
        let kk = cin * k;
        let rows = n * t;
        if grad.len() != rows * cout {
            return Err(Error::shape("conv1d: gradient shape mismatch"));
        }
        gemm(cout, rows, kk, 1.0, grad.data(), true, &self.cols, false, 1.0, self.weight.grad.data_mut());
        let gb = self.bias.grad.data_mut();
        for r in 0..rows {
            for (b, g) in gb.iter_mut().zip(&grad.data()[r * cout..(r + 1) * cout]) {
                *b += g;
            }
        }
        let mut dcols = vec![0.0; rows * kk];
        gemm(rows, cout, kk, 1.0, grad.data(), false, self.weight.value.data(), false, 0.0, &mut dcols);
        let mut dx = vec![0.0; n * t * c];
        for s in 0..n {
            for ti in 0..t {
                let row = &dcols[(s * t + ti) * kk..][..kk];
                for ci in 0..cin {
                    for j in 0..k {
                        let src = ti as isize + j as isize - p as isize;
                        if src >= 0 && (src as usize) < t {
                            dx[(s * t + src as usize) * c + ci] += row[ci * k + j];
                        }
                    }
                }
            }
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
        "conv1d"
    }
}

/// Per-channel convolution along time ("same" padding).
#[derive(Debug, Clone)]
pub struct DepthwiseConv1d {
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl DepthwiseConv1d {
    pub fn new(channels: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd");
        let bound = 1.0 / (kernel as f64).sqrt();
        Self {
            weight: Param::new("depthwise.weight", Tensor::uniform(&[channels, kernel], bound, rng)),
            bias: Param::new("depthwise.bias", Tensor::uniform(&[channels], bound, rng)),
            input: None,
        }
    }
}

impl Layer for DepthwiseConv1d {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (n, t, c) = dims3(x, "depthwise conv1d")?;
        let (ch, k) = (self.weight.value.shape()[0], self.weight.value.shape()[1]);
        if c != ch {
            return Err(Error::shape(format!("depthwise conv1d expects {ch} channels, got {c}")));
        }
        let p = k / 2;
        let (d, w, b) = (x.data(), self.weight.value.data(), self.bias.value.data());
        let mut out = vec![0.0; d.len()];
        for s in 0..n {
            for ti in 0..t {
                for ci in 0..c {
                    let mut acc = b[ci];
                    for j in 0..k {
                        let src = ti as isize + j as isize - p as isize;
                        if src >= 0 && (src as usize) < t {
                            acc += w[ci * k + j] * d[(s * t + src as usize) * c + ci];
                        }
                    }
                    out[(s * t + ti) * c + ci] = acc;
                }
            }
        }
        self.input = Some(x.clone());
        Tensor::new(x.shape().to_vec(), out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or_else(|| Error::shape("depthwise conv1d: backward called before forward"))?;
        let (n, t, c) = dims3(x, "depthwise conv1d")?;
        let k = self.weight.value.shape()[1];
        let p = k / 2;
        let (d, g) = (x.data(), grad.data());
        let mut dx = vec![0.0; d.len()];
        let w = self.weight.value.data().to_vec();
        let gw = self.weight.grad.data_mut();
        let gb = self.bias.grad.data_mut();
        for s in 0..n {
            for ti in 0..t {
                for ci in 0..c {
                    let go = g[(s * t + ti) * c + ci];
                    gb[ci] += go;
                    for j in 0..k {
                        let src = ti as isize + j as isize - p as isize;
                        if src >= 0 && (src as usize) < t {
                            let i = (s * t + src as usize) * c + ci;
                            gw[ci * k + j] += go * d[i];
                            dx[i] += go * w[ci * k + j];
                        }
                    }
                }
            }
        }
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
        "depthwise_conv1d"
    }
}

/// `y = x + inner(x)`.
#[derive(Debug, Clone)]
pub struct Residual {
    pub inner: Sequential,
}

impl Residual {
    pub fn new(inner: Sequential) -> Self {
        Self { inner }
    }
}

impl Layer for Residual {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut y = self.inner.forward(x, mode)?;
        if y.shape() != x.shape() {
            return Err(Error::shape(format!("residual branch changed shape {:?} -> {:?}", x.shape(), y.shape())));
        }
        y.data_mut().iter_mut().zip(x.data()).for_each(|(a, b)| *a += b);
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut dx = self.inner.backward(grad)?;
        dx.data_mut().iter_mut().zip(grad.data()).for_each(|(a, b)| *a += b);
        Ok(dx)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.inner.visit_params(f);
    }

    fn visit_params_ref(&self, f: &mut dyn FnMut(&Param)) {
        self.inner.visit_params_ref(f);
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }

    fn name(&self) -> &'static str {
        "residual"
    }
}

/// `y = [inner(x), x]` concatenated on the channel axis of `[N, T, C]`.
#[derive(Debug, Clone)]
pub struct ConcatSkip {
    pub inner: Sequential,
    pub zero_branch: bool,
    widths: (usize, usize),
}

impl ConcatSkip {
    pub fn new(inner: Sequential) -> Self {
        Self { inner, zero_branch: false, widths: (0, 0) }
    }
}

impl Layer for ConcatSkip {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (n, t, c) = dims3(x, "concat skip")?;
        let mut y = self.inner.forward(x, mode)?;
        let (yn, yt, cy) = dims3(&y, "concat skip branch")?;
        if (yn, yt) != (n, t) {
            return Err(Error::shape("concat skip branch changed batch or time axis"));
        }
        if self.zero_branch {
            y.fill(0.0);
        }
        let w = cy + c;
        let mut out = Vec::with_capacity(n * t * w);
        for r in 0..n * t {
            out.extend_from_slice(&y.data()[r * cy..(r + 1) * cy]);
            out.extend_from_slice(&x.data()[r * c..(r + 1) * c]);
        }
        self.widths = (cy, c);
        Tensor::new(vec![n, t, w], out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (n, t, w) = dims3(grad, "concat skip")?;
        let (cy, c) = self.widths;
        if w != cy + c {
            return Err(Error::shape("concat skip: gradient shape mismatch"));
        }
        let mut gy = Vec::with_capacity(n * t * cy);
        let mut gx = Vec::with_capacity(n * t * c);
        for r in 0..n * t {
            let row = &grad.data()[r * w..(r + 1) * w];
            if self.zero_branch {
                gy.extend(std::iter::repeat(0.0).take(cy));
            } else {
                gy.extend_from_slice(&row[..cy]);
            }
            gx.extend_from_slice(&row[cy..]);
        }
        let dx_branch = self.inner.backward(&Tensor::new(vec![n, t, cy], gy)?)?;
        let mut dx = Tensor::new(vec![n, t, c], gx)?;
        dx.data_mut().iter_mut().zip(dx_branch.data()).for_each(|(a, b)| *a += b);
        Ok(dx)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.inner.visit_params(f);
    }

    fn visit_params_ref(&self, f: &mut dyn FnMut(&Param)) {
        self.inner.visit_params_ref(f);
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }

    fn name(&self) -> &'static str {
        "concat_skip"
    }
}

/// `y = (inner(x) - inner(-x)) / 2`, an exactly odd function of the input.
/// Both halves run as one batch of `2N`.
#[derive(Debug, Clone)]
pub struct OddSymmetric {
    pub inner: Sequential,
}

impl OddSymmetric {
    pub fn new(inner: Sequential) -> Self {
        Self { inner }
    }
}

impl Layer for OddSymmetric {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let n = x.batch();
        let mut shape = x.shape().to_vec();
        shape[0] = 2 * n;
        let mut both = Vec::with_capacity(2 * x.len());
        both.extend_from_slice(x.data());
        both.extend(x.data().iter().map(|v| -v));
        let y = self.inner.forward(&Tensor::new(shape, both)?, mode)?;
        let half = y.len() / 2;
        let (pos, neg) = y.data().split_at(half);
        let mut out_shape = y.shape().to_vec();
        out_shape[0] = n;
        Tensor::new(out_shape, pos.iter().zip(neg).map(|(a, b)| 0.5 * (a - b)).collect())
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let n = grad.batch();
        let mut shape = grad.shape().to_vec();
        shape[0] = 2 * n;
        let mut g = Vec::with_capacity(2 * grad.len());
        g.extend(grad.data().iter().map(|v| 0.5 * v));
        g.extend(grad.data().iter().map(|v| -0.5 * v));
        let dx = self.inner.backward(&Tensor::new(shape, g)?)?;
        let half = dx.len() / 2;
        let (pos, neg) = dx.data().split_at(half);
        let mut in_shape = dx.shape().to_vec();
        in_shape[0] = n;
        Tensor::new(in_shape, pos.iter().zip(neg).map(|(a, b)| a - b).collect())
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.inner.visit_params(f);
    }

    fn visit_params_ref(&self, f: &mut dyn FnMut(&Param)) {
        self.inner.visit_params_ref(f);
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }

    fn name(&self) -> &'static str {
        "odd_symmetric"
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::nn::gradcheck::check_layer;
    use crate::nn::layers::Relu;

    #[test]
    fn sequence_layer_gradients() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::uniform(&[2, 7, 3], 1.0, &mut r);
        check_layer(&mut Conv1d::new(3, 4, 3, &mut r), &x, Mode::Train, 20, 1).unwrap();
        check_layer(&mut DepthwiseConv1d::new(3, 5, &mut r), &x, Mode::Train, 20, 2).unwrap();
        let inner = Sequential::new().with(Conv1d::new(3, 3, 3, &mut r)).with(Relu::new());
        check_layer(&mut Residual::new(inner), &x, Mode::Train, 20, 3).unwrap();
        let inner = Sequential::new().with(Conv1d::new(3, 2, 3, &mut r));
        check_layer(&mut ConcatSkip::new(inner), &x, Mode::Train, 20, 4).unwrap();
        let inner = Sequential::new().with(Conv1d::new(3, 2, 3, &mut r)).with(Relu::new());
        check_layer(&mut OddSymmetric::new(inner), &x, Mode::Train, 20, 5).unwrap();
    }

    #[test]
    fn odd_symmetric_is_odd() {
        let mut r = ChaCha8Rng::seed_from_u64(8);
        let inner = Sequential::new().with(Conv1d::new(2, 2, 3, &mut r)).with(Relu::new());
        let mut layer = OddSymmetric::new(inner);
        let x = Tensor::uniform(&[3, 5, 2], 1.0, &mut r);
        let neg = Tensor::new(x.shape().to_vec(), x.data().iter().map(|v| -v).collect()).unwrap();
        let a = layer.forward(&x, Mode::Eval).unwrap();
        let b = layer.forward(&neg, Mode::Eval).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| p == &-q));
        let zero = layer.forward(&Tensor::zeros(&[1, 5, 2]), Mode::Eval).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv1d_identity_kernel() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let mut c = Conv1d::new(1, 1, 3, &mut r);
        c.weight.value.data_mut().copy_from_slice(&[0.0, 1.0, 0.0]);
        c.bias.value.fill(0.0);
        let x = Tensor::uniform(&[1, 6, 1], 1.0, &mut r);
        assert_eq!(c.forward(&x, Mode::Eval).unwrap(), x);
    }
}
