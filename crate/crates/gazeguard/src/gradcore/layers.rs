//! Layer vocabulary: conv2d, maxpool2d, relu, flatten, dense, concat_aux,
//! softmax. Each layer caches what its backward pass needs; forward then
//! backward on the same input is always valid.
//!
//! Conventions fixed at construction: conv2d is stride 1 with no padding,
//! maxpool2d is 2x2 with stride 2. Images are (N, C, H, W), features (N, D).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

/// Mutable view over one parameter tensor and its gradient buffer.
pub struct ParamView<'a> {
    pub values: &'a mut Tensor,
    pub grads: &'a mut Tensor,
}

fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, seed: u64) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.gen_range(-bound..=bound);
    }
    t.snap_f32();
    t
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    /// (out_ch, in_ch, kh, kw); row-major layout doubles as the
    /// (out_ch, in_ch*kh*kw) weight matrix used by im2col.
    pub weight: Tensor,
    pub bias: Tensor,
    grad_w: Tensor,
    grad_b: Tensor,
    cache: Option<ConvCache>,
}

#[derive(Debug, Clone)]
struct ConvCache {
    input_shape: Vec<usize>,
    patches: Tensor, // (N*OH*OW, in_ch*kh*kw)
}

impl Conv2d {
    pub fn new(in_ch: usize, out_ch: usize, kh: usize, kw: usize, seed: u64) -> Self {
        let fan_in = in_ch * kh * kw;
        let fan_out = out_ch * kh * kw;
        Conv2d {
            in_ch,
            out_ch,
            kh,
            kw,
            weight: glorot_uniform(&[out_ch, in_ch, kh, kw], fan_in, fan_out, seed),
            bias: Tensor::zeros(&[out_ch]),
            grad_w: Tensor::zeros(&[out_ch, in_ch, kh, kw]),
            grad_b: Tensor::zeros(&[out_ch]),
            cache: None,
        }
    }

    pub fn from_params(weight: Tensor, bias: Tensor) -> Result<Self> {
        let s = weight.shape().to_vec();
        if s.len() != 4 || bias.shape() != [s[0]] {
            return Err(Error::Structure("conv2d parameter shapes invalid".into()));
        }
        Ok(Conv2d {
            in_ch: s[1],
            out_ch: s[0],
            kh: s[2],
            kw: s[3],
            grad_w: Tensor::zeros(&s),
            grad_b: Tensor::zeros(&[s[0]]),
            weight,
            bias,
            cache: None,
        })
    }

    fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if h < self.kh || w < self.kw {
            return Err(Error::Structure(format!(
                "conv2d kernel {}x{} larger than input {}x{}",
                self.kh, self.kw, h, w
            )));
        }
        Ok((h - self.kh + 1, w - self.kw + 1))
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.in_ch {
            return Err(Error::Structure(format!(
                "conv2d expects (N, {}, H, W), got {:?}",
                self.in_ch, s
            )));
        }
        let (n, h, w) = (s[0], s[2], s[3]);
        let (oh, ow) = self.out_hw(h, w)?;
        let ck = self.in_ch * self.kh * self.kw;
        let rows = n * oh * ow;

        let mut patches = Tensor::zeros(&[rows, ck]);
        {
            let src = x.data();
            let dst = patches.data_mut();
            for ni in 0..n {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let r = ((ni * oh + oy) * ow + ox) * ck;
                        for c in 0..self.in_ch {
                            let plane = ((ni * self.in_ch) + c) * h * w;
                            for ky in 0..self.kh {
                                let src_off = plane + (oy + ky) * w + ox;
                                let dst_off = r + (c * self.kh + ky) * self.kw;
                                dst[dst_off..dst_off + self.kw]
                                    .copy_from_slice(&src[src_off..src_off + self.kw]);
                            }
                        }
                    }
                }
            }
        }

        // (rows, ck) x (out, ck)^T -> (rows, out)
        let out_mat = matmul_nt(&patches, &self.weight, rows, ck, self.out_ch);
        let mut out = Tensor::zeros(&[n, self.out_ch, oh, ow]);
        {
            let om = out_mat.data();
            let bias = self.bias.data();
            let dst = out.data_mut();
            for ni in 0..n {
                for o in 0..self.out_ch {
                    let b = bias[o];
                    let plane = (ni * self.out_ch + o) * oh * ow;
                    for p in 0..oh * ow {
                        dst[plane + p] = om[(ni * oh * ow + p) * self.out_ch + o] + b;
                    }
                }
            }
        }
        self.cache = Some(ConvCache {
            input_shape: s.to_vec(),
            patches,
        });
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor, want_param_grads: bool) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("conv2d backward before forward".into()))?;
        let (n, h, w) = (
            cache.input_shape[0],
            cache.input_shape[2],
            cache.input_shape[3],
        );
        let (oh, ow) = self.out_hw(h, w)?;
        let ck = self.in_ch * self.kh * self.kw;
        let rows = n * oh * ow;
        if grad.shape() != [n, self.out_ch, oh, ow] {
            return Err(Error::Structure(format!(
                "conv2d gradient shape {:?} does not match output ({},{},{},{})",
                grad.shape(),
                n,
                self.out_ch,
                oh,
                ow
            )));
        }

        // Re-layout grad to (rows, out_ch).
        let mut g_mat = Tensor::zeros(&[rows, self.out_ch]);
        {
            let src = grad.data();
            let dst = g_mat.data_mut();
            for ni in 0..n {
                for o in 0..self.out_ch {
                    let plane = (ni * self.out_ch + o) * oh * ow;
                    for p in 0..oh * ow {
                        dst[(ni * oh * ow + p) * self.out_ch + o] = src[plane + p];
                    }
                }
            }
        }

        if want_param_grads {
            // dW = g_mat^T x patches
            let dw = matmul_tn(&g_mat, &cache.patches, self.out_ch, rows, ck);
            for (acc, v) in self.grad_w.data_mut().iter_mut().zip(dw.data()) {
                *acc += v;
            }
            let gb = self.grad_b.data_mut();
            for r in 0..rows {
                let row = &g_mat.data()[r * self.out_ch..(r + 1) * self.out_ch];
                for (acc, v) in gb.iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }

        // dpatches = g_mat x W, then scatter back (col2im).
        let dpatches = matmul_nn(&g_mat, &self.weight, rows, self.out_ch, ck);
        let mut dx = Tensor::zeros(&cache.input_shape);
        {
            let src = dpatches.data();
            let dst = dx.data_mut();
            for ni in 0..n {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let r = ((ni * oh + oy) * ow + ox) * ck;
                        for c in 0..self.in_ch {
                            let plane = ((ni * self.in_ch) + c) * h * w;
                            for ky in 0..self.kh {
                                let dst_off = plane + (oy + ky) * w + ox;
                                let src_off = r + (c * self.kh + ky) * self.kw;
                                for kx in 0..self.kw {
                                    dst[dst_off + kx] += src[src_off + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone, Default)]
pub struct MaxPool2d {
    cache: Option<PoolCache>,
}

#[derive(Debug, Clone)]
struct PoolCache {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

impl MaxPool2d {
    pub fn new() -> Self {
        MaxPool2d { cache: None }
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 4 {
            return Err(Error::Structure(format!(
                "maxpool2d expects (N, C, H, W), got {:?}",
                s
            )));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(Error::Structure(format!(
                "maxpool2d input {}x{} too small",
                h, w
            )));
        }
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        let mut argmax = vec![0usize; n * c * oh * ow];
        let src = x.data();
        let dst = out.data_mut();
        for plane_idx in 0..n * c {
            let plane = plane_idx * h * w;
            let oplane = plane_idx * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let base = plane + (oy * 2) * w + ox * 2;
                    // fixed scan order breaks ties toward the first maximum
                    let candidates = [base, base + 1, base + w, base + w + 1];
                    let mut best = candidates[0];
                    for &cand in &candidates[1..] {
                        if src[cand] > src[best] {
                            best = cand;
                        }
                    }
                    dst[oplane + oy * ow + ox] = src[best];
                    argmax[oplane + oy * ow + ox] = best;
                }
            }
        }
        self.cache = Some(PoolCache {
            input_shape: s.to_vec(),
            argmax,
        });
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("maxpool2d backward before forward".into()))?;
        if grad.len() != cache.argmax.len() {
            return Err(Error::Structure(
                "maxpool2d gradient length mismatch".into(),
            ));
        }
        let mut dx = Tensor::zeros(&cache.input_shape);
        let dst = dx.data_mut();
        for (g, &idx) in grad.data().iter().zip(&cache.argmax) {
            dst[idx] += g;
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Relu { mask: None }
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let mut out = x.clone();
        let mask: Vec<bool> = x.data().iter().map(|&v| v > 0.0).collect();
        for (v, &keep) in out.data_mut().iter_mut().zip(&mask) {
            if !keep {
                *v = 0.0;
            }
        }
        self.mask = Some(mask);
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mask = self
            .mask
            .as_ref()
            .ok_or_else(|| Error::State("relu backward before forward".into()))?;
        if grad.len() != mask.len() {
            return Err(Error::Structure("relu gradient length mismatch".into()));
        }
        let mut dx = grad.clone();
        for (v, &keep) in dx.data_mut().iter_mut().zip(mask) {
            if !keep {
                *v = 0.0;
            }
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Flatten {
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Flatten { input_shape: None }
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        if s.is_empty() {
            return Err(Error::Structure("flatten on rank-0 tensor".into()));
        }
        self.input_shape = Some(s.to_vec());
        let n = s[0];
        let rest: usize = s[1..].iter().product();
        x.clone().reshape(&[n, rest])
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let shape = self
            .input_shape
            .as_ref()
            .ok_or_else(|| Error::State("flatten backward before forward".into()))?;
        grad.clone().reshape(shape)
    }
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// (in_dim, out_dim)
    pub weight: Tensor,
    pub bias: Tensor,
    grad_w: Tensor,
    grad_b: Tensor,
    input: Option<Tensor>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, seed: u64) -> Self {
        Dense {
            in_dim,
            out_dim,
            weight: glorot_uniform(&[in_dim, out_dim], in_dim, out_dim, seed),
            bias: Tensor::zeros(&[out_dim]),
            grad_w: Tensor::zeros(&[in_dim, out_dim]),
            grad_b: Tensor::zeros(&[out_dim]),
            input: None,
        }
    }

    pub fn from_params(weight: Tensor, bias: Tensor) -> Result<Self> {
        let s = weight.shape().to_vec();
        if s.len() != 2 || bias.shape() != [s[1]] {
            return Err(Error::Structure("dense parameter shapes invalid".into()));
        }
        Ok(Dense {
            in_dim: s[0],
            out_dim: s[1],
            grad_w: Tensor::zeros(&s),
            grad_b: Tensor::zeros(&[s[1]]),
            weight,
            bias,
            input: None,
        })
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 2 || s[1] != self.in_dim {
            return Err(Error::Structure(format!(
                "dense expects (N, {}), got {:?}",
                self.in_dim, s
            )));
        }
        let n = s[0];
        let mut out = matmul_nn(x, &self.weight, n, self.in_dim, self.out_dim);
        let bias = self.bias.data();
        for row in out.data_mut().chunks_mut(self.out_dim) {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        self.input = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor, want_param_grads: bool) -> Result<Tensor> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::State("dense backward before forward".into()))?;
        let n = x.shape()[0];
        if grad.shape() != [n, self.out_dim] {
            return Err(Error::Structure(format!(
                "dense gradient shape {:?} does not match output ({}, {})",
                grad.shape(),
                n,
                self.out_dim
            )));
        }
        if want_param_grads {
            let dw = matmul_tn(x, grad, self.in_dim, n, self.out_dim);
            for (acc, v) in self.grad_w.data_mut().iter_mut().zip(dw.data()) {
                *acc += v;
            }
            let gb = self.grad_b.data_mut();
            for row in grad.data().chunks(self.out_dim) {
                for (acc, v) in gb.iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
        Ok(matmul_nt(grad, &self.weight, n, self.out_dim, self.in_dim))
    }
}

#[derive(Debug, Clone)]
pub struct ConcatAux {
    pub aux_dim: usize,
    main_dim: Option<usize>,
}

impl ConcatAux {
    pub fn new(aux_dim: usize) -> Self {
        ConcatAux {
            aux_dim,
            main_dim: None,
        }
    }

    fn forward(&mut self, x: &Tensor, aux: &Tensor) -> Result<Tensor> {
        let (xs, as_) = (x.shape(), aux.shape());
        if xs.len() != 2 || as_.len() != 2 || xs[0] != as_[0] || as_[1] != self.aux_dim {
            return Err(Error::Structure(format!(
                "concat_aux expects main (N, D) with aux (N, {}), got {:?} and {:?}",
                self.aux_dim, xs, as_
            )));
        }
        let (n, d) = (xs[0], xs[1]);
        let mut out = Tensor::zeros(&[n, d + self.aux_dim]);
        {
            let dst = out.data_mut();
            for i in 0..n {
                let o = i * (d + self.aux_dim);
                dst[o..o + d].copy_from_slice(x.row(i));
                dst[o + d..o + d + self.aux_dim].copy_from_slice(aux.row(i));
            }
        }
        self.main_dim = Some(d);
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let d = self
            .main_dim
            .ok_or_else(|| Error::State("concat_aux backward before forward".into()))?;
        let s = grad.shape();
        if s.len() != 2 || s[1] != d + self.aux_dim {
            return Err(Error::Structure(
                "concat_aux gradient shape mismatch".into(),
            ));
        }
        let n = s[0];
        let mut dx = Tensor::zeros(&[n, d]);
        {
            let dst = dx.data_mut();
            for i in 0..n {
                dst[i * d..(i + 1) * d].copy_from_slice(&grad.row(i)[..d]);
            }
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Softmax {
    output: Option<Tensor>,
}

impl Softmax {
    pub fn new() -> Self {
        Softmax { output: None }
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 2 {
            return Err(Error::Structure(format!(
                "softmax expects (N, D), got {:?}",
                s
            )));
        }
        let d = s[1];
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(d) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        self.output = Some(out.clone());
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let p = self
            .output
            .as_ref()
            .ok_or_else(|| Error::State("softmax backward before forward".into()))?;
        if grad.shape() != p.shape() {
            return Err(Error::Structure("softmax gradient shape mismatch".into()));
        }
        let d = p.shape()[1];
        let mut dx = Tensor::zeros(p.shape());
        for ((drow, prow), grow) in dx
            .data_mut()
            .chunks_mut(d)
            .zip(p.data().chunks(d))
            .zip(grad.data().chunks(d))
        {
            let gp: f64 = grow.iter().zip(prow).map(|(g, p)| g * p).sum();
            for ((dv, &pv), &gv) in drow.iter_mut().zip(prow).zip(grow) {
                *dv = pv * (gv - gp);
            }
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv2d(Conv2d),
    MaxPool2d(MaxPool2d),
    Relu(Relu),
    Flatten(Flatten),
    Dense(Dense),
    ConcatAux(ConcatAux),
    Softmax(Softmax),
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool2d(_) => "maxpool2d",
            Layer::Relu(_) => "relu",
            Layer::Flatten(_) => "flatten",
            Layer::Dense(_) => "dense",
            Layer::ConcatAux(_) => "concat_aux",
            Layer::Softmax(_) => "softmax",
        }
    }

    pub fn is_aux_junction(&self) -> bool {
        matches!(self, Layer::ConcatAux(_))
    }

    pub fn forward(&mut self, x: &Tensor, aux: Option<&Tensor>) -> Result<Tensor> {
        match self {
            Layer::Conv2d(l) => l.forward(x),
            Layer::MaxPool2d(l) => l.forward(x),
            Layer::Relu(l) => l.forward(x),
            Layer::Flatten(l) => l.forward(x),
            Layer::Dense(l) => l.forward(x),
            Layer::ConcatAux(l) => {
                let aux = aux.ok_or_else(|| {
                    Error::Structure("graph has an aux junction but no aux input given".into())
                })?;
                l.forward(x, aux)
            }
            Layer::Softmax(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, grad: &Tensor, want_param_grads: bool) -> Result<Tensor> {
        match self {
            Layer::Conv2d(l) => l.backward(grad, want_param_grads),
            Layer::MaxPool2d(l) => l.backward(grad),
            Layer::Relu(l) => l.backward(grad),
            Layer::Flatten(l) => l.backward(grad),
            Layer::Dense(l) => l.backward(grad, want_param_grads),
            Layer::ConcatAux(l) => l.backward(grad),
            Layer::Softmax(l) => l.backward(grad),
        }
    }

    pub fn params_mut(&mut self) -> Vec<ParamView<'_>> {
        match self {
            Layer::Conv2d(l) => vec![
                ParamView {
                    values: &mut l.weight,
                    grads: &mut l.grad_w,
                },
                ParamView {
                    values: &mut l.bias,
                    grads: &mut l.grad_b,
                },
            ],
            Layer::Dense(l) => vec![
                ParamView {
                    values: &mut l.weight,
                    grads: &mut l.grad_w,
                },
                ParamView {
                    values: &mut l.bias,
                    grads: &mut l.grad_b,
                },
            ],
            _ => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv2d(l) => vec![&l.weight, &l.bias],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn grads(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv2d(l) => vec![&l.grad_w, &l.grad_b],
            Layer::Dense(l) => vec![&l.grad_w, &l.grad_b],
            _ => Vec::new(),
        }
    }

    pub fn zero_grads(&mut self) {
        for view in self.params_mut() {
            view.grads.fill(0.0);
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Drops activation caches; keeps parameters.
    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv2d(l) => l.cache = None,
            Layer::MaxPool2d(l) => l.cache = None,
            Layer::Relu(l) => l.mask = None,
            Layer::Flatten(l) => l.input_shape = None,
            Layer::Dense(l) => l.input = None,
            Layer::ConcatAux(l) => l.main_dim = None,
            Layer::Softmax(l) => l.output = None,
        }
    }
}
