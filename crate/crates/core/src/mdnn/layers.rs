//! Layer kinds and their forward/backward passes.
//!
//! Spatial tensors are `[N, C, H, W]`, flat tensors `[N, F]`. Backward
//! passes receive the layer's own input and output from the forward trace,
//! accumulate parameter gradients into [`Param::grad`] in sample order, and
//! optionally return the gradient with respect to the input.

use super::gemm::{gemm, View};
use super::tensor::Tensor;

pub const KERNEL: usize = 3;
pub const POOL: usize = 2;

/// Trainable array with its gradient and momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub dims: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl Param {
    pub fn new(dims: Vec<usize>, value: Vec<f64>) -> Self {
        let n = value.len();
        debug_assert_eq!(n, dims.iter().product::<usize>());
        Param { dims, value, grad: vec![0.0; n], velocity: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// 3×3 convolution with zero "same" padding and stride 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out, in, 3, 3]`
    pub weight: Param,
    /// `[out]`
    pub bias: Param,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out, in]`
    pub weight: Param,
    /// `[out]`
    pub bias: Param,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(Conv2d),
    Relu,
    MaxPool,
    GlobalAvgPool,
    Dense(Dense),
    Sigmoid,
}

/// Per-layer data kept from the forward pass beyond input and output.
#[derive(Debug, Clone, PartialEq)]
pub enum Aux {
    None,
    /// Flat input index of the winner of every pooling window.
    Argmax(Vec<u32>),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv3x3",
            Layer::Relu => "relu",
            Layer::MaxPool => "max_pool",
            Layer::GlobalAvgPool => "global_avg_pool",
            Layer::Dense(_) => "dense",
            Layer::Sigmoid => "sigmoid",
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Conv(c) => vec![&c.weight, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Conv(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            _ => vec![],
        }
    }

    /// Output dims for an input of `dims` (batch dimension included).
    pub fn output_dims(&self, dims: &[usize]) -> std::result::Result<Vec<usize>, String> {
        match self {
            Layer::Conv(c) => match dims {
                [n, ch, h, w] if *ch == c.in_channels => Ok(vec![*n, c.out_channels, *h, *w]),
                _ => Err(format!("expects [N, {}, H, W], got {dims:?}", c.in_channels)),
            },
            Layer::Relu | Layer::Sigmoid => Ok(dims.to_vec()),
            Layer::MaxPool => match dims {
                [n, ch, h, w] if h % POOL == 0 && w % POOL == 0 && *h > 0 && *w > 0 => Ok(vec![*n, *ch, h / POOL, w / POOL]),
                _ => Err(format!("2x2 pooling needs even non-zero height and width, got {dims:?}")),
            },
            Layer::GlobalAvgPool => match dims {
                [n, ch, h, w] if h * w > 0 => Ok(vec![*n, *ch]),
                _ => Err(format!("expects [N, C, H, W], got {dims:?}")),
            },
            Layer::Dense(d) => match dims {
                [n, f] if *f == d.in_features => Ok(vec![*n, d.out_features]),
                _ => Err(format!("expects [N, {}], got {dims:?}", d.in_features)),
            },
        }
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, Aux) {
        match self {
            Layer::Conv(c) => (conv_forward(c, x), Aux::None),
            Layer::Relu => {
                let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
                (Tensor::new(x.dims().to_vec(), data).expect("same shape"), Aux::None)
            }
            Layer::MaxPool => {
                let (y, arg) = maxpool_forward(x);
                (y, Aux::Argmax(arg))
            }
            Layer::GlobalAvgPool => (gap_forward(x), Aux::None),
            Layer::Dense(d) => (dense_forward(d, x), Aux::None),
            Layer::Sigmoid => {
                let data = x.data().iter().map(|&v| sigmoid(v)).collect();
                (Tensor::new(x.dims().to_vec(), data).expect("same shape"), Aux::None)
            }
        }
    }

    /// Accumulates parameter gradients and returns `dL/dx` when `need_dx`.
    pub fn backward(&mut self, x: &Tensor, y: &Tensor, aux: &Aux, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        match self {
            Layer::Conv(c) => conv_backward(c, x, dy, need_dx),
            Layer::Relu => {
                let data = y.data().iter().zip(dy.data()).map(|(&o, &g)| if o > 0.0 { g } else { 0.0 }).collect();
                Some(Tensor::new(x.dims().to_vec(), data).expect("same shape"))
            }
            Layer::MaxPool => {
                let Aux::Argmax(arg) = aux else { panic!("max-pool backward without argmax trace") };
                let mut dx = Tensor::zeros(x.dims().to_vec());
                let d = dx.data_mut();
                for (&src, &g) in arg.iter().zip(dy.data()) {
                    d[src as usize] += g;
                }
                Some(dx)
            }
            Layer::GlobalAvgPool => {
                let dims = x.dims();
                let hw = dims[2] * dims[3];
                let scale = 1.0 / hw as f64;
                let mut dx = Vec::with_capacity(x.len());
                for &g in dy.data() {
                    dx.extend(std::iter::repeat_n(g * scale, hw));
                }
                Some(Tensor::new(dims.to_vec(), dx).expect("same shape"))
            }
            Layer::Dense(d) => dense_backward(d, x, dy, need_dx),
            Layer::Sigmoid => {
                let data = y.data().iter().zip(dy.data()).map(|(&p, &g)| g * p * (1.0 - p)).collect();
                Some(Tensor::new(x.dims().to_vec(), data).expect("same shape"))
            }
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Unrolls one `[C, H, W]` sample into `[C·9, H·W]` patch columns.
fn im2col(src: &[f64], c: usize, h: usize, w: usize, col: &mut [f64]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &src[ch * hw..(ch + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut col[((ch * KERNEL + ky) * KERNEL + kx) * hw..][..hw];
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let srow = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = 0.0;
                            dst[1..].copy_from_slice(&srow[..w - 1]);
                        }
                        1 => dst.copy_from_slice(srow),
                        _ => {
                            dst[..w - 1].copy_from_slice(&srow[1..]);
                            dst[w - 1] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
fn col2im(col: &[f64], c: usize, h: usize, w: usize, dst: &mut [f64]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut dst[ch * hw..(ch + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &col[((ch * KERNEL + ky) * KERNEL + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let prow = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => prow[..w - 1].iter_mut().zip(&src[1..]).for_each(|(p, g)| *p += g),
                        1 => prow.iter_mut().zip(src).for_each(|(p, g)| *p += g),
                        _ => prow[1..].iter_mut().zip(&src[..w - 1]).for_each(|(p, g)| *p += g),
                    }
                }
            }
        }
    }
}

fn conv_forward(c: &Conv2d, x: &Tensor) -> Tensor {
    let [n, ch, h, w] = x.dims()[..] else { panic!("conv input must be 4-D") };
    let hw = h * w;
    let k = ch * KERNEL * KERNEL;
    let mut out = Tensor::zeros(vec![n, c.out_channels, h, w]);
    let mut col = vec![0.0; k * hw];
    for i in 0..n {
        im2col(x.sample(i), ch, h, w, &mut col);
        let o = out.sample_mut(i);
        for (oc, b) in c.bias.value.iter().enumerate() {
            o[oc * hw..(oc + 1) * hw].fill(*b);
        }
        gemm(1.0, View::row_major(&c.weight.value, c.out_channels, k), View::row_major(&col, k, hw), 1.0, o);
    }
    out
}

fn conv_backward(c: &mut Conv2d, x: &Tensor, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
    let [n, ch, h, w] = x.dims()[..] else { panic!("conv input must be 4-D") };
    let hw = h * w;
    let k = ch * KERNEL * KERNEL;
    let mut col = vec![0.0; k * hw];
    let mut dcol = if need_dx { vec![0.0; k * hw] } else { Vec::new() };
    let mut dx = need_dx.then(|| Tensor::zeros(x.dims().to_vec()));
    for i in 0..n {
        let g = dy.sample(i);
        im2col(x.sample(i), ch, h, w, &mut col);
        gemm(1.0, View::row_major(g, c.out_channels, hw), View::row_major(&col, k, hw).t(), 1.0, &mut c.weight.grad);
        for (oc, gb) in c.bias.grad.iter_mut().enumerate() {
            *gb += g[oc * hw..(oc + 1) * hw].iter().sum::<f64>();
        }
        if let Some(dx) = dx.as_mut() {
            gemm(1.0, View::row_major(&c.weight.value, c.out_channels, k).t(), View::row_major(g, c.out_channels, hw), 0.0, &mut dcol);
            col2im(&dcol, ch, h, w, dx.sample_mut(i));
        }
    }
    dx
}

fn maxpool_forward(x: &Tensor) -> (Tensor, Vec<u32>) {
    let [n, ch, h, w] = x.dims()[..] else { panic!("pool input must be 4-D") };
    let (oh, ow) = (h / POOL, w / POOL);
    let mut out = Vec::with_capacity(n * ch * oh * ow);
    let mut arg = Vec::with_capacity(n * ch * oh * ow);
    let d = x.data();
    for plane in 0..n * ch {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + (2 * oy) * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if d[idx] > d[best] {
                        best = idx;
                    }
                }
                out.push(d[best]);
                arg.push(best as u32);
            }
        }
    }
    (Tensor::new(vec![n, ch, oh, ow], out).expect("pool shape"), arg)
}

fn gap_forward(x: &Tensor) -> Tensor {
    let [n, ch, h, w] = x.dims()[..] else { panic!("GAP input must be 4-D") };
    let hw = h * w;
    let data = x.data().chunks_exact(hw).map(|p| p.iter().sum::<f64>() / hw as f64).collect();
    Tensor::new(vec![n, ch], data).expect("gap shape")
}

fn dense_forward(d: &Dense, x: &Tensor) -> Tensor {
    let n = x.batch();
    let mut out = Vec::with_capacity(n * d.out_features);
    for _ in 0..n {
        out.extend_from_slice(&d.bias.value);
    }
    gemm(
        1.0,
        View::row_major(x.data(), n, d.in_features),
        View::row_major(&d.weight.value, d.out_features, d.in_features).t(),
        1.0,
        &mut out,
    );
    Tensor::new(vec![n, d.out_features], out).expect("dense shape")
}

fn dense_backward(d: &mut Dense, x: &Tensor, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
    let n = x.batch();
    gemm(1.0, View::row_major(dy.data(), n, d.out_features).t(), View::row_major(x.data(), n, d.in_features), 1.0, &mut d.weight.grad);
    for row in dy.data().chunks_exact(d.out_features) {
        d.bias.grad.iter_mut().zip(row).for_each(|(b, g)| *b += g);
    }
    need_dx.then(|| {
        let mut dx = vec![0.0; n * d.in_features];
        gemm(
            1.0,
            View::row_major(dy.data(), n, d.out_features),
            View::row_major(&d.weight.value, d.out_features, d.in_features),
            0.0,
            &mut dx,
        );
        Tensor::new(x.dims().to_vec(), dx).expect("dense shape")
    })
}
