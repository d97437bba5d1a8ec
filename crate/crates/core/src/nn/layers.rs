//! Layer kinds with hand-coded forward and backward passes.
//!
//! Convolutions use the cross-correlation convention with zero padding.
//! Batched tensors are `[N, C, H, W]` for spatial layers and `[N, F]` for
//! dense layers. Per-sample work fans out through [`crate::par`]; parameter
//! gradients are reduced over the batch in sample order so the result does
//! not depend on the execution mode.

use serde::{Deserialize, Serialize};

use super::tensor::{Param, Tensor};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::SeededRng;

/// `c[m×n] = a[m×k] · b[k×n] + beta·c`, with optional transposed storage of `a` / `b`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], beta: f64) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds asserted above; strides describe the stated layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of one (de)convolution window sweep.
#[derive(Debug, Clone, Copy)]
struct Window {
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Window {
    fn rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Valid output-column range for kernel column `kx`.
    fn ox_range(&self, kx: usize) -> (usize, usize) {
        let p = self.pad as isize;
        let s = self.stride as isize;
        let kx = kx as isize;
        // need 0 <= ox*s + kx - p < w
        let lo = ((p - kx).max(0) + s - 1) / s;
        let hi = (self.w as isize + p - kx + s - 1).max(0) / s;
        (lo as usize, (hi as usize).min(self.ow).max(lo as usize))
    }

    fn im2col(&self, x: &[f64], col: &mut [f64]) {
        let (k, s, p) = (self.k, self.stride, self.pad);
        let cols = self.cols();
        col.fill(0.0);
        for c in 0..self.channels {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((c * k + ky) * k + kx) * cols;
                    let (lo, hi) = self.ox_range(kx);
                    for oy in 0..self.oh {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..];
                        let dst = &mut col[row + oy * self.ow..row + (oy + 1) * self.ow];
                        for ox in lo..hi {
                            dst[ox] = src[ox * s + kx - p];
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[f64], x: &mut [f64]) {
        let (k, s, p) = (self.k, self.stride, self.pad);
        let cols = self.cols();
        x.fill(0.0);
        for c in 0..self.channels {
            let plane = &mut x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((c * k + ky) * k + kx) * cols;
                    let (lo, hi) = self.ox_range(kx);
                    for oy in 0..self.oh {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let src = &col[row + oy * self.ow..row + (oy + 1) * self.ow];
                        let dst = &mut plane[iy as usize * self.w..];
                        for ox in lo..hi {
                            dst[ox * s + kx - p] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (size + 2 * pad).checked_sub(k).map(|v| v / stride + 1)
}

fn tconv_out(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    ((size.max(1) - 1) * stride + k).checked_sub(2 * pad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    ConvTranspose2d {
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    LeakyRelu {
        slope: f64,
    },
    Sigmoid,
    Tanh,
    /// Reshapes each batch item; the batch axis is kept.
    Reshape {
        shape: Vec<usize>,
    },
}

impl LayerKind {
    fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerKind::Dense { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            LayerKind::Conv2d { cin, cout, kernel, .. } => vec![vec![cout, cin, kernel, kernel], vec![cout]],
            LayerKind::ConvTranspose2d { cin, cout, kernel, .. } => vec![vec![cin, cout, kernel, kernel], vec![cout]],
            _ => vec![],
        }
    }

    fn fans(&self) -> (usize, usize) {
        match *self {
            LayerKind::Dense { inputs, outputs } => (inputs, outputs),
            LayerKind::Conv2d { cin, cout, kernel, .. } | LayerKind::ConvTranspose2d { cin, cout, kernel, .. } => {
                (cin * kernel * kernel, cout * kernel * kernel)
            }
            _ => (1, 1),
        }
    }
}

/// A layer description together with its parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    kind: LayerKind,
    params: Vec<Param>,
}

impl Layer {
    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn new(kind: LayerKind, rng: &mut SeededRng) -> Self {
        let (fan_in, fan_out) = kind.fans();
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let params = kind
            .param_shapes()
            .into_iter()
            .enumerate()
            .map(|(i, shape)| {
                if i == 0 {
                    Param::new(Tensor::from_fn(&shape, |_| rng.uniform_range(-bound, bound)))
                } else {
                    Param::new(Tensor::zeros(&shape))
                }
            })
            .collect();
        Self { kind, params }
    }

    pub fn dense(inputs: usize, outputs: usize, rng: &mut SeededRng) -> Self {
        Self::new(LayerKind::Dense { inputs, outputs }, rng)
    }

    pub fn conv(cin: usize, cout: usize, kernel: usize, stride: usize, padding: usize, rng: &mut SeededRng) -> Self {
        Self::new(
            LayerKind::Conv2d {
                cin,
                cout,
                kernel,
                stride,
                padding,
            },
            rng,
        )
    }

    pub fn tconv(cin: usize, cout: usize, kernel: usize, stride: usize, padding: usize, rng: &mut SeededRng) -> Self {
        Self::new(
            LayerKind::ConvTranspose2d {
                cin,
                cout,
                kernel,
                stride,
                padding,
            },
            rng,
        )
    }

    pub fn activation(kind: LayerKind) -> Self {
        assert!(kind.param_shapes().is_empty(), "not a parameter-free layer");
        Self { kind, params: vec![] }
    }

    pub fn kind(&self) -> &LayerKind {
        &self.kind
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    /// Shape of the output for a batched input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: Vec<usize>| {
            Err(Error::Shape {
                context: "layer input",
                expected,
                actual: input.to_vec(),
            })
        };
        match self.kind {
            LayerKind::Dense { inputs, outputs } => {
                if input.len() != 2 || input[1] != inputs {
                    return mismatch(vec![input.first().copied().unwrap_or(0), inputs]);
                }
                Ok(vec![input[0], outputs])
            }
            LayerKind::Conv2d {
                cin,
                cout,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != 4 || input[1] != cin {
                    return mismatch(vec![input.first().copied().unwrap_or(0), cin, 0, 0]);
                }
                match (
                    conv_out(input[2], kernel, stride, padding),
                    conv_out(input[3], kernel, stride, padding),
                ) {
                    (Some(h), Some(w)) if h > 0 && w > 0 => Ok(vec![input[0], cout, h, w]),
                    _ => mismatch(vec![input[0], cin, kernel, kernel]),
                }
            }
            LayerKind::ConvTranspose2d {
                cin,
                cout,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != 4 || input[1] != cin {
                    return mismatch(vec![input.first().copied().unwrap_or(0), cin, 0, 0]);
                }
                match (
                    tconv_out(input[2], kernel, stride, padding),
                    tconv_out(input[3], kernel, stride, padding),
                ) {
                    (Some(h), Some(w)) if h > 0 && w > 0 => Ok(vec![input[0], cout, h, w]),
                    _ => mismatch(vec![input[0], cin, kernel, kernel]),
                }
            }
            LayerKind::Reshape { ref shape } => {
                let per_item: usize = input.iter().skip(1).product();
                if input.is_empty() || shape.iter().product::<usize>() != per_item {
                    let mut expected = vec![input.first().copied().unwrap_or(0)];
                    expected.extend_from_slice(shape);
                    return mismatch(expected);
                }
                let mut out = vec![input[0]];
                out.extend_from_slice(shape);
                Ok(out)
            }
            _ => Ok(input.to_vec()),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.output_shape(x.shape())?;
        let out = match self.kind {
            LayerKind::Dense { inputs, outputs } => {
                let n = x.batch();
                let mut y = vec![0.0; n * outputs];
                gemm(
                    n,
                    inputs,
                    outputs,
                    x.data(),
                    false,
                    self.params[0].value.data(),
                    true,
                    &mut y,
                    0.0,
                );
                let b = self.params[1].value.data();
                for row in y.chunks_exact_mut(outputs) {
                    for (v, bi) in row.iter_mut().zip(b) {
                        *v += bi;
                    }
                }
                y
            }
            LayerKind::Conv2d {
                cin,
                cout,
                kernel,
                stride,
                padding,
            } => {
                let win = Window {
                    channels: cin,
                    h: x.shape()[2],
                    w: x.shape()[3],
                    k: kernel,
                    stride,
                    pad: padding,
                    oh: out_shape[2],
                    ow: out_shape[3],
                };
                let weight = self.params[0].value.data();
                let bias = self.params[1].value.data();
                let items = par::map_indexed(x.batch(), |i| {
                    let mut col = vec![0.0; win.rows() * win.cols()];
                    win.im2col(x.item(i), &mut col);
                    let mut y = vec![0.0; cout * win.cols()];
                    gemm(cout, win.rows(), win.cols(), weight, false, &col, false, &mut y, 0.0);
                    add_channel_bias(&mut y, bias, win.cols());
                    y
                });
                items.concat()
            }
            LayerKind::ConvTranspose2d {
                cin,
                cout,
                kernel,
                stride,
                padding,
            } => {
                let win = Window {
                    channels: cout,
                    h: out_shape[2],
                    w: out_shape[3],
                    k: kernel,
                    stride,
                    pad: padding,
                    oh: x.shape()[2],
                    ow: x.shape()[3],
                };
                let weight = self.params[0].value.data();
                let bias = self.params[1].value.data();
                let items = par::map_indexed(x.batch(), |i| {
                    let mut col = vec![0.0; win.rows() * win.cols()];
                    gemm(
                        win.rows(),
                        cin,
                        win.cols(),
                        weight,
                        true,
                        x.item(i),
                        false,
                        &mut col,
                        0.0,
                    );
                    let mut y = vec![0.0; cout * win.h * win.w];
                    win.col2im(&col, &mut y);
                    add_channel_bias(&mut y, bias, win.h * win.w);
                    y
                });
                items.concat()
            }
            LayerKind::Relu => x.data().iter().map(|&v| v.max(0.0)).collect(),
            LayerKind::LeakyRelu { slope } => x.data().iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect(),
            LayerKind::Sigmoid => x.data().iter().map(|&v| sigmoid(v)).collect(),
            LayerKind::Tanh => x.data().iter().map(|&v| v.tanh()).collect(),
            LayerKind::Reshape { .. } => x.data().to_vec(),
        };
        Tensor::new(out_shape, out)
    }

    /// Gradient of the forward map at `x` contracted with `dy`.
    ///
    /// Returns the input gradient and one gradient per parameter tensor.
    pub fn backward(&self, x: &Tensor, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let out_shape = self.output_shape(x.shape())?;
        if dy.shape() != out_shape.as_slice() {
            return Err(Error::shape("layer backward", &out_shape, dy.shape()));
        }
        let n = x.batch();
        match self.kind {
            LayerKind::Dense { inputs, outputs } => {
                let w = self.params[0].value.data();
                let mut dx = vec![0.0; n * inputs];
                gemm(n, outputs, inputs, dy.data(), false, w, false, &mut dx, 0.0);
                let mut dw = vec![0.0; outputs * inputs];
                gemm(outputs, n, inputs, dy.data(), true, x.data(), false, &mut dw, 0.0);
                let mut db = vec![0.0; outputs];
                for row in dy.data().chunks_exact(outputs) {
                    for (g, v) in db.iter_mut().zip(row) {
                        *g += v;
                    }
                }
                Ok((
                    Tensor::new(x.shape().to_vec(), dx)?,
                    vec![Tensor::new(vec![outputs, inputs], dw)?, Tensor::new(vec![outputs], db)?],
                ))
            }
            LayerKind::Conv2d {
                cin,
                cout,
                kernel,
                stride,
                padding,
            } => {
                let win = Window {
                    channels: cin,
                    h: x.shape()[2],
                    w: x.shape()[3],
                    k: kernel,
                    stride,
                    pad: padding,
                    oh: out_shape[2],
                    ow: out_shape[3],
                };
                let (k, p) = (win.rows(), win.cols());
                let weight = self.params[0].value.data();
                let items = par::map_indexed(n, |i| {
                    let mut col = vec![0.0; k * p];
                    win.im2col(x.item(i), &mut col);
                    let g = dy.item(i);
                    let mut dw = vec![0.0; cout * k];
                    gemm(cout, p, k, g, false, &col, true, &mut dw, 0.0);
                    let db: Vec<f64> = g.chunks_exact(p).map(|c| c.iter().sum()).collect();
                    gemm(k, cout, p, weight, true, g, false, &mut col, 0.0);
                    let mut dx = vec![0.0; x.item_len()];
                    win.col2im(&col, &mut dx);
                    (dx, dw, db)
                });
                let (dx, dw, db) = reduce_items(items, cout * k, cout);
                Ok((
                    Tensor::new(x.shape().to_vec(), dx)?,
                    vec![
                        Tensor::new(vec![cout, cin, kernel, kernel], dw)?,
                        Tensor::new(vec![cout], db)?,
                    ],
                ))
            }
            LayerKind::ConvTranspose2d {
                cin,
                cout,
                kernel,
                stride,
                padding,
            } => {
                let win = Window {
                    channels: cout,
                    h: out_shape[2],
                    w: out_shape[3],
                    k: kernel,
                    stride,
                    pad: padding,
                    oh: x.shape()[2],
                    ow: x.shape()[3],
                };
                let (k, p) = (win.rows(), win.cols());
                let weight = self.params[0].value.data();
                let items = par::map_indexed(n, |i| {
                    let g = dy.item(i);
                    let mut col = vec![0.0; k * p];
                    win.im2col(g, &mut col);
                    let mut dx = vec![0.0; cin * p];
                    gemm(cin, k, p, weight, false, &col, false, &mut dx, 0.0);
                    let mut dw = vec![0.0; cin * k];
                    gemm(cin, p, k, x.item(i), false, &col, true, &mut dw, 0.0);
                    let plane = win.h * win.w;
                    let db: Vec<f64> = g.chunks_exact(plane).map(|c| c.iter().sum()).collect();
                    (dx, dw, db)
                });
                let (dx, dw, db) = reduce_items(items, cin * k, cout);
                Ok((
                    Tensor::new(x.shape().to_vec(), dx)?,
                    vec![
                        Tensor::new(vec![cin, cout, kernel, kernel], dw)?,
                        Tensor::new(vec![cout], db)?,
                    ],
                ))
            }
            LayerKind::Relu => Ok((elementwise_grad(x, dy, |v| if v > 0.0 { 1.0 } else { 0.0 }), vec![])),
            LayerKind::LeakyRelu { slope } => {
                Ok((elementwise_grad(x, dy, |v| if v > 0.0 { 1.0 } else { slope }), vec![]))
            }
            LayerKind::Sigmoid => Ok((
                elementwise_grad(x, dy, |v| {
                    let s = sigmoid(v);
                    s * (1.0 - s)
                }),
                vec![],
            )),
            LayerKind::Tanh => Ok((
                elementwise_grad(x, dy, |v| {
                    let t = v.tanh();
                    1.0 - t * t
                }),
                vec![],
            )),
            LayerKind::Reshape { .. } => Ok((Tensor::new(x.shape().to_vec(), dy.data().to_vec())?, vec![])),
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn add_channel_bias(y: &mut [f64], bias: &[f64], plane: usize) {
    for (chunk, b) in y.chunks_exact_mut(plane).zip(bias) {
        for v in chunk {
            *v += b;
        }
    }
}

fn elementwise_grad(x: &Tensor, dy: &Tensor, d: impl Fn(f64) -> f64) -> Tensor {
    let data = x.data().iter().zip(dy.data()).map(|(&v, &g)| g * d(v)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

type Item = (Vec<f64>, Vec<f64>, Vec<f64>);

fn reduce_items(items: Vec<Item>, wlen: usize, blen: usize) -> Item {
    let mut dx = Vec::new();
    let mut dw = vec![0.0; wlen];
    let mut db = vec![0.0; blen];
    for (x, w, b) in items {
        dx.extend_from_slice(&x);
        for (acc, v) in dw.iter_mut().zip(&w) {
            *acc += v;
        }
        for (acc, v) in db.iter_mut().zip(&b) {
            *acc += v;
        }
    }
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> SeededRng {
        SeededRng::new(1234)
    }

    #[test]
    fn identity_pointwise_conv() {
        let mut layer = Layer::conv(1, 1, 1, 1, 0, &mut rng());
        layer.params_mut()[0].value.data_mut()[0] = 1.0;
        let x = Tensor::randn(&[2, 1, 5, 4], &mut rng());
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn dense_hand_arithmetic() {
        let mut layer = Layer::dense(2, 2, &mut rng());
        layer.params_mut()[0]
            .value
            .data_mut()
            .copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        let y = layer
            .forward(&Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap())
            .unwrap();
        assert_eq!(y.data(), &[3.0, 7.0]);
    }

    #[test]
    fn scalar_dense_chain_rule() {
        let mut layer = Layer::dense(1, 1, &mut rng());
        layer.params_mut()[0].value.data_mut()[0] = 2.5;
        let x = Tensor::new(vec![1, 1], vec![-1.5]).unwrap();
        let (dx, grads) = layer.backward(&x, &Tensor::filled(&[1, 1], 1.0)).unwrap();
        assert_eq!(dx.data(), &[2.5]);
        assert_eq!(grads[0].data(), &[-1.5]);
        assert_eq!(grads[1].data(), &[1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let layers = [
            (Layer::conv(2, 3, 3, 1, 1, &mut rng()), vec![2, 2, 6, 6]),
            (Layer::tconv(2, 3, 4, 2, 1, &mut rng()), vec![2, 2, 3, 3]),
            (Layer::dense(4, 3, &mut rng()), vec![2, 4]),
        ];
        for (layer, shape) in layers {
            let x = Tensor::randn(&shape, &mut rng());
            let out = layer.output_shape(&shape).unwrap();
            let (dx, grads) = layer.backward(&x, &Tensor::zeros(&out)).unwrap();
            assert_eq!(dx.max_abs(), 0.0);
            assert!(grads.iter().all(|g| g.max_abs() == 0.0));
        }
    }

    #[test]
    fn transposed_conv_is_adjoint() {
        let mut r = rng();
        for &(cin, cout, k, s, p, h) in &[
            (2, 3, 3, 1, 1, 6),
            (3, 2, 4, 2, 1, 8),
            (1, 4, 3, 2, 0, 9),
            (2, 2, 5, 1, 2, 7),
        ] {
            let conv = Layer::conv(cin, cout, k, s, p, &mut r);
            let mut tconv = Layer::tconv(cout, cin, k, s, p, &mut r);
            tconv.params_mut()[0].value = conv.params()[0].value.clone();
            let x = Tensor::randn(&[2, cin, h, h], &mut r);
            let yshape = conv.output_shape(x.shape()).unwrap();
            assert_eq!(
                tconv.output_shape(&yshape).unwrap(),
                x.shape(),
                "geometry {k}/{s}/{p}/{h}"
            );
            let y = Tensor::randn(&yshape, &mut r);
            let lhs = conv.forward(&x).unwrap().dot(&y);
            let rhs = x.dot(&tconv.forward(&y).unwrap());
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn shape_errors_name_expectation() {
        let layer = Layer::conv(3, 4, 3, 1, 1, &mut rng());
        let err = layer.forward(&Tensor::zeros(&[1, 2, 5, 5])).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
        assert!(err.to_string().contains("expected"));
    }

    #[test]
    fn direct_conv_matches_loops() {
        let mut r = rng();
        let layer = Layer::conv(2, 3, 3, 2, 1, &mut r);
        let x = Tensor::randn(&[1, 2, 7, 6], &mut r);
        let y = layer.forward(&x).unwrap();
        let w = layer.params()[0].value.data();
        let (oh, ow) = (y.shape()[2], y.shape()[3]);
        for o in 0..3 {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * 2 + ky) as isize - 1;
                                let ix = (ox * 2 + kx) as isize - 1;
                                if iy >= 0 && ix >= 0 && iy < 7 && ix < 6 {
                                    acc += w[((o * 2 + c) * 3 + ky) * 3 + kx]
                                        * x.data()[(c * 7 + iy as usize) * 6 + ix as usize];
                                }
                            }
                        }
                    }
                    let got = y.data()[(o * oh + oy) * ow + ox];
                    assert!((got - acc).abs() < 1e-12);
                }
            }
        }
    }
}
