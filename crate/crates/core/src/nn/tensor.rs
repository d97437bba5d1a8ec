use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape("Tensor::new", &shape, &[data.len()]));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn randn(shape: &[usize], rng: &mut SeededRng) -> Self {
        Self::from_fn(shape, |_| rng.normal())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape("reshape", shape, &self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Leading (batch) dimension.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Elements per batch item.
    pub fn item_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn item(&self, n: usize) -> &[f64] {
        let k = self.item_len();
        &self.data[n * k..(n + 1) * k]
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.data.iter().sum::<f64>() / self.data.len() as f64
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Stacks equally shaped items along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack zero tensors".into()))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::shape("stack", &first.shape, &t.shape));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Tensor { shape, data })
    }

    /// Concatenates two `[N, C, H, W]` tensors along the channel axis.
    pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.shape.len() != 4 || b.shape.len() != 4 || a.shape[0] != b.shape[0] || a.shape[2..] != b.shape[2..] {
            return Err(Error::shape("concat_channels", &a.shape, &b.shape));
        }
        let (n, ca, cb) = (a.shape[0], a.shape[1], b.shape[1]);
        let hw = a.shape[2] * a.shape[3];
        let mut data = Vec::with_capacity(a.len() + b.len());
        for i in 0..n {
            data.extend_from_slice(&a.data[i * ca * hw..(i + 1) * ca * hw]);
            data.extend_from_slice(&b.data[i * cb * hw..(i + 1) * cb * hw]);
        }
        Ok(Tensor {
            shape: vec![n, ca + cb, a.shape[2], a.shape[3]],
            data,
        })
    }

    /// Inverse of [`Tensor::concat_channels`]: splits after `ca` channels.
    pub fn split_channels(&self, ca: usize) -> (Tensor, Tensor) {
        let (n, c, h, w) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        let cb = c - ca;
        let hw = h * w;
        let mut a = Vec::with_capacity(n * ca * hw);
        let mut b = Vec::with_capacity(n * cb * hw);
        for i in 0..n {
            let base = i * c * hw;
            a.extend_from_slice(&self.data[base..base + ca * hw]);
            b.extend_from_slice(&self.data[base + ca * hw..base + c * hw]);
        }
        (
            Tensor {
                shape: vec![n, ca, h, w],
                data: a,
            },
            Tensor {
                shape: vec![n, cb, h, w],
                data: b,
            },
        )
    }
}

/// A trainable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}
