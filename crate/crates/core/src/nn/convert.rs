//! Conversions between image buffers and NCHW tensors.

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::image::{ImageBuf, MaskBuf};

/// Stacks same-sized images into `[n, channels, h, w]`.
pub fn images_to_tensor(images: &[&ImageBuf]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("images_to_tensor: empty batch".into()))?;
    let (w, h) = first.dims();
    let ch = first.channels();
    let mut data = Vec::with_capacity(images.len() * ch * w * h);
    for img in images {
        if img.dims() != (w, h) || img.channels() != ch {
            return Err(Error::shape(
                "image batch",
                &[ch, h, w],
                &[img.channels(), img.height(), img.width()],
            ));
        }
        for c in 0..ch {
            for y in 0..h {
                for x in 0..w {
                    data.push(img.get(x, y, c));
                }
            }
        }
    }
    Tensor::new(vec![images.len(), ch, h, w], data)
}

/// Stacks same-sized masks into `[n, 1, h, w]` with values 0.0/1.0.
pub fn masks_to_tensor(masks: &[&MaskBuf]) -> Result<Tensor> {
    let first = masks
        .first()
        .ok_or_else(|| Error::InvalidArgument("masks_to_tensor: empty batch".into()))?;
    let (w, h) = first.dims();
    let mut data = Vec::with_capacity(masks.len() * w * h);
    for m in masks {
        if m.dims() != (w, h) {
            return Err(Error::shape("mask batch", &[h, w], &[m.height(), m.width()]));
        }
        data.extend(m.data().iter().map(|&v| v as f64));
    }
    Tensor::new(vec![masks.len(), 1, h, w], data)
}

/// Item `n` of an NCHW tensor as an image, clamped to `[0, 1]`.
pub fn tensor_to_image(t: &Tensor, n: usize) -> Result<ImageBuf> {
    let s = t.shape();
    if s.len() != 4 || n >= s[0] {
        return Err(Error::InvalidArgument(format!("cannot take image {n} of tensor {s:?}")));
    }
    let (ch, h, w) = (s[1], s[2], s[3]);
    let item = t.item(n);
    let mut data = Vec::with_capacity(ch * h * w);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                data.push(item[(c * h + y) * w + x]);
            }
        }
    }
    ImageBuf::from_clamped(w, h, ch, data)
}
