//! Image and mask value types, binarization, and PNG persistence.
//!
//! Pixel intensities live in `[0, 1]`. 8-bit files map through `v / 255` on
//! read and `round(v * 255)` on write.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major intensity image with 1 or 3 interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuf {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "image must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::shape("ImageBuf::new", &[height, width, channels], &[data.len()]));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidArgument(format!("image value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Clamps every value into `[0, 1]` (NaN becomes 0).
    pub fn from_clamped(width: usize, height: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(width, height, channels, data)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Single-channel view: the image itself, or the channel mean for RGB.
    pub fn to_gray(&self) -> ImageBuf {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| (px[0] + px[1] + px[2]) / 3.0)
            .collect();
        ImageBuf {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn mean_abs_diff(&self, other: &ImageBuf) -> Result<f64> {
        if self.dims() != other.dims() || self.channels != other.channels {
            return Err(Error::shape(
                "mean_abs_diff",
                &[self.height, self.width, self.channels],
                &[other.height, other.width, other.channels],
            ));
        }
        let sum: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum();
        Ok(sum / self.data.len() as f64)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let (channels, bytes) = match img.color() {
            image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16 => {
                (1, img.to_luma8().into_raw())
            }
            _ => (3, img.to_rgb8().into_raw()),
        };
        let data = bytes.iter().map(|&b| b as f64 / 255.0).collect();
        Self::new(w, h, channels, data)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer(path, &bytes, self.width as u32, self.height as u32, color).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Row-major binary mask; 1 marks a defect pixel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MaskBuf {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl MaskBuf {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape("MaskBuf::new", &[height, width], &[data.len()]));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("mask values must be 0 or 1".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = on as u8;
    }

    pub fn foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn foreground_fraction(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.foreground() as f64 / self.data.len() as f64
        }
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v <= 1)
    }

    /// In-place pixelwise OR. Panics on dimension mismatch.
    pub fn union_with(&mut self, other: &MaskBuf) {
        assert_eq!(self.dims(), other.dims(), "union of differently sized masks");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a |= *b;
        }
    }

    pub fn complement(&self) -> MaskBuf {
        MaskBuf {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| 1 - v).collect(),
        }
    }

    /// Embeds the mask as a single-channel image with values in {0.0, 1.0}.
    pub fn to_image(&self) -> ImageBuf {
        ImageBuf {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = ImageBuf::load_png(path)?.to_gray();
        mask_from_levels(&img).map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::Data(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| v * 255).collect();
        image::save_buffer(
            path,
            &bytes,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Strict conversion of a {0, 1}-valued image into a mask.
pub fn mask_from_levels(img: &ImageBuf) -> Result<MaskBuf> {
    if img.channels() != 1 {
        return Err(Error::InvalidArgument("mask image must be single-channel".into()));
    }
    let mut data = Vec::with_capacity(img.data().len());
    for &v in img.data() {
        if v == 0.0 {
            data.push(0);
        } else if v == 1.0 {
            data.push(1);
        } else {
            return Err(Error::InvalidArgument(format!("non-binary mask value {v}")));
        }
    }
    MaskBuf::new(img.width(), img.height(), data)
}

/// Thresholds a single-channel image: a pixel is foreground iff `value >= threshold`.
pub fn binarize(img: &ImageBuf, threshold: f64) -> Result<MaskBuf> {
    if img.channels() != 1 {
        return Err(Error::InvalidArgument(format!(
            "binarize expects a single-channel image, got {} channels",
            img.channels()
        )));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "binarization threshold {threshold} outside (0, 1)"
        )));
    }
    let data = img.data().iter().map(|&v| (v >= threshold) as u8).collect();
    MaskBuf::new(img.width(), img.height(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Real,
    SyntheticTrig,
    SyntheticWgan,
}

/// An image together with its ground-truth mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    image: ImageBuf,
    mask: MaskBuf,
    provenance: Provenance,
}

impl PairSample {
    pub fn new(image: ImageBuf, mask: MaskBuf, provenance: Provenance) -> Result<Self> {
        if image.dims() != mask.dims() {
            return Err(Error::shape(
                "PairSample::new",
                &[mask.height(), mask.width()],
                &[image.height(), image.width()],
            ));
        }
        Ok(Self {
            image,
            mask,
            provenance,
        })
    }

    pub fn image(&self) -> &ImageBuf {
        &self.image
    }

    pub fn mask(&self) -> &MaskBuf {
        &self.mask
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn into_parts(self) -> (ImageBuf, MaskBuf, Provenance) {
        (self.image, self.mask, self.provenance)
    }
}
