//! Synthetic training data for binary defect segmentation.
//!
//! Label masks are produced either procedurally, from a randomised
//! trigonometric curve model, or by a Wasserstein GAN trained on existing
//! masks. Masks are turned into defect images by a procedural renderer or a
//! conditional adversarial translator, and the value of each augmentation
//! strategy is measured by training a small U-shaped segmenter on six
//! dataset variants and scoring it with seven pixelwise metrics.

pub mod augment;
pub mod error;
pub mod image;
pub mod labelgen;
pub mod metrics;
pub mod nn;
pub mod pairs;
pub mod par;
pub mod pipeline;
pub mod render;
pub mod rng;
pub mod segnet;
pub mod translator;
pub mod wgan;

pub use error::{Error, ErrorKind, Result};
pub use image::{binarize, ImageBuf, MaskBuf, PairSample, Provenance};
pub use rng::{derive_rng, SeededRng};
