//! Trigonometric defect-curve model and label mask synthesis.
//!
//! A defect is modelled as the graph of
//!
//! ```text
//! f(x) = a1·sin(a2·x) + a3·sin(x) + a4·cos(a5·x) + a6·x + a7·x²
//! ```
//!
//! with coefficients drawn uniformly from configured intervals. Each curve
//! is plotted across the frame, thickened with a disc brush and rotated about
//! the frame centre; a label is the union of several such curves.
//!
//! Curve coordinates are decoupled from pixels by `units_per_pixel`: column
//! `c` samples the curve at `x = c·units_per_pixel` and the value is divided
//! by the same factor. Linear and constant curves are unaffected by the
//! scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::MaskBuf;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigParams {
    pub a: [f64; 7],
}

impl TrigParams {
    pub fn new(a: [f64; 7]) -> Self {
        Self { a }
    }

    /// Upper bound on `|f'(x)|` for `x ∈ [0, x_max]`.
    fn slope_bound(&self, x_max: f64) -> f64 {
        let a = &self.a;
        (a[0] * a[1]).abs() + a[2].abs() + (a[3] * a[4]).abs() + a[5].abs() + 2.0 * a[6].abs() * x_max
    }
}

/// Closed interval per coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigBounds {
    pub lower: [f64; 7],
    pub upper: [f64; 7],
}

impl Default for TrigBounds {
    fn default() -> Self {
        Self {
            lower: [15.0, 0.02, 1.0, -0.5, -0.5, -0.5, 0.005],
            upper: [30.0, 0.03, 50.0, 0.5, 0.5, 0.5, 0.0095],
        }
    }
}

impl TrigBounds {
    pub fn validate(&self) -> Result<()> {
        for i in 0..7 {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("bound a{} = [{lo}, {hi}] is invalid", i + 1)));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &TrigParams) -> bool {
        (0..7).all(|i| p.a[i] >= self.lower[i] && p.a[i] <= self.upper[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RotationSpec {
    Fixed {
        degrees: f64,
    },
    /// Uniform over `[min, max)` degrees.
    Uniform {
        min: f64,
        max: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelGenConfig {
    pub width: usize,
    pub height: usize,
    pub curves_min: usize,
    pub curves_max: usize,
    pub thickness_min: usize,
    pub thickness_max: usize,
    pub rotation: RotationSpec,
    pub bounds: TrigBounds,
    pub max_resamples: usize,
    pub units_per_pixel: f64,
}

impl Default for LabelGenConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            curves_min: 1,
            curves_max: 4,
            thickness_min: 1,
            thickness_max: 3,
            rotation: RotationSpec::Uniform { min: 0.0, max: 180.0 },
            bounds: TrigBounds::default(),
            max_resamples: 16,
            units_per_pixel: 16.0,
        }
    }
}

impl LabelGenConfig {
    pub fn sized(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("label size must be positive");
        }
        if self.curves_min < 1 || self.curves_min > self.curves_max {
            return bad("need 1 <= curves_min <= curves_max");
        }
        if self.thickness_min < 1 || self.thickness_min > self.thickness_max {
            return bad("need 1 <= thickness_min <= thickness_max");
        }
        if self.max_resamples < 1 {
            return bad("max_resamples must be >= 1");
        }
        if !(self.units_per_pixel.is_finite() && self.units_per_pixel > 0.0) {
            return bad("units_per_pixel must be positive");
        }
        if let RotationSpec::Uniform { min, max } = self.rotation {
            if !(min.is_finite() && max.is_finite() && min <= max) {
                return bad("rotation range must satisfy min <= max");
            }
        }
        self.bounds.validate()
    }
}

pub fn sample_trig_params(rng: &mut SeededRng, bounds: &TrigBounds) -> TrigParams {
    let mut a = [0.0; 7];
    for (i, ai) in a.iter_mut().enumerate() {
        *ai = rng.uniform_range(bounds.lower[i], bounds.upper[i]);
    }
    TrigParams { a }
}

pub fn eval_curve(p: &TrigParams, x: f64) -> f64 {
    let a = &p.a;
    a[0] * (a[1] * x).sin() + a[2] * x.sin() + a[3] * (a[4] * x).cos() + a[5] * x + a[6] * x * x
}

/// Pixel offsets covered by a disc brush of diameter `thickness`.
pub(crate) fn disc_offsets(thickness: usize) -> Vec<(i64, i64)> {
    let r = thickness as f64 / 2.0;
    let reach = r.floor() as i64;
    let mut out = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            if (dx * dx + dy * dy) as f64 <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Samples per pixel column that keep consecutive rounded points 8-connected.
fn samples_per_column(p: &TrigParams, cfg: &LabelGenConfig) -> usize {
    // Slope in pixel space equals slope in curve space since both axes share the scale.
    let slope = p.slope_bound(cfg.width as f64 * cfg.units_per_pixel);
    (2.0 * slope.max(0.5)).ceil() as usize
}

/// The set of pixels visited by the sampled curve, in frame, before thickening.
fn curve_pixels(p: &TrigParams, cfg: &LabelGenConfig) -> Vec<(i64, i64)> {
    let per_col = samples_per_column(p, cfg);
    let total = cfg.width * per_col;
    let centre = cfg.height as f64 / 2.0;
    let mut pts: Vec<(i64, i64)> = Vec::new();
    for j in 0..total {
        let x = j as f64 / per_col as f64;
        let y = centre - eval_curve(p, x * cfg.units_per_pixel) / cfg.units_per_pixel;
        if !y.is_finite() {
            continue;
        }
        let pt = (x.round() as i64, y.round() as i64);
        if pts.last() != Some(&pt) {
            pts.push(pt);
        }
    }
    pts
}

/// Nearest-neighbour rotation of a mask about its centre.
pub fn rotate_mask(mask: &MaskBuf, degrees: f64) -> MaskBuf {
    if degrees == 0.0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let theta = degrees.to_radians();
    let (s, c) = theta.sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut out = MaskBuf::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            // Inverse map: rotate the destination offset by -theta.
            let sx = (c * dx + s * dy + cx).round();
            let sy = (-s * dx + c * dy + cy).round();
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h && mask.get(sx as usize, sy as usize) {
                out.set(x, y, true);
            }
        }
    }
    out
}

pub fn rasterize_curve(p: &TrigParams, cfg: &LabelGenConfig, thickness: usize, angle_degrees: f64) -> MaskBuf {
    let (w, h) = (cfg.width as i64, cfg.height as i64);
    let mut mask = MaskBuf::zeros(cfg.width, cfg.height);
    let brush = disc_offsets(thickness.max(1));
    let reach = (thickness as i64) / 2 + 1;
    for (px, py) in curve_pixels(p, cfg) {
        if px < -reach || py < -reach || px >= w + reach || py >= h + reach {
            continue;
        }
        for &(dx, dy) in &brush {
            let (x, y) = (px + dx, py + dy);
            if x >= 0 && y >= 0 && x < w && y < h {
                mask.set(x as usize, y as usize, true);
            }
        }
    }
    rotate_mask(&mask, angle_degrees)
}

/// One curve's worth of random draws, recorded for sidecars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDraw {
    pub params: TrigParams,
    pub thickness: usize,
    pub angle_degrees: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedLabel {
    pub mask: MaskBuf,
    pub curves: Vec<CurveDraw>,
    pub attempts: usize,
}

fn draw_curve(rng: &mut SeededRng, cfg: &LabelGenConfig) -> CurveDraw {
    let params = sample_trig_params(rng, &cfg.bounds);
    let thickness = rng.int_inclusive(cfg.thickness_min as u64, cfg.thickness_max as u64) as usize;
    let angle_degrees = match cfg.rotation {
        RotationSpec::Fixed { degrees } => degrees,
        RotationSpec::Uniform { min, max } => rng.uniform_range(min, max),
    };
    CurveDraw {
        params,
        thickness,
        angle_degrees,
    }
}

/// Generates a non-empty label mask, recording the curve draws that made it.
pub fn generate_label_detailed(rng: &mut SeededRng, cfg: &LabelGenConfig) -> Result<GeneratedLabel> {
    cfg.validate()?;
    for attempt in 1..=cfg.max_resamples {
        let n = rng.int_inclusive(cfg.curves_min as u64, cfg.curves_max as u64) as usize;
        let mut mask = MaskBuf::zeros(cfg.width, cfg.height);
        let mut curves = Vec::with_capacity(n);
        for _ in 0..n {
            let draw = draw_curve(rng, cfg);
            mask.union_with(&rasterize_curve(&draw.params, cfg, draw.thickness, draw.angle_degrees));
            curves.push(draw);
        }
        if mask.foreground() > 0 {
            return Ok(GeneratedLabel {
                mask,
                curves,
                attempts: attempt,
            });
        }
    }
    Err(Error::GenerationFailed {
        attempts: cfg.max_resamples,
    })
}

pub fn generate_label(rng: &mut SeededRng, cfg: &LabelGenConfig) -> Result<MaskBuf> {
    generate_label_detailed(rng, cfg).map(|g| g.mask)
}

/// `n` labels, label `i` drawn from stream `i` of `rng`.
pub fn generate_labels(rng: &SeededRng, cfg: &LabelGenConfig, n: usize) -> Result<Vec<GeneratedLabel>> {
    crate::par::map_indexed(n, |i| generate_label_detailed(&mut rng.derive(i as u64), cfg))
        .into_iter()
        .collect()
}
