//! Joint geometric augmentation of image/mask pairs.
//!
//! Every transform computes one destination→source coordinate map and
//! resamples the image (bilinear by default) and the mask (always nearest)
//! through it, so labels stay aligned and binary. Out-of-frame source
//! coordinates are folded back with reflect-101 edge handling (mirror
//! without repeating the edge pixel).
//!
//! [`augment_online`] applies, in this order and each behind its own
//! probability gate: random sized crop, horizontal flip, vertical flip,
//! 180° rotation, and one of {elastic transform, grid distortion}.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageBuf, MaskBuf, PairSample};
use crate::rng::SeededRng;

/// Side length the reference augmentation parameters are expressed in.
pub const REFERENCE_SIZE: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interp {
    #[default]
    Bilinear,
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BorderMode {
    /// `dcb|abcd|cba`: mirror about the edge pixel without repeating it.
    #[default]
    Reflect101,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElasticParams {
    pub alpha: f64,
    pub sigma: f64,
    pub alpha_affine: f64,
    pub border_mode: BorderMode,
}

impl Default for ElasticParams {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            sigma: 10.0,
            alpha_affine: REFERENCE_SIZE as f64 * 0.05,
            border_mode: BorderMode::Reflect101,
        }
    }
}

impl ElasticParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config("elastic sigma must be > 0".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite() && self.alpha_affine >= 0.0 && self.alpha_affine.is_finite()) {
            return Err(Error::Config("elastic alpha and alpha_affine must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridParams {
    pub num_steps: usize,
    pub distort_limit: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            num_steps: 2,
            distort_limit: 0.4,
        }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_steps < 1 {
            return Err(Error::Config("grid num_steps must be >= 1".into()));
        }
        if !(self.distort_limit >= 0.0 && self.distort_limit < 1.0) {
            return Err(Error::Config("grid distort_limit must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    pub p_crop: f64,
    /// Inclusive range of square crop sides, in pixels.
    pub crop_window: [usize; 2],
    pub p_flip_h: f64,
    pub p_flip_v: f64,
    pub p_rotate: f64,
    /// Gate of the one-of {elastic, grid} block.
    pub p_warp: f64,
    pub elastic: ElasticParams,
    pub grid: GridParams,
    /// Resampling of the image channel; masks are always nearest.
    pub image_interpolation: Interp,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self::reference()
    }
}

impl AugmentPolicy {
    /// Parameters for 512-pixel inputs.
    pub fn reference() -> Self {
        Self {
            p_crop: 0.25,
            crop_window: [400, 512],
            p_flip_h: 0.5,
            p_flip_v: 0.5,
            p_rotate: 0.5,
            p_warp: 0.5,
            elastic: ElasticParams::default(),
            grid: GridParams::default(),
            image_interpolation: Interp::Bilinear,
        }
    }

    /// Reference parameters with pixel quantities (crop window, affine
    /// jitter) scaled linearly from 512 pixels to `size`.
    pub fn scaled_to(size: usize) -> Self {
        let mut p = Self::reference();
        let k = size as f64 / REFERENCE_SIZE as f64;
        p.crop_window = [
            ((400.0 * k).round() as usize).clamp(1, size),
            ((512.0 * k).round() as usize).clamp(1, size),
        ];
        p.elastic.alpha_affine *= k;
        p
    }

    /// Every gate closed.
    pub fn identity() -> Self {
        Self {
            p_crop: 0.0,
            p_flip_h: 0.0,
            p_flip_v: 0.0,
            p_rotate: 0.0,
            p_warp: 0.0,
            ..Self::reference()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_crop", self.p_crop),
            ("p_flip_h", self.p_flip_h),
            ("p_flip_v", self.p_flip_v),
            ("p_rotate", self.p_rotate),
            ("p_warp", self.p_warp),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        if self.crop_window[0] < 1 || self.crop_window[0] > self.crop_window[1] {
            return Err(Error::Config("crop_window must satisfy 1 <= min <= max".into()));
        }
        self.elastic.validate()?;
        self.grid.validate()
    }
}

fn reflect101(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    (if m < n as i64 { m } else { period - m }) as usize
}

fn sample_bilinear(img: &ImageBuf, sx: f64, sy: f64, c: usize) -> f64 {
    let (w, h) = img.dims();
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let xa = reflect101(x0, w);
    let xb = reflect101(x0 + 1, w);
    let ya = reflect101(y0, h);
    let yb = reflect101(y0 + 1, h);
    let top = img.get(xa, ya, c) * (1.0 - fx) + img.get(xb, ya, c) * fx;
    let bottom = img.get(xa, yb, c) * (1.0 - fx) + img.get(xb, yb, c) * fx;
    top * (1.0 - fy) + bottom * fy
}

fn nearest_index(s: f64, n: usize) -> usize {
    reflect101(s.round() as i64, n)
}

/// Resamples both halves of a pair through `map(x, y) -> (src_x, src_y)`.
fn remap(pair: &PairSample, interp: Interp, map: impl Fn(usize, usize) -> (f64, f64)) -> Result<PairSample> {
    let img = pair.image();
    let mask = pair.mask();
    let (w, h) = img.dims();
    let ch = img.channels();
    let mut data = Vec::with_capacity(w * h * ch);
    let mut mdata = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = map(x, y);
            let (nx, ny) = (nearest_index(sx, w), nearest_index(sy, h));
            for c in 0..ch {
                data.push(match interp {
                    Interp::Bilinear => sample_bilinear(img, sx, sy, c),
                    Interp::Nearest => img.get(nx, ny, c),
                });
            }
            mdata.push(mask.get(nx, ny) as u8);
        }
    }
    PairSample::new(
        ImageBuf::from_clamped(w, h, ch, data)?,
        MaskBuf::new(w, h, mdata)?,
        pair.provenance(),
    )
}

fn permute(pair: &PairSample, map: impl Fn(usize, usize) -> (usize, usize)) -> PairSample {
    remap(pair, Interp::Nearest, |x, y| {
        let (sx, sy) = map(x, y);
        (sx as f64, sy as f64)
    })
    .expect("pixel permutation preserves validity")
}

pub fn flip_h(pair: &PairSample) -> PairSample {
    let w = pair.image().width();
    permute(pair, |x, y| (w - 1 - x, y))
}

pub fn flip_v(pair: &PairSample) -> PairSample {
    let h = pair.image().height();
    permute(pair, |x, y| (x, h - 1 - y))
}

pub fn rotate180(pair: &PairSample) -> PairSample {
    let (w, h) = pair.image().dims();
    permute(pair, |x, y| (w - 1 - x, h - 1 - y))
}

/// Crops the `side × side` square at `(x0, y0)` and resizes it back to the
/// input size using pixel-centre alignment.
pub fn crop_resize(pair: &PairSample, x0: usize, y0: usize, side: usize, interp: Interp) -> Result<PairSample> {
    let (w, h) = pair.image().dims();
    if side == 0 || x0 + side > w || y0 + side > h {
        return Err(Error::InvalidArgument(format!(
            "crop of side {side} at ({x0}, {y0}) exceeds {w}x{h} input"
        )));
    }
    let sx_scale = side as f64 / w as f64;
    let sy_scale = side as f64 / h as f64;
    let last = (side - 1) as f64;
    remap(pair, interp, |x, y| {
        let cx = ((x as f64 + 0.5) * sx_scale - 0.5).clamp(0.0, last);
        let cy = ((y as f64 + 0.5) * sy_scale - 0.5).clamp(0.0, last);
        (x0 as f64 + cx, y0 as f64 + cy)
    })
}

pub fn random_sized_crop(rng: &mut SeededRng, pair: &PairSample, policy: &AugmentPolicy) -> Result<PairSample> {
    let (w, h) = pair.image().dims();
    let [lo, hi] = policy.crop_window;
    if hi > w.min(h) || lo > hi || lo == 0 {
        return Err(Error::InvalidArgument(format!(
            "crop window [{lo}, {hi}] does not fit a {w}x{h} input"
        )));
    }
    let side = rng.int_inclusive(lo as u64, hi as u64) as usize;
    let x0 = rng.int_inclusive(0, (w - side) as u64) as usize;
    let y0 = rng.int_inclusive(0, (h - side) as u64) as usize;
    crop_resize(pair, x0, y0, side, policy.image_interpolation)
}

/// Random draws behind one elastic transform.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticField {
    pub width: usize,
    pub height: usize,
    /// Row-major per-pixel displacements, already smoothed and scaled by `alpha`.
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    /// Destination→source affine map `[a, b, c, d, e, f]`: `sx = a·x + b·y + c`, `sy = d·x + e·y + f`.
    pub affine: [f64; 6],
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian smoothing with reflect-101 borders.
pub fn gaussian_smooth(field: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * field[y * w + reflect101(x as i64 + j as i64 - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * tmp[reflect101(y as i64 + j as i64 - r, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Affine map taking each `to[i]` onto `from[i]`.
fn affine_from_points(from: [[f64; 2]; 3], to: [[f64; 2]; 3]) -> Result<[f64; 6]> {
    // Solve [tx ty 1] · [a d; b e; c f] = [fx fy] for the three pairs.
    let m = [
        [to[0][0], to[0][1], 1.0],
        [to[1][0], to[1][1], 1.0],
        [to[2][0], to[2][1], 1.0],
    ];
    let det = m[0][0] * (m[1][1] - m[2][1]) - m[0][1] * (m[1][0] - m[2][0]) + (m[1][0] * m[2][1] - m[2][0] * m[1][1]);
    if det.abs() < 1e-12 {
        return Err(Error::InvalidArgument("degenerate affine control points".into()));
    }
    let solve = |rhs: [f64; 3]| -> [f64; 3] {
        let mut out = [0.0; 3];
        for (col, o) in out.iter_mut().enumerate() {
            let mut mm = m;
            for row in 0..3 {
                mm[row][col] = rhs[row];
            }
            let d = mm[0][0] * (mm[1][1] * mm[2][2] - mm[1][2] * mm[2][1])
                - mm[0][1] * (mm[1][0] * mm[2][2] - mm[1][2] * mm[2][0])
                + mm[0][2] * (mm[1][0] * mm[2][1] - mm[1][1] * mm[2][0]);
            *o = d / det;
        }
        out
    };
    let xs = solve([from[0][0], from[1][0], from[2][0]]);
    let ys = solve([from[0][1], from[1][1], from[2][1]]);
    Ok([xs[0], xs[1], xs[2], ys[0], ys[1], ys[2]])
}

/// Draws the displacement field and affine jitter for a `w × h` input.
///
/// Three control points around the centre are each moved by up to
/// `alpha_affine` pixels per axis; the displacement field is uniform
/// `[-1, 1]` noise smoothed by a Gaussian of width `sigma` and scaled by
/// `alpha`.
pub fn sample_elastic_field(rng: &mut SeededRng, w: usize, h: usize, params: &ElasticParams) -> Result<ElasticField> {
    params.validate()?;
    let cx = (w / 2) as f64;
    let cy = (h / 2) as f64;
    let sq = (w.min(h) / 3).max(1) as f64;
    let base = [[cx + sq, cy + sq], [cx + sq, cy - sq], [cx - sq, cy - sq]];
    let mut moved = base;
    for p in &mut moved {
        p[0] += rng.uniform_range(-params.alpha_affine, params.alpha_affine);
        p[1] += rng.uniform_range(-params.alpha_affine, params.alpha_affine);
    }
    // Destination points are the moved ones; sample from the originals.
    let affine = affine_from_points(base, moved)?;
    let noise_x: Vec<f64> = (0..w * h).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let noise_y: Vec<f64> = (0..w * h).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let dx = gaussian_smooth(&noise_x, w, h, params.sigma)
        .into_iter()
        .map(|v| v * params.alpha)
        .collect();
    let dy = gaussian_smooth(&noise_y, w, h, params.sigma)
        .into_iter()
        .map(|v| v * params.alpha)
        .collect();
    Ok(ElasticField {
        width: w,
        height: h,
        dx,
        dy,
        affine,
    })
}

/// Resamples through `src = affine(x + dx, y + dy)`.
pub fn apply_elastic_field(pair: &PairSample, field: &ElasticField, interp: Interp) -> Result<PairSample> {
    if pair.image().dims() != (field.width, field.height) {
        return Err(Error::shape(
            "elastic field",
            &[field.height, field.width],
            &[pair.image().height(), pair.image().width()],
        ));
    }
    let [a, b, c, d, e, f] = field.affine;
    remap(pair, interp, |x, y| {
        let i = y * field.width + x;
        let px = x as f64 + field.dx[i];
        let py = y as f64 + field.dy[i];
        (a * px + b * py + c, d * px + e * py + f)
    })
}

pub fn elastic_transform(
    rng: &mut SeededRng,
    pair: &PairSample,
    params: &ElasticParams,
    interp: Interp,
) -> Result<PairSample> {
    params.validate()?;
    if params.alpha == 0.0 && params.alpha_affine == 0.0 {
        return Ok(pair.clone());
    }
    let (w, h) = pair.image().dims();
    let field = sample_elastic_field(rng, w, h, params)?;
    apply_elastic_field(pair, &field, interp)
}

/// Source positions of the grid knots along one axis of length `n`.
///
/// Destination knots sit at `i·(n−1)/steps`; each cell's source extent is
/// its nominal extent times a factor in `[1 − limit, 1 + limit]`, and the
/// extents are renormalised so the outer knots stay at `0` and `n − 1`.
pub fn grid_knots(rng: &mut SeededRng, n: usize, params: &GridParams) -> Vec<f64> {
    let steps = params.num_steps;
    let factors: Vec<f64> = (0..steps)
        .map(|_| rng.uniform_range(1.0 - params.distort_limit, 1.0 + params.distort_limit))
        .collect();
    let total: f64 = factors.iter().sum();
    let span = (n - 1) as f64;
    let mut knots = Vec::with_capacity(steps + 1);
    let mut acc = 0.0;
    knots.push(0.0);
    for f in &factors[..steps - 1] {
        acc += f;
        knots.push(span * acc / total);
    }
    knots.push(span);
    knots
}

/// Piecewise-linear interpolation of destination coordinate `t` through knots.
pub fn grid_lookup(knots: &[f64], n: usize, t: usize) -> f64 {
    let steps = knots.len() - 1;
    let span = (n - 1) as f64;
    if span == 0.0 {
        return 0.0;
    }
    let pos = t as f64 * steps as f64 / span;
    let cell = (pos.floor() as usize).min(steps - 1);
    let frac = pos - cell as f64;
    knots[cell] + frac * (knots[cell + 1] - knots[cell])
}

pub fn grid_distortion(
    rng: &mut SeededRng,
    pair: &PairSample,
    params: &GridParams,
    interp: Interp,
) -> Result<PairSample> {
    params.validate()?;
    if params.distort_limit == 0.0 {
        return Ok(pair.clone());
    }
    let (w, h) = pair.image().dims();
    let kx = grid_knots(rng, w, params);
    let ky = grid_knots(rng, h, params);
    let xs: Vec<f64> = (0..w).map(|x| grid_lookup(&kx, w, x)).collect();
    let ys: Vec<f64> = (0..h).map(|y| grid_lookup(&ky, h, y)).collect();
    remap(pair, interp, |x, y| (xs[x], ys[y]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Warp {
    Elastic,
    Grid,
}

/// Which gates fired during one [`augment_online`] call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AppliedOps {
    pub crop: bool,
    pub flip_h: bool,
    pub flip_v: bool,
    pub rotate: bool,
    pub warp: Option<Warp>,
}

pub fn augment_online_traced(
    rng: &mut SeededRng,
    pair: &PairSample,
    policy: &AugmentPolicy,
) -> Result<(PairSample, AppliedOps)> {
    policy.validate()?;
    let mut ops = AppliedOps::default();
    let mut cur = pair.clone();
    if rng.bernoulli(policy.p_crop) {
        cur = random_sized_crop(rng, &cur, policy)?;
        ops.crop = true;
    }
    if rng.bernoulli(policy.p_flip_h) {
        cur = flip_h(&cur);
        ops.flip_h = true;
    }
    if rng.bernoulli(policy.p_flip_v) {
        cur = flip_v(&cur);
        ops.flip_v = true;
    }
    if rng.bernoulli(policy.p_rotate) {
        cur = rotate180(&cur);
        ops.rotate = true;
    }
    if rng.bernoulli(policy.p_warp) {
        if rng.bernoulli(0.5) {
            cur = elastic_transform(rng, &cur, &policy.elastic, policy.image_interpolation)?;
            ops.warp = Some(Warp::Elastic);
        } else {
            cur = grid_distortion(rng, &cur, &policy.grid, policy.image_interpolation)?;
            ops.warp = Some(Warp::Grid);
        }
    }
    Ok((cur, ops))
}

pub fn augment_online(rng: &mut SeededRng, pair: &PairSample, policy: &AugmentPolicy) -> Result<PairSample> {
    augment_online_traced(rng, pair, policy).map(|(p, _)| p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Provenance;

    fn card(w: usize, h: usize, ch: usize) -> PairSample {
        let data = (0..w * h * ch).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        let mask = (0..w * h).map(|i| (i * 7 + i / w).is_multiple_of(3) as u8).collect();
        PairSample::new(
            ImageBuf::new(w, h, ch, data).unwrap(),
            MaskBuf::new(w, h, mask).unwrap(),
            Provenance::Real,
        )
        .unwrap()
    }

    #[test]
    fn reflect101_indices() {
        let got: Vec<usize> = (-4..8).map(|i| reflect101(i, 4)).collect();
        assert_eq!(got, vec![2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
    }

    #[test]
    fn flip_of_two_pixels() {
        let pair = PairSample::new(
            ImageBuf::new(2, 1, 1, vec![0.25, 0.75]).unwrap(),
            MaskBuf::new(2, 1, vec![1, 0]).unwrap(),
            Provenance::Real,
        )
        .unwrap();
        let f = flip_h(&pair);
        assert_eq!(f.image().data(), &[0.75, 0.25]);
        assert_eq!(f.mask().data(), &[0, 1]);
    }

    #[test]
    fn flips_are_involutions_and_compose_to_rotation() {
        let p = card(7, 5, 3);
        assert_eq!(flip_h(&flip_h(&p)), p);
        assert_eq!(flip_v(&flip_v(&p)), p);
        assert_eq!(rotate180(&p), flip_h(&flip_v(&p)));
    }

    #[test]
    fn full_frame_crop_is_identity() {
        let p = card(9, 9, 1);
        assert_eq!(crop_resize(&p, 0, 0, 9, Interp::Bilinear).unwrap(), p);
        assert!(crop_resize(&p, 1, 0, 9, Interp::Bilinear).is_err());
    }

    #[test]
    fn crop_window_must_fit() {
        let policy = AugmentPolicy {
            crop_window: [8, 12],
            ..AugmentPolicy::reference()
        };
        assert!(random_sized_crop(&mut SeededRng::new(0), &card(10, 10, 1), &policy).is_err());
    }

    #[test]
    fn zero_parameter_warps_are_identity() {
        let p = card(16, 12, 1);
        let elastic = ElasticParams {
            alpha: 0.0,
            alpha_affine: 0.0,
            ..ElasticParams::default()
        };
        assert_eq!(
            elastic_transform(&mut SeededRng::new(1), &p, &elastic, Interp::Bilinear).unwrap(),
            p
        );
        let grid = GridParams {
            distort_limit: 0.0,
            ..GridParams::default()
        };
        assert_eq!(
            grid_distortion(&mut SeededRng::new(1), &p, &grid, Interp::Bilinear).unwrap(),
            p
        );
    }

    #[test]
    fn grid_keeps_corners() {
        let p = card(16, 16, 1);
        for seed in 0..20 {
            let out = grid_distortion(&mut SeededRng::new(seed), &p, &GridParams::default(), Interp::Bilinear).unwrap();
            for (x, y) in [(0, 0), (15, 0), (0, 15), (15, 15)] {
                assert_eq!(out.image().get(x, y, 0), p.image().get(x, y, 0));
                assert_eq!(out.mask().get(x, y), p.mask().get(x, y));
            }
        }
    }

    #[test]
    fn closed_gates_are_identity() {
        let p = card(8, 8, 1);
        let (out, ops) = augment_online_traced(&mut SeededRng::new(3), &p, &AugmentPolicy::identity()).unwrap();
        assert_eq!(out, p);
        assert_eq!(ops, AppliedOps::default());
    }

    #[test]
    fn desk_scaling() {
        let p = AugmentPolicy::scaled_to(64);
        assert_eq!(p.crop_window, [50, 64]);
        assert!((p.elastic.alpha_affine - 3.2).abs() < 1e-12);
        assert_eq!(p.elastic.alpha, 10.0);
        assert_eq!(AugmentPolicy::scaled_to(512), AugmentPolicy::reference());
    }

    #[test]
    fn invalid_policy_rejected() {
        let p = AugmentPolicy {
            p_flip_h: 1.5,
            ..AugmentPolicy::reference()
        };
        assert!(p.validate().is_err());
    }
}
