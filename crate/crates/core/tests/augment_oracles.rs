use synthdefect::augment::{
    augment_online_traced, crop_resize, elastic_transform, grid_distortion, grid_knots, sample_elastic_field,
    AugmentPolicy, ElasticParams, GridParams, Interp,
};
use synthdefect::{ImageBuf, MaskBuf, PairSample, Provenance, SeededRng};

fn random_pair(w: usize, h: usize, seed: u64) -> PairSample {
    let mut rng = SeededRng::new(seed);
    let img: Vec<f64> = (0..w * h).map(|_| rng.uniform()).collect();
    let mask: Vec<u8> = (0..w * h).map(|_| rng.bernoulli(0.3) as u8).collect();
    PairSample::new(
        ImageBuf::new(w, h, 1, img).unwrap(),
        MaskBuf::new(w, h, mask).unwrap(),
        Provenance::Real,
    )
    .unwrap()
}

/// Mirror index without repeating the edge sample.
fn mirror(i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

fn round_half_away(v: f64) -> i64 {
    v.signum() as i64 * (v.abs() + 0.5).floor() as i64
}

/// Reference resampler: nearest for the mask, bilinear for the image.
fn oracle_remap(pair: &PairSample, map: impl Fn(usize, usize) -> (f64, f64)) -> (Vec<f64>, Vec<u8>) {
    let (w, h) = pair.image().dims();
    let at = |x: i64, y: i64| pair.image().get(mirror(x, w), mirror(y, h), 0);
    let mut img = Vec::new();
    let mut mask = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = map(x, y);
            let (x0, y0) = (sx.floor() as i64, sy.floor() as i64);
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let v = (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x0 + 1, y0))
                + fy * ((1.0 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1));
            img.push(v.clamp(0.0, 1.0));
            let (nx, ny) = (mirror(round_half_away(sx), w), mirror(round_half_away(sy), h));
            mask.push(pair.mask().get(nx, ny) as u8);
        }
    }
    (img, mask)
}

fn assert_matches(out: &PairSample, (img, mask): (Vec<f64>, Vec<u8>)) {
    assert_eq!(out.mask().data(), &mask[..]);
    for (a, b) in out.image().data().iter().zip(&img) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn elastic_matches_reference_resampler() {
    let params = ElasticParams {
        alpha: 6.0,
        sigma: 3.0,
        alpha_affine: 2.0,
        ..ElasticParams::default()
    };
    for seed in 0..6 {
        let pair = random_pair(23, 17, seed);
        let mut rng = SeededRng::new(100 + seed);
        let field = sample_elastic_field(&mut rng.clone(), 23, 17, &params).unwrap();
        let out = elastic_transform(&mut rng, &pair, &params, Interp::Bilinear).unwrap();
        let [a, b, c, d, e, f] = field.affine;
        let want = oracle_remap(&pair, |x, y| {
            let px = x as f64 + field.dx[y * 23 + x];
            let py = y as f64 + field.dy[y * 23 + x];
            (a * px + b * py + c, d * px + e * py + f)
        });
        assert_matches(&out, want);
    }
}

#[test]
fn grid_matches_reference_resampler() {
    let params = GridParams {
        num_steps: 3,
        distort_limit: 0.4,
    };
    for seed in 0..6 {
        let pair = random_pair(19, 26, seed);
        let mut rng = SeededRng::new(200 + seed);
        let mut shadow = rng.clone();
        let kx = grid_knots(&mut shadow, 19, &params);
        let ky = grid_knots(&mut shadow, 26, &params);
        assert_eq!((kx[0], *kx.last().unwrap()), (0.0, 18.0));
        assert!(kx.windows(2).all(|k| k[1] > k[0]));
        let out = grid_distortion(&mut rng, &pair, &params, Interp::Bilinear).unwrap();
        let interp = |knots: &[f64], n: usize, t: usize| {
            let cell = (n - 1) as f64 / 3.0;
            let i = ((t as f64 / cell) as usize).min(2);
            knots[i] + (t as f64 - i as f64 * cell) / cell * (knots[i + 1] - knots[i])
        };
        let want = oracle_remap(&pair, |x, y| (interp(&kx, 19, x), interp(&ky, 26, y)));
        assert_matches(&out, want);
    }
}

/// With nearest image resampling, an image that is the mask itself must stay
/// pixel-identical to the mask through every operation.
#[test]
fn image_and_mask_move_together() {
    let policy = AugmentPolicy {
        image_interpolation: Interp::Nearest,
        ..AugmentPolicy::scaled_to(32)
    };
    let base = random_pair(32, 32, 7);
    let embedded = PairSample::new(base.mask().to_image(), base.mask().clone(), Provenance::Real).unwrap();
    let mut rng = SeededRng::new(8);
    let mut warps = 0;
    for _ in 0..200 {
        let (out, ops) = augment_online_traced(&mut rng, &embedded, &policy).unwrap();
        warps += ops.warp.is_some() as usize;
        let as_mask: Vec<u8> = out.image().data().iter().map(|&v| v as u8).collect();
        assert_eq!(out.mask().data(), &as_mask[..]);
    }
    assert!(warps > 50);
}

#[test]
fn half_crop_doubles_pixels() {
    let pair = random_pair(16, 16, 9);
    let out = crop_resize(&pair, 4, 6, 8, Interp::Nearest).unwrap();
    for y in 0..16 {
        for x in 0..16 {
            assert_eq!(out.mask().get(x, y), pair.mask().get(4 + x / 2, 6 + y / 2));
            assert_eq!(out.image().get(x, y, 0), pair.image().get(4 + x / 2, 6 + y / 2, 0));
        }
    }
    let full = crop_resize(&pair, 0, 0, 16, Interp::Bilinear).unwrap();
    assert_eq!(full, pair);
    assert!(crop_resize(&pair, 10, 0, 8, Interp::Nearest).is_err());
}
