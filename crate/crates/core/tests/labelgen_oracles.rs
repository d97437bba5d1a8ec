use std::collections::BTreeSet;

use synthdefect::labelgen::{
    eval_curve, generate_labels, rasterize_curve, rotate_mask, sample_trig_params, LabelGenConfig, TrigBounds,
    TrigParams,
};
use synthdefect::{MaskBuf, SeededRng};

fn pixels(m: &MaskBuf) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for y in 0..m.height() {
        for x in 0..m.width() {
            if m.get(x, y) {
                out.insert((x, y));
            }
        }
    }
    out
}

fn round_half_away(v: f64) -> i64 {
    v.signum() as i64 * (v.abs() + 0.5).floor() as i64
}

#[test]
fn curve_matches_closed_form() {
    let mut rng = SeededRng::new(1);
    let bounds = TrigBounds::default();
    for _ in 0..200 {
        let p = sample_trig_params(&mut rng, &bounds);
        let x = rng.uniform_range(0.0, 1024.0);
        let [a1, a2, a3, a4, a5, a6, a7] = p.a;
        let want = a7 * x.powi(2) + a6 * x + a4 * f64::cos(a5 * x) + a3 * f64::sin(x) + a1 * f64::sin(a2 * x);
        assert!((eval_curve(&p, x) - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}

/// Thin identity line: the raster equals the in-frame pixels reached by
/// densely sampling `y = h/2 - x`, which is two staircase diagonals.
#[test]
fn identity_line_matches_dense_sampling() {
    let cfg = LabelGenConfig::sized(64, 64);
    let p = TrigParams::new([0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let got = pixels(&rasterize_curve(&p, &cfg, 1, 0.0));

    let mut dense = BTreeSet::new();
    for i in 0..64 * 1024 {
        let x = i as f64 / 1024.0;
        let y = 32.0 - eval_curve(&p, x * cfg.units_per_pixel) / cfg.units_per_pixel;
        let (px, py) = (round_half_away(x), round_half_away(y));
        if (0..64).contains(&px) && (0..64).contains(&py) {
            dense.insert((px as usize, py as usize));
        }
    }
    assert_eq!(got, dense);

    // x in [k+0.5, k+1) lands on (k+1, 32-k) except where y = -0.5 rounds out of frame.
    let closed: BTreeSet<(usize, usize)> = (0..=32usize)
        .map(|k| (k, 32 - k))
        .chain((0..=31usize).map(|k| (k + 1, 32 - k)))
        .collect();
    assert_eq!(got, closed);
}

#[test]
fn disjoint_curves_add_up() {
    let cfg = LabelGenConfig::sized(64, 64);
    // Constant curves through the cosine term: f(x) = a4.
    let upper = TrigParams::new([0.0, 0.0, 0.0, 160.0, 0.0, 0.0, 0.0]);
    let lower = TrigParams::new([0.0, 0.0, 0.0, -160.0, 0.0, 0.0, 0.0]);
    for (thickness, rows) in [(1, 1), (3, 3)] {
        let a = rasterize_curve(&upper, &cfg, thickness, 0.0);
        let b = rasterize_curve(&lower, &cfg, thickness, 0.0);
        assert_eq!(a.foreground(), 64 * rows);
        assert!(a.get(10, 22) && b.get(10, 42));
        let mut u = a.clone();
        u.union_with(&b);
        assert_eq!(u.foreground(), a.foreground() + b.foreground());
    }
}

#[test]
fn half_turn_is_point_reflection() {
    let labels = generate_labels(&SeededRng::new(2), &LabelGenConfig::sized(33, 20), 20).unwrap();
    for l in labels {
        let (w, h) = l.mask.dims();
        let r = rotate_mask(&l.mask, 180.0);
        for y in 0..h {
            for x in 0..w {
                assert_eq!(r.get(x, y), l.mask.get(w - 1 - x, h - 1 - y));
            }
        }
    }
}

#[test]
fn labels_are_binary_nonempty_and_reproducible() {
    let cfg = LabelGenConfig::default();
    let a = generate_labels(&SeededRng::new(3), &cfg, 50).unwrap();
    let b = generate_labels(&SeededRng::new(3), &cfg, 50).unwrap();
    assert_eq!(a, b);
    for l in &a {
        assert!(l.mask.is_binary() && l.mask.foreground() > 0);
        assert!((1..=4).contains(&l.curves.len()));
        for c in &l.curves {
            assert!(cfg.bounds.contains(&c.params));
            assert!((1..=3).contains(&c.thickness));
            assert!((0.0..180.0).contains(&c.angle_degrees));
        }
    }
}
