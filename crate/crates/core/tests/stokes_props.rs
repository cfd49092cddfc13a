//! Stokes round trip through the forward model and pixel-level properties.

use std::f64::consts::PI;

use pfadn_core::mosaic::{mosaic_scene, naive_demosaic, PolarizationScene};
use pfadn_core::stokes::{aolp, dolp, wrap_half_turn, wrapped_angle_error};
use pfadn_core::{PlanarImage, StokesPixel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn macro_pixel_constant_scenes_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (mh, mw) = (rng.random_range(1..12), rng.random_range(1..12));
        let cells: Vec<(f64, f64, f64)> = (0..mh * mw)
            .map(|_| (rng.random_range(0.0..2.0), rng.random_range(-PI..PI), rng.random_range(0.0..=1.0)))
            .collect();
        let at = |r: usize, c: usize| cells[(r / 2) * mw + c / 2];
        let scene = PolarizationScene::new(
            PlanarImage::from_fn(2 * mh, 2 * mw, |r, c| at(r, c).0),
            PlanarImage::from_fn(2 * mh, 2 * mw, |r, c| at(r, c).1),
            PlanarImage::from_fn(2 * mh, 2 * mw, |r, c| at(r, c).2),
        )
        .unwrap();
        let s = naive_demosaic(&mosaic_scene(&scene).unwrap());
        for u in 0..mh {
            for v in 0..mw {
                let (s0, phi, d) = cells[u * mw + v];
                let want = StokesPixel::from_polarization(s0, phi, d);
                let got = s.pixel(u, v);
                worst = worst.max((got.s0 - want.s0).abs()).max((got.s1 - want.s1).abs()).max((got.s2 - want.s2).abs());
            }
        }
    }
    assert!(worst <= 1e-12, "{worst:e}");
}

#[test]
fn dolp_scale_invariance_and_angle_wrap_on_many_pixels() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100_000 {
        let s0: f64 = rng.random_range(1e-3..10.0);
        let phi: f64 = rng.random_range(-10.0..10.0);
        let d: f64 = rng.random_range(0.01..=1.0);
        let k: f64 = rng.random_range(1e-3..1e3);
        let p = StokesPixel::from_polarization(s0, phi, d);
        let (a, b) = (dolp(p), dolp(p.scale(k)));
        assert!(!a.degenerate && !b.degenerate);
        assert!((a.value - b.value).abs() <= 1e-12, "{a:?} {b:?}");
        assert!((a.value - d).abs() <= 1e-9);

        let base = aolp(p.s1, p.s2).unwrap();
        assert!((-PI / 2.0..PI / 2.0).contains(&base));
        let n: i32 = rng.random_range(-3..=3);
        let q = StokesPixel::from_polarization(s0, phi + f64::from(n) * PI, d);
        let shifted = aolp(q.s1, q.s2).unwrap();
        assert!(wrapped_angle_error(base, shifted) <= 1e-9);
        assert!(wrapped_angle_error(base, phi) <= 1e-9);
    }
}

proptest! {
    #[test]
    fn wrap_lands_in_half_open_interval(phi in -1e3f64..1e3) {
        let w = wrap_half_turn(phi);
        prop_assert!((-PI / 2.0..PI / 2.0).contains(&w));
        prop_assert!(wrapped_angle_error(w, phi) <= 1e-9);
    }

    #[test]
    fn dolp_bounded(s0 in 1e-6f64..1e3, phi in -PI..PI, d in 0.0f64..=1.0) {
        let v = dolp(StokesPixel::from_polarization(s0, phi, d)).value;
        prop_assert!((0.0..=1.0).contains(&v));
    }
}
