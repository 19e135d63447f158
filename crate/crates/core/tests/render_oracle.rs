mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zp3_core::splat::{render_reference, render_with, RenderOptions};

#[test]
fn tiled_matches_reference_on_random_clouds() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = RenderOptions { tile_size: 8, ..RenderOptions::default() };
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let n = rng.random_range(1..=100);
        let cloud = common::random_cloud(&mut rng, n, (0.02, 0.3));
        let cam = common::camera(rng.random_range(0.0..360.0), rng.random_range(-60.0..60.0), 32);
        let fast = render_with(&cloud, &cam, 32, 32, &opts).unwrap();
        let slow = render_reference(&cloud, &cam, 32, 32, &opts).unwrap();
        for (a, b) in fast.color.data().iter().zip(slow.color.data()) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in fast.alpha.data().iter().zip(slow.alpha.data()) {
            worst = worst.max((a - b).abs());
        }
        assert!(worst <= 1e-6, "case {case}: difference {worst}");
    }
    assert_eq!(worst, 0.0, "same arithmetic order should give identical output");
}

#[test]
fn alpha_stays_in_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let cloud = common::random_cloud(&mut rng, 60, (0.05, 0.5));
        let cam = common::camera(rng.random_range(0.0..360.0), 10.0, 24);
        let out = render_with(&cloud, &cam, 24, 24, &RenderOptions::default()).unwrap();
        assert!(out.alpha.data().iter().all(|a| (0.0..=1.0).contains(a)));
        assert!(out.color.data().iter().all(|c| (0.0..=1.0).contains(c)));
        for (a, d) in out.alpha.data().iter().zip(out.depth.data()) {
            if *a > 0.0 {
                assert!(*d >= 0.0);
            }
        }
    }
}
