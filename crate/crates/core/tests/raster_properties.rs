mod common;

use common::*;
use dynsplat::math::Sym2;
use dynsplat::model::GaussianCloud;
use dynsplat::raster::{blend_trace, project, render, render_oracle, ProjectedGaussian, RasterConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn splat(x: f64, y: f64, depth: f64, color: f64, opacity: f64, id: usize) -> ProjectedGaussian<f64> {
    ProjectedGaussian::new([x, y], Sym2::new(4.0, 0.0, 4.0), depth, [color; 3], opacity, id).unwrap()
}

#[test]
fn single_opaque_contributor() {
    let cam = camera(9, 9);
    let cfg = RasterConfig { alpha_max: 1.0, ..Default::default() };
    let g = ProjectedGaussian::new([4.0, 4.0], Sym2::new(2.0, 0.0, 2.0), 3.0, [0.2, 0.4, 0.6], 1.0, 0).unwrap();
    let out = render(vec![g], &cam, &cfg);
    let c = 4 * 9 + 4;
    assert_eq!(&out.color.data[c * 3..c * 3 + 3], &[0.2, 0.4, 0.6]);
    assert_eq!(out.depth.data[c], 3.0);
}

#[test]
fn two_half_transparent_layers() {
    let cam = camera(9, 9);
    let cfg = RasterConfig::default();
    // Listed back first: sorting is internal.
    let back = splat(4.0, 4.0, 2.0, 0.0, 0.5, 1);
    let front = splat(4.0, 4.0, 1.0, 1.0, 0.5, 0);
    for out in [render(vec![back.clone(), front.clone()], &cam, &cfg), render_oracle(&[back, front], &cam, &cfg)] {
        let c = 4 * 9 + 4;
        assert_eq!(&out.color.data[c * 3..c * 3 + 3], &[0.5; 3]);
        assert_eq!(out.depth.data[c], 1.0);
        assert_eq!(out.alpha.data[c], 0.75);
    }
}

#[test]
fn empty_scene_is_background() {
    let cam = camera(10, 7);
    let cfg = RasterConfig { background: [0.1, 0.2, 0.3], ..Default::default() };
    for out in [render(Vec::new(), &cam, &cfg), render_oracle(&[], &cam, &cfg)] {
        assert!(out.color.data.chunks(3).all(|p| p == [0.1, 0.2, 0.3]));
        assert!(out.alpha.data.iter().all(|a| *a == 0.0));
        assert!(out.depth.data.iter().all(|d| *d == 0.0));
    }
}

fn scene(seed: u64, max_n: usize) -> (GaussianCloud<f64>, usize, usize) {
    let mut r = rng(seed);
    let (w, h) = (r.gen_range(8..=64), r.gen_range(8..=64));
    let n = r.gen_range(1..=max_n);
    let mut cloud = random_cloud(&mut r, n, 2);
    for i in 0..n {
        // Some wide, some needle-thin, some nearly opaque.
        cloud.log_scales[i][0] += r.gen_range(-1.5..1.0);
        cloud.opacity_logits[i] += r.gen_range(-1.0..4.0);
    }
    (cloud, w, h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tiled_render_matches_oracle(seed in 0u64..1_000_000, tile in prop::sample::select(vec![1usize, 5, 8, 16])) {
        let (cloud, w, h) = scene(seed, 50);
        let cam = camera(w, h);
        let cfg = RasterConfig { tile_size: tile, stop_threshold: 0.0, ..Default::default() };
        let p = project(&cloud, &cam, &cfg);
        let tiled = render(p.clone(), &cam, &cfg);
        let oracle = render_oracle(&p, &cam, &cfg);
        for (a, b) in tiled.color.data.iter().zip(&oracle.color.data).chain(tiled.depth.data.iter().zip(&oracle.depth.data)) {
            prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn blending_weights_are_a_partition(seed in 0u64..1_000_000) {
        let (cloud, w, h) = scene(seed, 30);
        let cam = camera(w, h);
        let cfg = RasterConfig::default();
        let p = project(&cloud, &cam, &cfg);
        let mut r = rng(seed);
        for _ in 0..20 {
            let (x, y) = (r.gen_range(0..w), r.gen_range(0..h));
            let (steps, final_t) = blend_trace(&p, x, y, &cfg);
            let mut prev = 1.0;
            let mut sum = 0.0;
            for s in &steps {
                prop_assert!(s.weight >= 0.0);
                prop_assert!(s.transmittance <= prev);
                prev = s.transmittance;
                sum += s.weight;
            }
            prop_assert!(final_t <= prev && final_t >= 0.0);
            prop_assert!(sum <= 1.0 + 1e-12);
            prop_assert!((sum + final_t - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn input_order_does_not_matter(seed in 0u64..1_000_000) {
        let (cloud, w, h) = scene(seed, 30);
        let cam = camera(w, h);
        let cfg = RasterConfig::default();
        let mut p = project(&cloud, &cam, &cfg);
        let a = render(p.clone(), &cam, &cfg);
        p.shuffle(&mut rng(seed + 1));
        let b = render(p, &cam, &cfg);
        prop_assert_eq!(a, b);
    }
}
