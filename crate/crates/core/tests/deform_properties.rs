mod common;

use common::rng;
use dynsplat::deform::{HexPlaneConfig, HexPlaneField, PLANE_AXES};
use dynsplat::init::Aabb;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// With every other plane factor fixed to 1, a plane whose node values are
    /// an affine function of its two coordinates is interpolated exactly.
    #[test]
    fn bilinear_is_exact_on_affine_planes(
        seed in any::<u64>(),
        res in 2usize..9,
        time_res in 2usize..6,
        pair in 0usize..3,
    ) {
        let mut r = rng(seed);
        let lo = [r.gen_range(-3.0..0.0), r.gen_range(-3.0..0.0), r.gen_range(-3.0..0.0)];
        let bounds = Aabb::new(lo, [lo[0] + r.gen_range(0.5..4.0), lo[1] + r.gen_range(0.5..4.0), lo[2] + r.gen_range(0.5..4.0)]);
        let cfg = HexPlaneConfig { levels: 1, spatial_res: res, time_res, channels: 1, ..Default::default() };
        let mut field: HexPlaneField<f64> = HexPlaneField::new(&cfg, bounds, &mut r).unwrap();
        let (spatial, temporal) = [(0, 5), (1, 4), (2, 3)][pair];
        let level = &mut field.levels[0];
        for p in &mut level.planes {
            p.fill(0.0);
        }
        level.mix = [vec![0.0], vec![0.0], vec![0.0]];
        level.mix[pair][0] = 1.0;
        level.planes[temporal].fill(1.0);
        let (a, b) = PLANE_AXES[spatial];
        let coef = [r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)];
        for ib in 0..res {
            for ia in 0..res {
                let (u, v) = (ia as f64 / (res - 1) as f64, ib as f64 / (res - 1) as f64);
                level.planes[spatial][ib * res + ia] = coef[0] + coef[1] * u + coef[2] * v;
            }
        }
        for _ in 0..20 {
            let p = [0, 1, 2].map(|k| r.gen_range(bounds.min[k]..bounds.max[k]));
            let norm = |k: usize| (p[k] - bounds.min[k]) / (bounds.max[k] - bounds.min[k]);
            let expected = coef[0] + coef[1] * norm(a) + coef[2] * norm(b);
            let got = field.query_voxel(&p, r.gen_range(0.0..1.0))[0];
            prop_assert!((got - expected).abs() <= 1e-6, "{} vs {}", got, expected);
        }
    }

    #[test]
    fn doubling_spatial_resolution_quadruples_spatial_parameters(
        levels in 1usize..4,
        res in 2usize..20,
        time_res in 2usize..20,
        channels in 1usize..9,
    ) {
        let cfg = HexPlaneConfig { levels, spatial_res: res, time_res, channels, ..Default::default() };
        let doubled = HexPlaneConfig { spatial_res: 2 * res, ..cfg.clone() };
        prop_assert_eq!(doubled.spatial_param_count(), 4 * cfg.spatial_param_count());
        let field: HexPlaneField<f32> = HexPlaneField::new(&cfg, Aabb::new([0.0; 3], [1.0; 3]), &mut rng(0)).unwrap();
        prop_assert_eq!(field.param_count(), cfg.param_count());
    }
}
