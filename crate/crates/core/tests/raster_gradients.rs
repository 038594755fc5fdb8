mod common;

use common::*;
use dynsplat::raster::Accumulation;

#[test]
fn rasterizer_gradients_match_finite_differences() {
    let mut total = GradCheck::new("");
    for seed in 0..6 {
        total.merge(raster_check(seed, 24, 20, 7, Accumulation::Deterministic));
    }
    total.merge(raster_check(99, 24, 20, 7, Accumulation::Fast));
    assert!(total.checked > 100);
    assert!(total.worst < 1e-4, "worst relative error {:e} at {}", total.worst, total.label);
}
