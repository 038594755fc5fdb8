mod common;

use common::*;
use dynsplat::deform::EncoderKind;

#[test]
fn deformation_gradients_match_finite_differences() {
    let mut total = GradCheck::new("");
    for seed in 0..4 {
        total.merge(deform_check(seed, EncoderKind::Hexplane, seed % 2 == 1));
        total.merge(deform_check(seed + 10, EncoderKind::Mlp, seed % 2 == 0));
    }
    assert!(total.checked > 500, "only {} entries checked", total.checked);
    assert!(total.worst < 1e-4, "worst relative error {:e} at {}", total.worst, total.label);
}
