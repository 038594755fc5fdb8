use dynsplat::deform::HexPlaneConfig;
use dynsplat::init::{holistic_init, InitConfig};
use dynsplat::scene::{generate_synthetic, is_test_frame, split_indices, SyntheticSpec};
use dynsplat::train::{TrainConfig, Trainer};
use dynsplat::FrameRecord;
use proptest::prelude::*;

fn setup(config: TrainConfig) -> (Trainer<f32>, Vec<FrameRecord<f32>>, Vec<usize>) {
    let scene = generate_synthetic(&SyntheticSpec { gaussians: 60, width: 24, height: 20, frames: 8, ..Default::default() }).unwrap();
    let frames: Vec<FrameRecord<f32>> = scene.frames.iter().map(|f| f.cast()).collect();
    let (train, _) = split_indices(frames.len());
    let cloud = holistic_init(&frames, &InitConfig { keep_fraction: 0.1, ..Default::default() }).unwrap();
    (Trainer::new(config, cloud).unwrap(), frames, train)
}

fn small_config() -> TrainConfig {
    let mut c = TrainConfig { warmup_iters: 10, total_iters: 25, ..Default::default() };
    c.deform.hexplane = HexPlaneConfig { levels: 1, spatial_res: 4, time_res: 4, channels: 4, ..Default::default() };
    c.deform.decoder_hidden = 8;
    c
}

fn run(t: &mut Trainer<f32>, frames: &[FrameRecord<f32>], train: &[usize], until: usize) {
    while t.iteration < until {
        let f = t.next_frame(train);
        t.train_step(&frames[f]).unwrap();
    }
}

#[test]
fn warmup_leaves_the_deformation_field_untouched() {
    let (mut t, frames, train) = setup(small_config());
    let field = t.field.clone();
    let cloud = t.cloud.clone();
    run(&mut t, &frames, &train, 10);
    assert_eq!(t.field, field);
    assert_ne!(t.cloud, cloud);
    assert!(t.groups[5..].iter().all(|g| g.step == 0 && g.m.iter().all(|v| *v == 0.0)));
    run(&mut t, &frames, &train, 11);
    assert_ne!(t.field, field);
}

#[test]
fn zero_multipliers_freeze_their_groups() {
    let mut config = small_config();
    config.lr.sh = 0.0;
    config.lr.opacity = 0.0;
    config.lr.encoder = 0.0;
    let (mut t, frames, train) = setup(config);
    let (sh, opacity, encoder) = (t.cloud.sh_coeffs.clone(), t.cloud.opacity_logits.clone(), t.field.encoder.clone());
    let decoders = t.field.decoders.clone();
    run(&mut t, &frames, &train, 25);
    assert_eq!(t.cloud.sh_coeffs, sh);
    assert_eq!(t.cloud.opacity_logits, opacity);
    assert_eq!(t.field.encoder, encoder);
    assert_ne!(t.field.decoders, decoders);
}

proptest! {
    #[test]
    fn split_is_a_pure_function_of_the_index(count in 1usize..200, extra in 0usize..50) {
        let (train, test) = split_indices(count);
        prop_assert_eq!(train.len() + test.len(), count);
        prop_assert!(test.iter().all(|&i| is_test_frame(i) && i % 8 == 4));
        prop_assert!(train.iter().all(|&i| !is_test_frame(i)));
        // Appending frames never moves an existing frame between splits.
        let (longer_train, longer_test) = split_indices(count + extra);
        prop_assert_eq!(&longer_train[..train.len()], &train[..]);
        prop_assert_eq!(&longer_test[..test.len()], &test[..]);
    }
}
