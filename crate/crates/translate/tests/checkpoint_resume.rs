//! Training interrupted by a save/load round trip through checkpoint
//! files must land on exactly the parameters of an uninterrupted run.

use demodata::DemoSet;
use envsim::{ObservationImage, Task};
use nncore::container::{load_adam, save_adam};
use nncore::AdamState;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use translate::{
    load_model, save_model, train_translator, ArchConfig, TrainConfig, TranslationModel,
};

/// 4x4 block-average 32x32 demo frames down to the 8x8 the scaled-down
/// architecture expects.
fn shrink(set: &mut DemoSet) {
    for demo in &mut set.demos {
        for frame in &mut demo.frames {
            let mut pixels = vec![0.0f32; 8 * 8 * 3];
            for y in 0..8 {
                for x in 0..8 {
                    for c in 0..3 {
                        let mut acc = 0.0;
                        for dy in 0..4 {
                            for dx in 0..4 {
                                acc += frame.pixels[((y * 4 + dy) * 32 + x * 4 + dx) * 3 + c];
                            }
                        }
                        pixels[(y * 8 + x) * 3 + c] = acc / 16.0;
                    }
                }
            }
            *frame = ObservationImage::new(8, 8, pixels);
        }
    }
}

#[test]
fn file_round_trip_resume_is_bitwise_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut demos = demodata::generate_demos(Task::Reach, 5, &mut rng).unwrap();
    shrink(&mut demos);

    let make_model = || {
        let mut mrng = ChaCha8Rng::seed_from_u64(91);
        TranslationModel::new(ArchConfig::tiny(), true, 1.0, 1.0, &mut mrng).unwrap()
    };
    let cfg = |epochs| TrainConfig {
        epochs,
        steps_per_epoch: 3,
        batch_size: 2,
        seed: 55,
        weights: make_model().loss_weights(),
    };

    // Uninterrupted reference run.
    let mut straight = make_model();
    let mut adam_straight = AdamState::new(1e-3);
    train_translator(&mut straight, &mut adam_straight, &demos, &cfg(4), |_| {}).unwrap();

    // Interrupted run: two epochs, save to disk, reload, two more.
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.bin");
    let adam_path = dir.path().join("adam.bin");
    {
        let mut first = make_model();
        let mut adam = AdamState::new(1e-3);
        train_translator(&mut first, &mut adam, &demos, &cfg(2), |_| {}).unwrap();
        save_model(&model_path, &first).unwrap();
        save_adam(&adam_path, &adam).unwrap();
    }
    let mut resumed = load_model(&model_path).unwrap();
    let mut adam_resumed = load_adam(&adam_path).unwrap();
    assert_eq!(adam_resumed.step, 6);
    train_translator(&mut resumed, &mut adam_resumed, &demos, &cfg(2), |_| {}).unwrap();

    assert_eq!(adam_straight.step, adam_resumed.step);
    for ((na, pa), (nb, pb)) in straight.params.iter().zip(resumed.params.iter()) {
        assert_eq!(na, nb);
        for (x, y) in pa.value.data().iter().zip(pb.value.data()) {
            assert_eq!(x.to_bits(), y.to_bits(), "bit drift in {} after file resume", na);
        }
    }
}
