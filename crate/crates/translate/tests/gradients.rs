//! Finite-difference check of the full training loss with respect to
//! every parameter tensor, on the scaled-down architecture with untied
//! encoders so both encoder paths are exercised.
//!
//! Exact per-op adjoints are pinned tightly in the autodiff crate; this
//! test guards the graph wiring (skip routing, loss weighting, shared
//! encoders), so its tolerances only need to sit above the noise of
//! differentiating an f32 forward pass. Bias perturbations shift whole
//! feature maps coherently and see ~25x more of that noise than
//! single-weight perturbations, hence the two tiers; both sit several
//! times above the worst observed margin, and inputs are fixed-seed so
//! the margins are stable.

use envsim::ObservationImage;
use nncore::gradcheck::{close, sample_indices};
use nncore::Mode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use translate::{batch_loss_tape, ArchConfig, LossWeights, TrainSample, TranslationModel};

const H: f32 = 2e-3;
const TOL_WEIGHT: f64 = 5e-3;
const TOL_BIAS: f64 = 8e-2;
const PROBES_PER_TENSOR: usize = 5;

fn random_image(rng: &mut ChaCha8Rng) -> ObservationImage {
    ObservationImage::new(8, 8, (0..192).map(|_| rng.random_range(0.0..1.0)).collect())
}

fn total_loss(model: &TranslationModel, samples: &[TrainSample], weights: &LossWeights) -> f64 {
    // Eval mode: dropout is the identity, so the objective is a
    // deterministic function of the parameters and the rng is unused.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (_, _, report) = batch_loss_tape(model, samples, weights, Mode::Eval, &mut rng).unwrap();
    report.total as f64
}

#[test]
fn full_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut model =
        TranslationModel::new(ArchConfig::tiny(), false, 0.7, 0.4, &mut rng).unwrap();
    let imgs: Vec<ObservationImage> = (0..6).map(|_| random_image(&mut rng)).collect();
    let samples = [
        TrainSample { source: &imgs[0], context_start: &imgs[1], target: &imgs[2] },
        TrainSample { source: &imgs[3], context_start: &imgs[4], target: &imgs[5] },
    ];
    let weights = model.loss_weights();

    let (mut tape, total, _) = {
        let mut loss_rng = ChaCha8Rng::seed_from_u64(0);
        batch_loss_tape(&model, &samples, &weights, Mode::Eval, &mut loss_rng).unwrap()
    };
    tape.backward(total).unwrap();
    model.params.zero_grads();
    tape.accumulate_param_grads(&mut model.params).unwrap();

    let probes: Vec<(String, Vec<(usize, f64)>)> = model
        .params
        .iter()
        .map(|(name, p)| {
            let picks = sample_indices(p.grad.len(), PROBES_PER_TENSOR)
                .into_iter()
                .map(|i| (i, p.grad[i] as f64))
                .collect();
            (name.to_string(), picks)
        })
        .collect();

    let mut checked = 0;
    for (name, picks) in probes {
        let tol = if name.ends_with(".b") { TOL_BIAS } else { TOL_WEIGHT };
        for (idx, analytic) in picks {
            let orig = model.params.value(&name).unwrap().data()[idx];
            let (xp, xm) = (orig + H, orig - H);
            model.params.get_mut(&name).unwrap().value.data_mut()[idx] = xp;
            let fp = total_loss(&model, &samples, &weights);
            model.params.get_mut(&name).unwrap().value.data_mut()[idx] = xm;
            let fm = total_loss(&model, &samples, &weights);
            model.params.get_mut(&name).unwrap().value.data_mut()[idx] = orig;
            let fd = (fp - fm) / (xp as f64 - xm as f64);
            assert!(
                close(analytic, fd, tol),
                "{}[{}]: analytic {} vs finite difference {}",
                name,
                idx,
                analytic,
                fd
            );
            checked += 1;
        }
    }
    // Untied tiny model: 38 tensors, biases included.
    assert!(checked >= 150, "only {} probes ran", checked);
}
