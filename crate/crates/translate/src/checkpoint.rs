//! Model checkpoints: every parameter tensor plus a small metadata record
//! in one tensor-container file. The image size is not stored; it is
//! recovered from the decoder input projection's flat width.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nncore::container::{read_records, write_records};
use nncore::{NnError, ParamSet, Tensor};

use crate::arch::ArchConfig;
use crate::model::TranslationModel;
use crate::{Result, TranslateError};

const META_NAME: &str = "__model_meta";

pub fn save_model(path: &Path, model: &TranslationModel) -> Result<()> {
    let meta = Tensor::new(
        vec![4],
        vec![
            if model.tie_encoders { 1.0 } else { 0.0 },
            model.arch.feature_dim as f32,
            model.lambda1,
            model.lambda2,
        ],
    )?;
    let mut records: Vec<(&str, &Tensor)> = vec![(META_NAME, &meta)];
    for (name, p) in model.params.iter() {
        records.push((name, &p.value));
    }
    let mut w = BufWriter::new(File::create(path).map_err(NnError::from)?);
    write_records(&mut w, &records)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TranslationModel> {
    let mut r = BufReader::new(File::open(path).map_err(NnError::from)?);
    let records = read_records(&mut r)?;
    let mut meta: Option<Vec<f32>> = None;
    let mut params = ParamSet::new();
    for (name, tensor) in records {
        if name == META_NAME {
            if tensor.shape() != [4] {
                return Err(bad("metadata record has the wrong shape"));
            }
            meta = Some(tensor.data().to_vec());
        } else {
            params.insert(&name, tensor);
        }
    }
    let meta = meta.ok_or_else(|| bad("missing metadata record"))?;
    let tie = match meta[0] {
        v if v == 0.0 => false,
        v if v == 1.0 => true,
        _ => return Err(bad("tie flag is neither 0 nor 1")),
    };
    let feature_dim = meta[1] as usize;
    if feature_dim == 0 || meta[1].fract() != 0.0 {
        return Err(bad("feature dimension is not a positive integer"));
    }
    let (lambda1, lambda2) = (meta[2], meta[3]);
    if !lambda1.is_finite() || !lambda2.is_finite() {
        return Err(bad("loss weights are not finite"));
    }

    let flat = params
        .value("dec.f.w")
        .map_err(|_| bad("missing decoder projection dec.f.w"))?
        .shape()[1];
    // flat = (hw/4)^2 * last encoder channel count.
    let base = ArchConfig::desk();
    let per = base.enc_filters[3];
    if flat % per != 0 {
        return Err(bad("decoder projection width is inconsistent"));
    }
    let side = ((flat / per) as f64).sqrt().round() as usize;
    let image_hw = side * 4;
    let arch = ArchConfig { image_hw, ..base }.with_feature_dim(feature_dim);
    if arch.flat_dim() != flat {
        return Err(bad("decoder projection width does not match any image size"));
    }
    TranslationModel::from_params(arch, tie, lambda1, lambda2, params)
}

fn bad(msg: &str) -> TranslateError {
    TranslateError::Nn(NnError::BadCheckpoint(msg.into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{eval_decode, eval_encode, eval_translate, Encoder};
    use crate::images_to_batch;
    use envsim::ObservationImage;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_model(tie: bool) -> TranslationModel {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        TranslationModel::new(ArchConfig::tiny(), tie, 1.0, 0.5, &mut rng).unwrap()
    }

    #[test]
    fn round_trip_preserves_everything() {
        for tie in [true, false] {
            let model = tiny_model(tie);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("model.bin");
            save_model(&path, &model).unwrap();
            let loaded = load_model(&path).unwrap();
            assert_eq!(loaded.tie_encoders, tie);
            assert_eq!(loaded.arch, model.arch);
            assert_eq!(loaded.lambda1, 1.0);
            assert_eq!(loaded.lambda2, 0.5);
            assert_eq!(loaded.params.len(), model.params.len());
            for ((na, pa), (nb, pb)) in model.params.iter().zip(loaded.params.iter()) {
                assert_eq!(na, nb);
                for (x, y) in pa.value.data().iter().zip(pb.value.data()) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn loaded_model_evaluates_bitwise_identically() {
        let model = tiny_model(true);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&path, &model).unwrap();
        let loaded = load_model(&path).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img =
            ObservationImage::new(8, 8, (0..192).map(|_| rng.random_range(0.0..1.0)).collect());
        let batch = images_to_batch(&[&img]);
        let run = |m: &TranslationModel| {
            let src = eval_encode(m, Encoder::Source, &batch).unwrap();
            let ctx = eval_encode(m, Encoder::Context, &batch).unwrap();
            let z3 = eval_translate(m, &src.features, &ctx.features).unwrap();
            eval_decode(m, &z3, &ctx.skips).unwrap()
        };
        let (a, b) = (run(&model), run(&loaded));
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn rejects_missing_meta_and_bad_shapes() {
        let model = tiny_model(true);
        let dir = tempfile::tempdir().unwrap();

        // Params-only file: no metadata record.
        let bare = dir.path().join("bare.bin");
        nncore::container::save_params(&bare, &model.params).unwrap();
        assert!(load_model(&bare).is_err());

        // Truncated file.
        let path = dir.path().join("model.bin");
        save_model(&path, &model).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = dir.path().join("cut.bin");
        std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_model(&cut).is_err());

        // A parameter tensor with a tampered shape.
        let mut missing = model.clone();
        // Removing a parameter is easiest to simulate by saving a model
        // whose param set lacks one tensor.
        let mut kept = ParamSet::new();
        for (name, p) in model.params.iter() {
            if name != "trn.f2.b" {
                kept.insert(name, p.value.clone());
            }
        }
        missing.params = kept;
        let path2 = dir.path().join("missing.bin");
        save_model(&path2, &missing).unwrap();
        assert!(load_model(&path2).is_err());
    }
}
