//! On-disk format for precomputed reward targets.
//!
//! Layout: magic "OBR1", u32 version, u32 horizon, u32 feature_dim,
//! u32 image_hw, then the feature block ((horizon + 1) * feature_dim
//! f32s) and the image block ((horizon + 1) * 3 * hw * hw f32s), all
//! little-endian, with nothing after.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::targets::RewardTargets;
use crate::{Result, RewardError};

const MAGIC: &[u8; 4] = b"OBR1";
const VERSION: u32 = 1;
const MAX_HORIZON: u32 = 10_000;
const MAX_DIM: usize = 1 << 20;

fn bad(msg: impl Into<String>) -> RewardError {
    RewardError::Input(format!("targets file: {}", msg.into()))
}

pub fn save_targets(path: &Path, targets: &RewardTargets) -> Result<()> {
    let file = File::create(path).map_err(nncore::NnError::from)?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| RewardError::Nn(e.into());
    w.write_all(MAGIC).map_err(io)?;
    for v in [VERSION, targets.horizon, targets.feature_dim as u32, targets.image_hw as u32] {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    for block in [targets.feat_raw(), targets.img_raw()] {
        for &v in block {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn load_targets(path: &Path) -> Result<RewardTargets> {
    let file = File::open(path).map_err(nncore::NnError::from)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut word = [0u8; 4];
    let mut read_u32 =
        |r: &mut BufReader<File>| -> Result<u32> {
            r.read_exact(&mut word).map_err(|_| bad("truncated header"))?;
            Ok(u32::from_le_bytes(word))
        };
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {}", version)));
    }
    let horizon = read_u32(&mut r)?;
    let feature_dim = read_u32(&mut r)? as usize;
    let image_hw = read_u32(&mut r)? as usize;
    if horizon == 0 || horizon > MAX_HORIZON || feature_dim == 0 || feature_dim > MAX_DIM {
        return Err(bad("unreasonable header dimensions"));
    }
    if image_hw == 0 || image_hw > 4096 {
        return Err(bad("unreasonable image size"));
    }
    let steps = horizon as usize + 1;
    let read_block = |r: &mut BufReader<File>, len: usize, what: &str| -> Result<Vec<f32>> {
        let mut bytes = vec![0u8; len * 4];
        r.read_exact(&mut bytes).map_err(|_| bad(format!("truncated {} block", what)))?;
        let vals: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(bad(format!("non-finite value in {} block", what)));
        }
        Ok(vals)
    };
    let feat = read_block(&mut r, steps * feature_dim, "feature")?;
    let img = read_block(&mut r, steps * 3 * image_hw * image_hw, "image")?;
    let mut probe = [0u8; 1];
    if r.read(&mut probe).map_err(|_| bad("read error"))? != 0 {
        return Err(bad("trailing bytes"));
    }
    RewardTargets::new(horizon, feature_dim, image_hw, feat, img)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_targets() -> RewardTargets {
        let steps = 4usize;
        let f = 3usize;
        let hw = 4usize;
        let feat: Vec<f32> = (0..steps * f).map(|i| i as f32 * 0.25 - 1.0).collect();
        let img: Vec<f32> = (0..steps * 3 * hw * hw).map(|i| (i % 17) as f32 / 16.0).collect();
        RewardTargets::new(3, f, hw, feat, img).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise_exact() {
        let t = sample_targets();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("targets.bin");
        save_targets(&path, &t).unwrap();
        let loaded = load_targets(&path).unwrap();
        assert_eq!(t, loaded);
        // Saving the loaded copy reproduces the file byte for byte.
        let again = dir.path().join("again.bin");
        save_targets(&again, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn rejects_corruption() {
        let t = sample_targets();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("targets.bin");
        save_targets(&path, &t).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let bad_magic = dir.path().join("magic.bin");
        let mut b = bytes.clone();
        b[0] = b'X';
        std::fs::write(&bad_magic, &b).unwrap();
        assert!(load_targets(&bad_magic).is_err());

        let cut = dir.path().join("cut.bin");
        std::fs::write(&cut, &bytes[..bytes.len() - 5]).unwrap();
        assert!(load_targets(&cut).is_err());

        let extra = dir.path().join("extra.bin");
        let mut b = bytes.clone();
        b.push(0);
        std::fs::write(&extra, &b).unwrap();
        assert!(load_targets(&extra).is_err());

        let nan = dir.path().join("nan.bin");
        let mut b = bytes.clone();
        let off = b.len() - 4;
        b[off..].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&nan, &b).unwrap();
        assert!(load_targets(&nan).is_err());
    }
}
