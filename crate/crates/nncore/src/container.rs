//! Binary checkpoint container.
//!
//! Layout: 4-byte magic "OBT1", u32 version, then a sequence of records to
//! EOF. Each record is name length (u32), UTF-8 name, rank (u32), dims
//! (u32 each), then the row-major f32 payload, everything little-endian.
//! Writes iterate name-ordered collections and carry no timestamps, so
//! saving the same state twice produces identical bytes.
//!
//! Optimizer state lives in a sibling file with the same layout: moment
//! records under "m." / "v." prefixes plus "__hyper" and "__step".

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::params::{AdamState, ParamSet};
use crate::tensor::Tensor;
use crate::{NnError, Result};

pub const MAGIC: &[u8; 4] = b"OBT1";
pub const VERSION: u32 = 1;

const MAX_NAME: usize = 4096;
const MAX_RANK: u32 = 8;

pub fn write_records<W: Write>(w: &mut W, records: &[(&str, &Tensor)]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for (name, t) in records {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> NnError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        NnError::BadCheckpoint("truncated record".into())
    } else {
        NnError::Io(e)
    }
}

pub fn read_records<R: Read>(r: &mut R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(NnError::BadCheckpoint(format!("bad magic {:?}", magic)));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(NnError::BadCheckpoint(format!("unsupported version {}", version)));
    }
    let mut out = Vec::new();
    loop {
        let mut b = [0u8; 4];
        match r.read_exact(&mut b) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let name_len = u32::from_le_bytes(b) as usize;
        if name_len == 0 || name_len > MAX_NAME {
            return Err(NnError::BadCheckpoint(format!("bad name length {}", name_len)));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name)
            .map_err(|_| NnError::BadCheckpoint("record name is not UTF-8".into()))?;
        let rank = read_u32(r)?;
        if rank == 0 || rank > MAX_RANK {
            return Err(NnError::BadCheckpoint(format!("bad rank {} for {}", rank, name)));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut numel = 1usize;
        for _ in 0..rank {
            let d = read_u32(r)? as usize;
            numel = numel
                .checked_mul(d)
                .filter(|&n| n <= (1 << 30))
                .ok_or_else(|| NnError::BadCheckpoint(format!("oversized record {}", name)))?;
            shape.push(d);
        }
        let mut payload = vec![0u8; numel * 4];
        r.read_exact(&mut payload).map_err(truncated)?;
        let data: Vec<f32> =
            payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let t = Tensor::new(shape, data)
            .map_err(|e| NnError::BadCheckpoint(format!("record {}: {}", name, e)))?;
        out.push((name, t));
    }
    Ok(out)
}

pub fn save_params(path: &Path, params: &ParamSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let records: Vec<(&str, &Tensor)> = params.iter().map(|(n, p)| (n, &p.value)).collect();
    write_records(&mut w, &records)?;
    w.flush()?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ParamSet> {
    let mut r = BufReader::new(File::open(path)?);
    let mut params = ParamSet::new();
    for (name, t) in read_records(&mut r)? {
        params.insert(&name, t);
    }
    Ok(params)
}

pub fn save_adam(path: &Path, adam: &AdamState) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let hyper = Tensor::new(
        vec![4],
        vec![adam.learning_rate, adam.beta1, adam.beta2, adam.epsilon],
    )?;
    let step = Tensor::scalar(adam.step as f32);
    let mut records: Vec<(String, Tensor)> = vec![("__hyper".into(), hyper), ("__step".into(), step)];
    let names: Vec<String> = adam.moment_names().map(|s| s.to_string()).collect();
    for name in names {
        let (m, v) = adam.moments(&name).expect("name from this state");
        records.push((format!("m.{}", name), Tensor::new(vec![m.len()], m.clone())?));
        records.push((format!("v.{}", name), Tensor::new(vec![v.len()], v.clone())?));
    }
    let views: Vec<(&str, &Tensor)> = records.iter().map(|(n, t)| (n.as_str(), t)).collect();
    write_records(&mut w, &views)?;
    w.flush()?;
    Ok(())
}

pub fn load_adam(path: &Path) -> Result<AdamState> {
    let mut r = BufReader::new(File::open(path)?);
    let records = read_records(&mut r)?;
    let mut adam = AdamState::new(0.0);
    let mut pending: std::collections::BTreeMap<String, (Option<Vec<f32>>, Option<Vec<f32>>)> =
        Default::default();
    for (name, t) in records {
        if name == "__hyper" {
            let d = t.data();
            if d.len() != 4 {
                return Err(NnError::BadCheckpoint("malformed __hyper record".into()));
            }
            adam.learning_rate = d[0];
            adam.beta1 = d[1];
            adam.beta2 = d[2];
            adam.epsilon = d[3];
        } else if name == "__step" {
            adam.step = t.data()[0] as u64;
        } else if let Some(rest) = name.strip_prefix("m.") {
            pending.entry(rest.to_string()).or_default().0 = Some(t.data().to_vec());
        } else if let Some(rest) = name.strip_prefix("v.") {
            pending.entry(rest.to_string()).or_default().1 = Some(t.data().to_vec());
        } else {
            return Err(NnError::BadCheckpoint(format!("unexpected record {}", name)));
        }
    }
    for (name, (m, v)) in pending {
        match (m, v) {
            (Some(m), Some(v)) if m.len() == v.len() => adam.set_moments(&name, m, v),
            _ => {
                return Err(NnError::BadCheckpoint(format!("incomplete moments for {}", name)));
            }
        }
    }
    Ok(adam)
}
