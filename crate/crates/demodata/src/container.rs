//! Binary demo container.
//!
//! Layout, all little-endian: magic "OBD1", u32 version, u8 task, u32
//! horizon, u32 height, u32 width, u32 count, then per demo. Each demo is
//! a fixed 21-float context block (goal, start, object, four colors,
//! camera offset, camera rotation), u8 split flag, u8 distractor count
//! with 6 floats per distractor, and (horizon + 1) * h * w * 3 f32 frame
//! payload in HWC order. Float bits pass through untouched, so save after
//! load reproduces the file byte for byte.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use envsim::{ContextParams, Distractor, ObservationImage, Task};

use crate::{DemoError, DemoSet, Demonstration, Split};

const MAGIC: &[u8; 4] = b"OBD1";
const VERSION: u32 = 1;

fn write_f32s<W: Write>(w: &mut W, vals: &[f32]) -> std::io::Result<()> {
    let mut bytes = Vec::with_capacity(vals.len() * 4);
    for v in vals {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)
}

pub fn save_demoset(path: &Path, set: &DemoSet) -> Result<(), DemoError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[match set.task {
        Task::Reach => 0u8,
        Task::Push => 1,
    }])?;
    w.write_all(&set.horizon.to_le_bytes())?;
    let (h, l) = match set.demos.first() {
        Some(d) => (d.frames[0].height as u32, d.frames[0].width as u32),
        None => (envsim::IMAGE_SIZE as u32, envsim::IMAGE_SIZE as u32),
    };
    w.write_all(&h.to_le_bytes())?;
    w.write_all(&l.to_le_bytes())?;
    w.write_all(&(set.demos.len() as u32).to_le_bytes())?;
    for (demo, split) in set.demos.iter().zip(&set.splits) {
        let c = &demo.context;
        let block = [
            c.goal_position[0], c.goal_position[1],
            c.start_position[0], c.start_position[1],
            c.object_position[0], c.object_position[1],
            c.agent_color[0], c.agent_color[1], c.agent_color[2],
            c.object_color[0], c.object_color[1], c.object_color[2],
            c.background_color[0], c.background_color[1], c.background_color[2],
            c.goal_color[0], c.goal_color[1], c.goal_color[2],
            c.camera_offset[0], c.camera_offset[1],
            c.camera_rotation,
        ];
        write_f32s(&mut w, &block)?;
        w.write_all(&[match split {
            Split::Train => 0u8,
            Split::Holdout => 1,
        }])?;
        w.write_all(&[c.distractors.len() as u8])?;
        for d in &c.distractors {
            write_f32s(&mut w, &[d.position[0], d.position[1], d.radius, d.color[0], d.color[1], d.color[2]])?;
        }
        for frame in &demo.frames {
            write_f32s(&mut w, &frame.pixels)?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>, DemoError> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                DemoError::Format("truncated file".into())
            } else {
                DemoError::Io(e)
            }
        })?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8, DemoError> {
        Ok(self.bytes(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, DemoError> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, DemoError> {
        let b = self.bytes(n * 4)?;
        Ok(b.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }
}

pub fn load_demoset(path: &Path) -> Result<DemoSet, DemoError> {
    let mut r = Reader { inner: BufReader::new(File::open(path)?) };
    let magic = r.bytes(4)?;
    if magic != MAGIC {
        return Err(DemoError::Format(format!("bad magic {:?}", magic)));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(DemoError::Format(format!("unsupported version {}", version)));
    }
    let task = match r.u8()? {
        0 => Task::Reach,
        1 => Task::Push,
        t => return Err(DemoError::Format(format!("unknown task tag {}", t))),
    };
    let horizon = r.u32()?;
    let height = r.u32()? as usize;
    let width = r.u32()? as usize;
    if horizon > 10_000 || height == 0 || height > 4096 || width == 0 || width > 4096 {
        return Err(DemoError::Format("implausible header dimensions".into()));
    }
    let count = r.u32()? as usize;
    let mut demos = Vec::with_capacity(count);
    let mut splits = Vec::with_capacity(count);
    for index in 0..count {
        let b = r.f32s(21)?;
        let split = match r.u8()? {
            0 => Split::Train,
            1 => Split::Holdout,
            s => return Err(DemoError::Format(format!("unknown split tag {}", s))),
        };
        let n_distractors = r.u8()? as usize;
        if n_distractors > 16 {
            return Err(DemoError::Format(format!("demo {}: implausible distractor count", index)));
        }
        let mut distractors = Vec::with_capacity(n_distractors);
        for _ in 0..n_distractors {
            let d = r.f32s(6)?;
            distractors.push(Distractor {
                position: [d[0], d[1]],
                radius: d[2],
                color: [d[3], d[4], d[5]],
            });
        }
        let context = ContextParams {
            task,
            goal_position: [b[0], b[1]],
            start_position: [b[2], b[3]],
            object_position: [b[4], b[5]],
            agent_color: [b[6], b[7], b[8]],
            object_color: [b[9], b[10], b[11]],
            background_color: [b[12], b[13], b[14]],
            goal_color: [b[15], b[16], b[17]],
            distractors,
            camera_offset: [b[18], b[19]],
            camera_rotation: b[20],
        };
        if context.camera_rotation.abs() > envsim::CAMERA_ROTATION_MAX + 1e-6
            || context.camera_offset[0].abs() > envsim::CAMERA_OFFSET_MAX + 1e-6
            || context.camera_offset[1].abs() > envsim::CAMERA_OFFSET_MAX + 1e-6
        {
            return Err(DemoError::Format(format!("demo {}: camera outside declared ranges", index)));
        }
        let mut frames = Vec::with_capacity(horizon as usize + 1);
        for f in 0..=horizon {
            let pixels = r.f32s(height * width * 3)?;
            if !pixels.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
                return Err(DemoError::Format(format!("demo {} frame {}: pixel out of range", index, f)));
            }
            frames.push(ObservationImage::new(height, width, pixels));
        }
        demos.push(Demonstration { context, frames });
        splits.push(split);
    }
    Ok(DemoSet { task, horizon, demos, splits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate_demos;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_lossless_and_stable() {
        let dir = tempfile::tempdir().unwrap();
        let set = generate_demos(Task::Push, 4, &mut ChaCha8Rng::seed_from_u64(17)).unwrap();
        let p1 = dir.path().join("demos.obd");
        let p2 = dir.path().join("again.obd");
        save_demoset(&p1, &set).unwrap();
        let loaded = load_demoset(&p1).unwrap();
        assert_eq!(loaded, set);
        save_demoset(&p2, &loaded).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("demos.obd");
        std::fs::write(&p, b"WRONGFILE").unwrap();
        assert!(matches!(load_demoset(&p), Err(DemoError::Format(_))));

        let set = generate_demos(Task::Reach, 2, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        save_demoset(&p, &set).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        match load_demoset(&p) {
            Err(DemoError::Format(m)) => assert!(m.contains("truncated"), "{}", m),
            other => panic!("expected truncation, got {:?}", other.map(|s| s.demos.len())),
        }
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("demos.obd");
        let set = generate_demos(Task::Reach, 2, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        save_demoset(&p, &set).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        // Overwrite the last frame float with 7.0.
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&7.0f32.to_le_bytes());
        std::fs::write(&p, &bytes).unwrap();
        match load_demoset(&p) {
            Err(DemoError::Format(m)) => assert!(m.contains("pixel"), "{}", m),
            other => panic!("expected pixel range error, got {:?}", other.map(|s| s.demos.len())),
        }
    }
}
