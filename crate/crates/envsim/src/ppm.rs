//! Binary PPM (P6) export for observations and film strips.

use std::fs::File;
use std::io::{BufWriter, Result, Write};
use std::path::Path;

use crate::ObservationImage;

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_ppm(img: &ObservationImage, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
    let bytes: Vec<u8> = img.pixels.iter().map(|&v| to_byte(v)).collect();
    w.write_all(&bytes)?;
    w.flush()
}

/// Horizontal concatenation of equally sized frames into one image;
/// frame t occupies columns [t*w, (t+1)*w).
pub fn write_strip(frames: &[ObservationImage], path: &Path) -> Result<()> {
    assert!(!frames.is_empty());
    let (h, w) = (frames[0].height, frames[0].width);
    assert!(frames.iter().all(|f| f.height == h && f.width == w));
    let mut file = BufWriter::new(File::create(path)?);
    write!(file, "P6\n{} {}\n255\n", w * frames.len(), h)?;
    let mut row_bytes = Vec::with_capacity(w * frames.len() * 3);
    for row in 0..h {
        row_bytes.clear();
        for f in frames {
            let start = row * w * 3;
            row_bytes.extend(f.pixels[start..start + w * 3].iter().map(|&v| to_byte(v)));
        }
        file.write_all(&row_bytes)?;
    }
    file.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_header_and_payload() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.ppm");
        let img = ObservationImage::new(2, 2, vec![
            0.0, 0.0, 0.0, 1.0, 1.0, 1.0,
            0.5, 0.0, 1.0, 0.25, 0.75, 0.5,
        ]);
        write_ppm(&img, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P6\n2 2\n255\n"));
        let payload = &bytes[b"P6\n2 2\n255\n".len()..];
        assert_eq!(payload.len(), 12);
        assert_eq!(&payload[..6], &[0, 0, 0, 255, 255, 255]);
        assert_eq!(payload[6], 128); // 0.5 * 255 rounded
    }

    #[test]
    fn strip_places_frames_side_by_side() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("strip.ppm");
        let red = ObservationImage::new(1, 1, vec![1.0, 0.0, 0.0]);
        let blue = ObservationImage::new(1, 1, vec![0.0, 0.0, 1.0]);
        write_strip(&[red, blue], &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P6\n2 1\n255\n"));
        let payload = &bytes[b"P6\n2 1\n255\n".len()..];
        assert_eq!(payload, &[255, 0, 0, 0, 0, 255]);
    }
}
