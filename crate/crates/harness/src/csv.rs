//! Minimal CSV output: comma-separated values, one header line, `Display`
//! formatting for numbers so floats round-trip at full precision.

use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::Path;

use crate::{runtime_at, Result};

/// A value in a CSV row. Floats print through `Display`, which picks the
/// shortest representation that parses back exactly.
#[derive(Debug, Clone)]
pub enum Cell {
    Int(i64),
    F32(f32),
    F64(f64),
    Str(String),
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::F32(v) => write!(f, "{v}"),
            Cell::F64(v) => write!(f, "{v}"),
            Cell::Str(v) => write!(f, "{v}"),
        }
    }
}

pub fn format_row(cells: &[Cell]) -> String {
    let mut line = String::new();
    for (i, cell) in cells.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        let _ = write!(line, "{cell}");
    }
    line
}

/// Write a whole CSV file: header then rows.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<Cell>]) -> Result<()> {
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(&format_row(row));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| runtime_at(&path.display().to_string(), e))
}

/// Append one row, creating the file with its header first if needed.
pub fn append_row(path: &Path, header: &str, cells: &[Cell]) -> Result<()> {
    let wrap = |e: std::io::Error| runtime_at(&path.display().to_string(), e);
    if !path.exists() {
        let mut f = File::create(path).map_err(wrap)?;
        writeln!(f, "{header}").map_err(wrap)?;
    }
    let mut f = OpenOptions::new().append(true).open(path).map_err(wrap)?;
    writeln!(f, "{}", format_row(cells)).map_err(wrap)?;
    Ok(())
}
