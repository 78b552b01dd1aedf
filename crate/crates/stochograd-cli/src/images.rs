//! Image persistence: 16-bit PGM (P5) for viewing, raw little-endian f64
//! with a JSON header for analysis. No plotting dependency; any tool can
//! read both.

use std::fs;
use std::io::Write;
use std::path::Path;
use stochograd::{DenseVector, Shape};

/// Write a 16-bit binary PGM, min-max normalised (a constant image maps to
/// mid-grey).
pub fn write_pgm16(path: &Path, img: &DenseVector, h: usize, w: usize) -> std::io::Result<()> {
    assert_eq!(img.len(), h * w);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in img.as_slice() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut file = fs::File::create(path)?;
    write!(file, "P5\n{w} {h}\n65535\n")?;
    let mut bytes = Vec::with_capacity(2 * h * w);
    for &v in img.as_slice() {
        let scaled = if hi > lo { (v - lo) / span } else { 0.5 };
        let q = (scaled * 65535.0).round().clamp(0.0, 65535.0) as u16;
        bytes.extend_from_slice(&q.to_be_bytes());
    }
    file.write_all(&bytes)
}

/// Write `<stem>.raw` (little-endian f64, row-major) plus `<stem>.json`
/// describing shape, dtype and byte order.
pub fn write_raw_f64(stem: &Path, vec: &DenseVector) -> std::io::Result<()> {
    let raw_path = stem.with_extension("raw");
    let mut bytes = Vec::with_capacity(8 * vec.len());
    for &v in vec.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(raw_path, bytes)?;
    let shape = match vec.shape() {
        Shape::Image { h, w } => format!("[{h}, {w}]"),
        Shape::Flat(d) => format!("[{d}]"),
    };
    let header = format!(
        "{{\n  \"shape\": {shape},\n  \"dtype\": \"float64\",\n  \"order\": \"C\",\n  \"byteorder\": \"little\"\n}}\n"
    );
    fs::write(stem.with_extension("json"), header)
}

/// Read back a raw f64 file written by [`write_raw_f64`].
pub fn read_raw_f64(stem: &Path) -> std::io::Result<Vec<f64>> {
    let bytes = fs::read(stem.with_extension("raw"))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunks")))
        .collect())
}
