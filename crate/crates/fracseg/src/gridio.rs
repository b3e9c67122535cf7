//! File formats: F2D grids, F2DS leader stacks, PGM masks and grayscale images.
//!
//! F2D layout: `b"F2D1"`, rows and cols as `u32` LE, then `rows * cols` `f64` LE
//! values in row-major order. F2DS layout: `b"F2DS"`, scale count and `j1` as
//! `u32` LE, `gamma` as `f64` LE, then one F2D record per scale.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fracseg_core::multiscale::LeaderStack;
use fracseg_core::{Field2D, LabelMask};

use crate::error::{Error, Result};

pub const F2D_MAGIC: &[u8; 4] = b"F2D1";
pub const F2DS_MAGIC: &[u8; 4] = b"F2DS";
const HEADER: usize = 12;

pub fn encode_field(field: &Field2D) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * field.len());
    out.extend_from_slice(F2D_MAGIC);
    out.extend_from_slice(&(field.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(field.cols() as u32).to_le_bytes());
    for v in field.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes one F2D record from the front of `bytes`, returning it with the
/// number of bytes consumed. `path` is only used in error messages.
pub fn decode_field(bytes: &[u8], path: &Path) -> Result<(Field2D, usize)> {
    if bytes.len() < 4 || &bytes[..4] != F2D_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            found: bytes[..bytes.len().min(4)].to_vec(),
            expected: "F2D1",
        });
    }
    if bytes.len() < HEADER {
        return Err(Error::Truncated {
            path: path.into(),
            expected: HEADER as u64,
            found: bytes.len() as u64,
        });
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(path, format!("empty {rows}x{cols} grid")));
    }
    let total = HEADER as u64 + 8 * rows as u64 * cols as u64;
    if (bytes.len() as u64) < total {
        return Err(Error::Truncated {
            path: path.into(),
            expected: total,
            found: bytes.len() as u64,
        });
    }
    let data: Vec<f64> = bytes[HEADER..total as usize]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            path: path.into(),
            index,
        });
    }
    Ok((Field2D::new(rows, cols, data)?, total as usize))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_field(field: &Field2D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(index) = field.first_non_finite() {
        return Err(Error::NonFinite {
            path: path.into(),
            index,
        });
    }
    write_bytes(path, &encode_field(field))
}

pub fn read_field(path: impl AsRef<Path>) -> Result<Field2D> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let (field, used) = decode_field(&bytes, path)?;
    if used != bytes.len() {
        return Err(Error::format(path, format!("{} trailing bytes", bytes.len() - used)));
    }
    Ok(field)
}

pub fn write_stack(stack: &LeaderStack, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    out.extend_from_slice(F2DS_MAGIC);
    out.extend_from_slice(&(stack.num_scales() as u32).to_le_bytes());
    out.extend_from_slice(&(stack.j1() as u32).to_le_bytes());
    out.extend_from_slice(&stack.gamma().to_le_bytes());
    for grid in stack.grids() {
        out.extend_from_slice(&encode_field(grid));
    }
    write_bytes(path, &out)
}

pub fn read_stack(path: impl AsRef<Path>) -> Result<LeaderStack> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.len() < 4 || &bytes[..4] != F2DS_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            found: bytes[..bytes.len().min(4)].to_vec(),
            expected: "F2DS",
        });
    }
    if bytes.len() < 20 {
        return Err(Error::Truncated {
            path: path.into(),
            expected: 20,
            found: bytes.len() as u64,
        });
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let j1 = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let gamma = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let mut offset = 20;
    let mut grids = Vec::with_capacity(count);
    for _ in 0..count {
        let (grid, used) = decode_field(&bytes[offset..], path)?;
        grids.push(grid);
        offset += used;
    }
    if offset != bytes.len() {
        return Err(Error::format(path, format!("{} trailing bytes", bytes.len() - offset)));
    }
    Ok(LeaderStack::from_parts(j1, gamma, grids)?)
}

/// Gray level used for `label` in a `q`-class mask.
pub fn mask_gray(label: u32, q: u32) -> u8 {
    let span = q.saturating_sub(1).max(1) as f64;
    (label as f64 * 255.0 / span).round() as u8
}

/// Path of the text file recording the class count next to a mask image.
pub fn mask_sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".q");
    PathBuf::from(name)
}

fn encode_pgm(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Writes `mask` as an 8-bit PGM plus a sidecar (`<path>.q`) holding `Q`.
pub fn write_mask(mask: &LabelMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if mask.q() > 256 {
        return Err(Error::Unsupported(format!(
            "{} classes do not fit an 8-bit mask (at most 256)",
            mask.q()
        )));
    }
    let pixels: Vec<u8> = mask.labels().iter().map(|&l| mask_gray(l, mask.q())).collect();
    write_bytes(path, &encode_pgm(mask.rows(), mask.cols(), &pixels))?;
    let sidecar = mask_sidecar(path);
    let mut f = fs::File::create(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    writeln!(f, "{}", mask.q()).map_err(|e| Error::io(&sidecar, e))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<LabelMask> {
    let path = path.as_ref();
    let sidecar = mask_sidecar(path);
    let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let q: u32 = text
        .trim()
        .parse()
        .map_err(|_| Error::format(&sidecar, format!("expected a class count, found {:?}", text.trim())))?;
    if q == 0 || q > 256 {
        return Err(Error::format(&sidecar, format!("class count {q} outside 1..=256")));
    }
    let Pgm { rows, cols, pixels, .. } = read_pgm(path)?;
    let mut lookup = [None; 256];
    for label in 0..q {
        lookup[mask_gray(label, q) as usize] = Some(label);
    }
    let labels = pixels
        .iter()
        .map(|&p| {
            lookup[p as usize].ok_or_else(|| Error::format(path, format!("gray level {p} is not a label of a {q}-class mask")))
        })
        .collect::<Result<Vec<u32>>>()?;
    Ok(LabelMask::new(rows, cols, labels, q)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub rows: usize,
    pub cols: usize,
    pub maxval: u8,
    pub pixels: Vec<u8>,
}

/// Parses an 8-bit binary PGM.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Pgm> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::BadMagic {
            path: path.into(),
            found: bytes[..bytes.len().min(2)].to_vec(),
            expected: "P5 (binary 8-bit PGM)",
        });
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, "malformed PGM header"))?;
    }
    let [cols, rows, maxval] = fields;
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::format(path, "malformed PGM header"));
    }
    pos += 1;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Unsupported(format!(
            "{}: maxval {maxval}, only 8-bit PGM is supported",
            path.display()
        )));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::format(path, format!("empty {rows}x{cols} image")));
    }
    let need = rows * cols;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(Error::Truncated {
            path: path.into(),
            expected: (pos + need) as u64,
            found: bytes.len() as u64,
        });
    }
    Ok(Pgm {
        rows,
        cols,
        maxval: maxval as u8,
        pixels: payload[..need].to_vec(),
    })
}

/// Reads an 8-bit PGM and scales gray levels to `[0, 1]` by its maxval.
pub fn import_grayscale(path: impl AsRef<Path>) -> Result<Field2D> {
    let pgm = read_pgm(path)?;
    let scale = pgm.maxval as f64;
    let data = pgm.pixels.iter().map(|&p| (p as f64 / scale).min(1.0)).collect();
    Ok(Field2D::new(pgm.rows, pgm.cols, data)?)
}

/// Writes `field` as an 8-bit PGM with its range mapped linearly onto `0..=255`.
pub fn export_grayscale(field: &Field2D, path: impl AsRef<Path>) -> Result<()> {
    let (lo, hi) = (field.min(), field.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u8> = field
        .as_slice()
        .iter()
        .map(|v| ((v - lo) / span * 255.0).round() as u8)
        .collect();
    write_bytes(path.as_ref(), &encode_pgm(field.rows(), field.cols(), &pixels))
}
