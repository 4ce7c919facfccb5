//! Plain binary grid files and 16-bit PGM heatmaps.
//!
//! The grid format stores one 2D array together with its axis geometry:
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0      | 4    | magic `BPG1` |
//! | 4      | 4    | `n1` (`u32`, samples on the first axis) |
//! | 8      | 4    | `n2` (`u32`, samples on the second axis) |
//! | 12     | 8    | `dx1` (`f64`, m) |
//! | 20     | 8    | `dx2` (`f64`, m) |
//! | 28     | 8    | `x1_0` (`f64`, m, coordinate of sample 0) |
//! | 36     | 8    | `x2_0` (`f64`, m) |
//! | 44     | 1    | dtype: 0 = real `f64`, 1 = complex (`f64` re, im pairs) |
//! | 45     | —    | row-major little-endian payload |
//!
//! No compression and no alignment tricks: anything that can read
//! little-endian numbers can parse it. Malformed content reports the exact
//! byte offset where parsing failed.
//!
//! Heatmaps can additionally be written as binary 16-bit PGM (`P5`,
//! maxval 65535) for quick viewing; values are min–max normalised.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Axis, ComplexField2D, Jpd2};

const MAGIC: &[u8; 4] = b"BPG1";
const DTYPE_REAL: u8 = 0;
const DTYPE_COMPLEX: u8 = 1;
/// Header length in bytes; the payload starts here.
pub const GRID_HEADER_LEN: u64 = 45;

fn format_error(offset: u64, reason: impl Into<String>) -> Error {
    Error::Format { offset, reason: reason.into() }
}

fn write_header<W: Write>(
    out: &mut W,
    axis1: &Axis,
    axis2: &Axis,
    dtype: u8,
) -> Result<()> {
    out.write_all(MAGIC)?;
    let n1 = u32::try_from(axis1.n)
        .map_err(|_| Error::domain(format!("axis 1 has {} samples; format caps at u32", axis1.n)))?;
    let n2 = u32::try_from(axis2.n)
        .map_err(|_| Error::domain(format!("axis 2 has {} samples; format caps at u32", axis2.n)))?;
    out.write_all(&n1.to_le_bytes())?;
    out.write_all(&n2.to_le_bytes())?;
    out.write_all(&axis1.dx.to_le_bytes())?;
    out.write_all(&axis2.dx.to_le_bytes())?;
    out.write_all(&axis1.x0.to_le_bytes())?;
    out.write_all(&axis2.x0.to_le_bytes())?;
    out.write_all(&[dtype])?;
    Ok(())
}

/// Write a real map.
pub fn write_jpd2<W: Write>(out: &mut W, jpd: &Jpd2) -> Result<()> {
    write_header(out, &jpd.axis1, &jpd.axis2, DTYPE_REAL)?;
    for &v in jpd.values.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Write a complex field.
pub fn write_field<W: Write>(out: &mut W, field: &ComplexField2D) -> Result<()> {
    write_header(out, &field.axis1, &field.axis2, DTYPE_COMPLEX)?;
    for v in field.values.iter() {
        out.write_all(&v.re.to_le_bytes())?;
        out.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

/// Fill `buf` from `input`, returning how many bytes actually arrived.
fn fill(input: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        let n = input.read(&mut buf[got..])?;
        if n == 0 {
            break;
        }
        got += n;
    }
    Ok(got)
}

struct Header {
    axis1: Axis,
    axis2: Axis,
    dtype: u8,
}

fn read_header(input: &mut impl Read) -> Result<Header> {
    let mut raw = [0u8; GRID_HEADER_LEN as usize];
    let got = fill(input, &mut raw)?;
    if got < raw.len() {
        return Err(format_error(
            got as u64,
            format!("truncated header: {} bytes needed, file ends after {got}", raw.len()),
        ));
    }
    if &raw[0..4] != MAGIC {
        return Err(format_error(0, format!("bad magic {:?}, expected \"BPG1\"", &raw[0..4])));
    }
    let u32_at = |off: usize| u32::from_le_bytes(raw[off..off + 4].try_into().unwrap());
    let f64_at = |off: usize| f64::from_le_bytes(raw[off..off + 8].try_into().unwrap());
    let n1 = u32_at(4) as usize;
    let n2 = u32_at(8) as usize;
    let dx1 = f64_at(12);
    let dx2 = f64_at(20);
    let x1_0 = f64_at(28);
    let x2_0 = f64_at(36);
    let axis_at = |n: usize, dx: f64, x0: f64, off: u64| -> Result<Axis> {
        Axis::new(n, dx, x0).map_err(|e| format_error(off, e.to_string()))
    };
    let axis1 = axis_at(n1, dx1, x1_0, 4)?;
    let axis2 = axis_at(n2, dx2, x2_0, 8)?;
    let dtype = raw[44];
    if dtype != DTYPE_REAL && dtype != DTYPE_COMPLEX {
        return Err(format_error(44, format!("unknown dtype {dtype}, expected 0 or 1")));
    }
    Ok(Header { axis1, axis2, dtype })
}

/// Read the payload (`bytes_per_cell` * n1 * n2 bytes), then require EOF.
fn read_payload(input: &mut impl Read, header: &Header, bytes_per_cell: u64) -> Result<Vec<u8>> {
    let cells = header.axis1.n as u64 * header.axis2.n as u64;
    let expected = cells.checked_mul(bytes_per_cell).and_then(|b| usize::try_from(b).ok()).ok_or_else(
        || format_error(4, format!("payload of {cells} cells does not fit in memory")),
    )?;
    let mut payload = vec![0u8; expected];
    let got = fill(input, &mut payload)?;
    if got < expected {
        return Err(format_error(
            GRID_HEADER_LEN + got as u64,
            format!("truncated payload: {expected} bytes needed, file ends after {got}"),
        ));
    }
    let mut probe = [0u8; 1];
    if fill(input, &mut probe)? != 0 {
        return Err(format_error(
            GRID_HEADER_LEN + expected as u64,
            "trailing bytes after the payload".to_string(),
        ));
    }
    Ok(payload)
}

/// Read a real map written by [`write_jpd2`].
pub fn read_jpd2<R: Read>(input: &mut R) -> Result<Jpd2> {
    let header = read_header(input)?;
    if header.dtype != DTYPE_REAL {
        return Err(format_error(44, "dtype is complex128, expected real64".to_string()));
    }
    let payload = read_payload(input, &header, 8)?;
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let array = Array2::from_shape_vec((header.axis1.n, header.axis2.n), values)
        .expect("payload length was sized from the axes");
    Jpd2::new(header.axis1, header.axis2, array)
}

/// Read a complex field written by [`write_field`].
pub fn read_field<R: Read>(input: &mut R) -> Result<ComplexField2D> {
    let header = read_header(input)?;
    if header.dtype != DTYPE_COMPLEX {
        return Err(format_error(44, "dtype is real64, expected complex128".to_string()));
    }
    let payload = read_payload(input, &header, 16)?;
    let values: Vec<Complex64> = payload
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            )
        })
        .collect();
    let array = Array2::from_shape_vec((header.axis1.n, header.axis2.n), values)
        .expect("payload length was sized from the axes");
    ComplexField2D::new(header.axis1, header.axis2, array)
}

/// Write a real map to `path`.
pub fn save_jpd2(path: impl AsRef<Path>, jpd: &Jpd2) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_jpd2(&mut out, jpd)?;
    out.flush()?;
    Ok(())
}

/// Read a real map from `path`.
pub fn load_jpd2(path: impl AsRef<Path>) -> Result<Jpd2> {
    read_jpd2(&mut BufReader::new(File::open(path)?))
}

/// Write a complex field to `path`.
pub fn save_field(path: impl AsRef<Path>, field: &ComplexField2D) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_field(&mut out, field)?;
    out.flush()?;
    Ok(())
}

/// Read a complex field from `path`.
pub fn load_field(path: impl AsRef<Path>) -> Result<ComplexField2D> {
    read_field(&mut BufReader::new(File::open(path)?))
}

/// Write `values` as a binary 16-bit PGM heatmap (`P5`, maxval 65535).
///
/// Values are min–max normalised over the whole array; a constant array
/// maps to all-black. Rows follow the first array index, so sample `[0, 0]`
/// is the top-left pixel in viewers. Sample depth is two bytes, most
/// significant byte first, as the PGM specification requires.
pub fn write_pgm16<W: Write>(out: &mut W, values: &Array2<f64>) -> Result<()> {
    let (rows, cols) = values.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::domain("cannot write an empty image"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values.iter() {
        if !v.is_finite() {
            return Err(Error::domain(format!("non-finite sample {v} in image")));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = hi - lo;
    write!(out, "P5\n{cols} {rows}\n65535\n")?;
    for &v in values.iter() {
        let level = if span > 0.0 {
            ((v - lo) / span * 65535.0).round() as u16
        } else {
            0
        };
        out.write_all(&level.to_be_bytes())?;
    }
    Ok(())
}

/// Write a PGM heatmap to `path`.
pub fn save_pgm16(path: impl AsRef<Path>, values: &Array2<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_pgm16(&mut out, values)?;
    out.flush()?;
    Ok(())
}
