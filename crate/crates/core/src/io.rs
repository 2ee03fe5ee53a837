//! Tensor file formats.
//!
//! Text: first line `D n_1 ... n_D`, then exactly `n` whitespace-separated
//! decimal floats in mode-1 vectorization order.
//!
//! Binary: magic `COCO`, version byte `1`, little-endian `u32` order `D`,
//! `D` little-endian `u64` dims, then `n` little-endian `f64` values.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{CocoError, Result};
use crate::tensor::DenseTensor;

pub const MAGIC: &[u8; 4] = b"COCO";
pub const BINARY_VERSION: u8 = 1;

pub fn write_text<W: Write>(t: &DenseTensor, mut w: W) -> Result<()> {
    write!(w, "{}", t.order())?;
    for n in t.dims() {
        write!(w, " {n}")?;
    }
    writeln!(w)?;
    for (k, v) in t.vectorize().iter().enumerate() {
        // `{:?}` on f64 prints the shortest representation that round-trips.
        if k > 0 {
            w.write_all(if k % 8 == 0 { b"\n" } else { b" " })?;
        }
        write!(w, "{v:?}")?;
    }
    writeln!(w)?;
    Ok(())
}

pub fn read_text<R: Read>(r: R) -> Result<DenseTensor> {
    let mut reader = BufReader::new(r);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let mut head = header.split_whitespace().map(|tok| {
        tok.parse::<usize>()
            .map_err(|_| CocoError::Parse(format!("bad header token `{tok}`")))
    });
    let order = head
        .next()
        .ok_or_else(|| CocoError::Parse("empty header".into()))??;
    let dims = head.collect::<Result<Vec<usize>>>()?;
    if dims.len() != order {
        return Err(CocoError::Parse(format!(
            "header declares {order} modes but lists {} dims",
            dims.len()
        )));
    }
    let mut body = String::new();
    reader.read_to_string(&mut body)?;
    let data = body
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| CocoError::Parse(format!("bad value `{tok}`")))
        })
        .collect::<Result<Vec<f64>>>()?;
    finite(DenseTensor::new(dims, data)?)
}

pub fn write_binary<W: Write>(t: &DenseTensor, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[BINARY_VERSION])?;
    w.write_all(&(t.order() as u32).to_le_bytes())?;
    for &n in t.dims() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for v in t.vectorize() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<DenseTensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CocoError::Parse("missing COCO magic bytes".into()));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)?;
    if version[0] != BINARY_VERSION {
        return Err(CocoError::Parse(format!(
            "unsupported binary version {}",
            version[0]
        )));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let order = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    let mut dims = Vec::with_capacity(order);
    for _ in 0..order {
        r.read_exact(&mut b8)?;
        dims.push(
            usize::try_from(u64::from_le_bytes(b8))
                .map_err(|_| CocoError::Parse("dimension does not fit in usize".into()))?,
        );
    }
    let n: usize = dims.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b8)?;
        data.push(f64::from_le_bytes(b8));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(CocoError::Parse("trailing bytes after payload".into()));
    }
    finite(DenseTensor::new(dims, data)?)
}

fn finite(t: DenseTensor) -> Result<DenseTensor> {
    match t.vectorize().iter().position(|v| !v.is_finite()) {
        Some(k) => Err(CocoError::Parse(format!(
            "non-finite value at position {k}"
        ))),
        None => Ok(t),
    }
}

/// Reads either format, sniffing the magic bytes.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        read_binary(bytes.as_slice())
    } else {
        read_text(bytes.as_slice())
    }
}

/// Writes text when the extension is `txt`, binary otherwise.
pub fn write_tensor(t: &DenseTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    if path.extension().is_some_and(|e| e == "txt") {
        write_text(t, &mut buf)?;
    } else {
        write_binary(t, &mut buf)?;
    }
    fs::write(path, buf)?;
    Ok(())
}
