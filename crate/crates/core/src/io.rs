//! `DWFLD1` binary field dumps.
//!
//! Layout (all little-endian):
//!
//! | offset | size | content                          |
//! |--------|------|----------------------------------|
//! | 0      | 6    | magic `DWFLD1`                   |
//! | 6      | 4    | `u32` n_x                        |
//! | 10     | 4    | `u32` components per cell        |
//! | 14     | 8    | `f64` simulation time            |
//! | 22     | 8    | `f64` adiabatic exponent γ       |
//! | 30     | ...  | `f64` payload, n_x² × components |
//!
//! The payload follows the [`Field`] storage order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

pub const MAGIC: &[u8; 6] = b"DWFLD1";
pub const HEADER_LEN: usize = 30;

/// Metadata stored alongside a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DumpHeader {
    pub n_x: u32,
    pub components: u32,
    pub time: f64,
    pub gamma: f64,
}

pub fn write_field<W: Write>(mut w: W, field: &Field, time: f64, gamma: f64) -> Result<()> {
    let n_x = u32::try_from(field.grid().n_x())
        .map_err(|_| Error::Usage("grid too large for DWFLD1".into()))?;
    let comps = u32::try_from(field.components())
        .map_err(|_| Error::Usage("too many components for DWFLD1".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&n_x.to_le_bytes())?;
    w.write_all(&comps.to_le_bytes())?;
    w.write_all(&time.to_le_bytes())?;
    w.write_all(&gamma.to_le_bytes())?;
    for v in field.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<(Field, DumpHeader)> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    if &header[0..6] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected DWFLD1",
            String::from_utf8_lossy(&header[0..6])
        )));
    }
    let word = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let float = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let hdr = DumpHeader {
        n_x: word(6),
        components: word(10),
        time: float(14),
        gamma: float(22),
    };
    let grid = Grid::new(hdr.n_x as usize)
        .map_err(|_| Error::Format(format!("invalid resolution {} in header", hdr.n_x)))?;
    if hdr.components == 0 {
        return Err(Error::Format("zero components in header".into()));
    }
    let count = grid.cells() * hdr.components as usize;
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated payload ({count} values expected): {e}")))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let field = Field::from_vec(grid, hdr.components as usize, data)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok((field, hdr))
}

pub fn save(path: &Path, field: &Field, time: f64, gamma: f64) -> Result<()> {
    write_field(BufWriter::new(File::create(path)?), field, time, gamma)
}

/// Reads a dump, prefixing any format error with the file name.
pub fn load(path: &Path) -> Result<(Field, DumpHeader)> {
    let file = File::open(path)?;
    read_field(BufReader::new(file)).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}
