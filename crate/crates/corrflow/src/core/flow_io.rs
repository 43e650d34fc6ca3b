//! Flow file I/O in the `DFL1` format.
//!
//! Layout: 4 magic bytes `D F L 1`, little-endian `u32` height and width,
//! then `H*W*2` little-endian 32-bit floats, row-major, `(dx, dy)`
//! interleaved per pixel. Values are stored in single precision; flows read
//! back are tagged as full-resolution.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array3;

use crate::core::types::{FlowField, FlowResolution};
use crate::error::{Error, Result};

const MAGIC: [u8; 4] = *b"DFL1";

/// Writes a flow field to `path` in DFL1 format.
pub fn write_flow(flow: &FlowField, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_u32::<LittleEndian>(flow.height() as u32)?;
    w.write_u32::<LittleEndian>(flow.width() as u32)?;
    for y in 0..flow.height() {
        for x in 0..flow.width() {
            let (dx, dy) = flow.at(y, x);
            w.write_f32::<LittleEndian>(dx as f32)?;
            w.write_f32::<LittleEndian>(dy as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rounds every displacement through the on-disk single precision, so a
/// flow field compares bit-for-bit with itself after a write/read cycle.
/// Evaluation drivers apply this before scoring model output, making
/// precomputed-flow and direct evaluation identical.
pub fn storage_roundtrip(flow: &FlowField) -> FlowField {
    let mut data = flow.data().clone();
    data.iter_mut().for_each(|v| *v = *v as f32 as f64);
    FlowField::new(data, flow.resolution()).expect("quantized copy of a valid flow")
}

/// Reads a DFL1 flow file.
pub fn read_flow(path: &Path) -> Result<FlowField> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format(format!("{}: file too short for header", path.display())))?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}, expected {:?}",
            path.display(),
            magic,
            MAGIC
        )));
    }
    let h = r
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?
        as usize;
    let w = r
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?
        as usize;
    if h == 0 || w == 0 {
        return Err(Error::Format(format!(
            "{}: zero-sized flow {h}x{w}",
            path.display()
        )));
    }
    let mut data = Array3::zeros((h, w, 2));
    for y in 0..h {
        for x in 0..w {
            for k in 0..2 {
                let v = r.read_f32::<LittleEndian>().map_err(|_| {
                    Error::Format(format!(
                        "{}: truncated payload, expected {} floats",
                        path.display(),
                        h * w * 2
                    ))
                })?;
                data[[y, x, k]] = v as f64;
            }
        }
    }
    // Trailing bytes mean the header lied about the raster size.
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format(format!(
            "{}: trailing bytes after {}x{} payload",
            path.display(),
            h,
            w
        )));
    }
    FlowField::new(data, FlowResolution::Full)
}
