//! Binary checkpoint format: step counter, config snapshot with its hash,
//! encoder parameters, and optimizer moments. All numbers little-endian;
//! save → load → save is byte-identical.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{ArrayD, IxDyn};

use crate::autodiff::ParamSet;
use crate::config::Config;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CFCKPT01";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub step: u64,
    pub config: Config,
    pub config_hash: String,
    pub params: ParamSet,
    pub opt_t: u64,
    pub opt_m: Vec<ArrayD<f64>>,
    pub opt_v: Vec<ArrayD<f64>>,
}

fn write_array(w: &mut impl Write, a: &ArrayD<f64>) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(a.ndim() as u32)?;
    for &d in a.shape() {
        w.write_u64::<LittleEndian>(d as u64)?;
    }
    for v in a.iter() {
        w.write_f64::<LittleEndian>(*v)?;
    }
    Ok(())
}

fn read_array(r: &mut impl Read) -> Result<ArrayD<f64>> {
    let ndim = r.read_u32::<LittleEndian>()? as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(r.read_u64::<LittleEndian>()? as usize);
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(r.read_f64::<LittleEndian>()?);
    }
    ArrayD::from_shape_vec(IxDyn(&shape), data)
        .map_err(|e| Error::Format(format!("bad checkpoint array: {e}")))
}

fn write_params(w: &mut impl Write, params: &ParamSet) -> std::io::Result<()> {
    w.write_u64::<LittleEndian>(params.len() as u64)?;
    for (name, value) in params.iter() {
        w.write_u32::<LittleEndian>(name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        write_array(w, value)?;
    }
    Ok(())
}

fn read_params(r: &mut impl Read) -> Result<ParamSet> {
    let count = r.read_u64::<LittleEndian>()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = r.read_u32::<LittleEndian>()? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        let name = String::from_utf8(buf)
            .map_err(|e| Error::Format(format!("bad checkpoint name: {e}")))?;
        params.push(&name, read_array(r)?);
    }
    Ok(params)
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut buf = Vec::new();
    buf.write_all(MAGIC)?;
    buf.write_u64::<LittleEndian>(ck.step)?;
    let hash = ck.config_hash.as_bytes();
    buf.write_u32::<LittleEndian>(hash.len() as u32)?;
    buf.write_all(hash)?;
    let toml = ck.config.to_toml_string();
    buf.write_u64::<LittleEndian>(toml.len() as u64)?;
    buf.write_all(toml.as_bytes())?;
    buf.write_u64::<LittleEndian>(ck.opt_t)?;
    write_params(&mut buf, &ck.params)?;
    buf.write_u64::<LittleEndian>(ck.opt_m.len() as u64)?;
    for a in &ck.opt_m {
        write_array(&mut buf, a)?;
    }
    buf.write_u64::<LittleEndian>(ck.opt_v.len() as u64)?;
    for a in &ck.opt_v {
        write_array(&mut buf, a)?;
    }
    // Single atomic publish so a crash cannot leave a truncated file.
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &buf)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let data = std::fs::read(path)?;
    let mut r = data.as_slice();
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let step = r.read_u64::<LittleEndian>()?;
    let hash_len = r.read_u32::<LittleEndian>()? as usize;
    let mut hash = vec![0u8; hash_len];
    r.read_exact(&mut hash)?;
    let config_hash = String::from_utf8(hash)
        .map_err(|e| Error::Format(format!("bad checkpoint hash: {e}")))?;
    let toml_len = r.read_u64::<LittleEndian>()? as usize;
    let mut toml = vec![0u8; toml_len];
    r.read_exact(&mut toml)?;
    let toml = String::from_utf8(toml)
        .map_err(|e| Error::Format(format!("bad checkpoint config: {e}")))?;
    let config = Config::from_toml_str(&toml)?;
    if config.hash() != config_hash {
        return Err(Error::Format(format!(
            "checkpoint {} is corrupted: stored config hashes to {}, recorded hash is {}",
            path.display(),
            config.hash(),
            config_hash
        )));
    }
    let opt_t = r.read_u64::<LittleEndian>()?;
    let params = read_params(&mut r)?;
    let m_len = r.read_u64::<LittleEndian>()?;
    let mut opt_m = Vec::with_capacity(m_len as usize);
    for _ in 0..m_len {
        opt_m.push(read_array(&mut r)?);
    }
    let v_len = r.read_u64::<LittleEndian>()?;
    let mut opt_v = Vec::with_capacity(v_len as usize);
    for _ in 0..v_len {
        opt_v.push(read_array(&mut r)?);
    }
    Ok(Checkpoint {
        step,
        config,
        config_hash,
        params,
        opt_t,
        opt_m,
        opt_v,
    })
}
