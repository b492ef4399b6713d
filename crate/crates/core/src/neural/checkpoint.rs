//! Binary network checkpoints.
//!
//! Layout (all integers and floats little-endian):
//! `b"PUNCTMLP"`, `u32` format version, `u32` number of layer sizes, the sizes
//! as `u32`, then for each layer its weights row-major followed by its bias,
//! as `f64`. Identical bytes decode to an identical network.

use std::io::{Read, Write};

use super::mlp::{Mlp, Params};
use crate::error::{Error, Result};

pub const MLP_MAGIC: &[u8; 8] = b"PUNCTMLP";
pub const FORMAT_VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<()> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    if &b != magic {
        return Err(Error::Checkpoint(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&b),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    Ok(())
}

/// Writes a parameter bundle (without magic) as sizes followed by values.
pub fn write_params<W: Write>(w: &mut W, p: &Params) -> Result<()> {
    let sizes = p.sizes();
    write_u32(w, sizes.len() as u32)?;
    for s in sizes {
        write_u32(w, s as u32)?;
    }
    for v in p.iter() {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    Ok(())
}

pub fn read_params<R: Read>(r: &mut R) -> Result<Params> {
    let count = read_u32(r)? as usize;
    if !(2..=64).contains(&count) {
        return Err(Error::Checkpoint(format!("implausible layer count {count}")));
    }
    let sizes = (0..count).map(|_| read_u32(r).map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
    if sizes.iter().any(|&s| s == 0 || s > 1 << 20) {
        return Err(Error::Checkpoint(format!("implausible layer sizes {sizes:?}")));
    }
    let mut p = Params::zeros(&sizes);
    let mut buf = [0u8; 8];
    for v in p.iter_mut() {
        r.read_exact(&mut buf).map_err(io_err)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(p)
}

pub fn write_mlp<W: Write>(w: &mut W, net: &Mlp) -> Result<()> {
    w.write_all(MLP_MAGIC).map_err(io_err)?;
    write_u32(w, FORMAT_VERSION)?;
    write_params(w, net.params())
}

pub fn read_mlp<R: Read>(r: &mut R) -> Result<Mlp> {
    expect_magic(r, MLP_MAGIC)?;
    Ok(Mlp::from_params(read_params(r)?))
}

pub fn mlp_to_bytes(net: &Mlp) -> Vec<u8> {
    let mut out = Vec::new();
    write_mlp(&mut out, net).expect("writing to a Vec cannot fail");
    out
}
