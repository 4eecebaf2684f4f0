//! Binary parameter files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    b"GSNN"
//! version  u32
//! spec     u64 fingerprint of the NetworkSpec
//! count    u32 number of tensors
//! tensor*  ndim: u32, dims: ndim x u64, values: f64 x prod(dims)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{NetworkParams, NetworkSpec, NnError, Tensor};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"GSNN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_params<W: Write>(params: &NetworkParams, mut w: W) -> Result<(), NnError> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&params.spec().fingerprint().to_le_bytes())?;
    w.write_all(&(params.tensors().len() as u32).to_le_bytes())?;
    for t in params.tensors() {
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for d in t.shape() {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, NnError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads parameters for `spec`, rejecting files written for another spec.
pub fn read_params<R: Read>(spec: &NetworkSpec, mut r: R) -> Result<NetworkParams, NnError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(NnError::Format("bad magic bytes".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }
    let found = read_u64(&mut r)?;
    let expected = spec.fingerprint();
    if found != expected {
        return Err(NnError::Fingerprint { expected, found });
    }
    let count = read_u32(&mut r)? as usize;
    let shapes = spec.param_shapes();
    if count != shapes.len() {
        return Err(NnError::Format(format!("{count} tensors, spec has {}", shapes.len())));
    }
    let mut tensors = Vec::with_capacity(count);
    for expected_shape in shapes {
        let ndim = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u64(&mut r)? as usize);
        }
        if shape != expected_shape {
            return Err(NnError::Format(format!("tensor shape {shape:?}, expected {expected_shape:?}")));
        }
        let len: usize = shape.iter().product();
        let mut bytes = vec![0u8; len * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.push(Tensor::new(shape, data)?);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(NnError::Format("trailing bytes after last tensor".into()));
    }
    NetworkParams::from_tensors(spec, tensors)
}

pub fn save_params(params: &NetworkParams, path: impl AsRef<Path>) -> Result<(), NnError> {
    write_params(params, BufWriter::new(File::create(path)?))
}

pub fn load_params(spec: &NetworkSpec, path: impl AsRef<Path>) -> Result<NetworkParams, NnError> {
    read_params(spec, BufReader::new(File::open(path)?))
}
