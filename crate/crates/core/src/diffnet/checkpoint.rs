//! Binary network checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "MADNET1"                       7 bytes
//! layer_count                     u32
//! (in, out) per layer             u32, u32
//! per layer: weight [in × out] row-major f64, then bias [out] f64
//! ```

use std::io::{Read, Write};

use super::mlp::{Dense, Mlp};
use super::tensor::Tensor;
use super::DiffError;

pub const MAGIC: &[u8; 7] = b"MADNET1";

pub fn write_checkpoint<W: Write>(net: &Mlp, mut w: W) -> Result<(), DiffError> {
    w.write_all(MAGIC)?;
    w.write_all(&(net.layers().len() as u32).to_le_bytes())?;
    for (i, o) in net.layer_dims() {
        w.write_all(&(i as u32).to_le_bytes())?;
        w.write_all(&(o as u32).to_le_bytes())?;
    }
    for layer in net.layers() {
        for v in layer.weight.data().iter().chain(layer.bias.data()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn to_bytes(net: &Mlp) -> Vec<u8> {
    let mut buf = Vec::with_capacity(11 + 8 * net.layers().len() + 8 * net.num_params());
    write_checkpoint(net, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32, DiffError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| DiffError::Checkpoint(format!("truncated while reading {what}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<f64>, DiffError> {
    let mut raw = vec![0u8; n * 8];
    r.read_exact(&mut raw)
        .map_err(|_| DiffError::Checkpoint(format!("truncated while reading {what}")))?;
    Ok(raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Mlp, DiffError> {
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)
        .map_err(|_| DiffError::Checkpoint("file shorter than the magic header".into()))?;
    if &magic != MAGIC {
        return Err(DiffError::Checkpoint(
            "bad magic, not a MADNET1 checkpoint".into(),
        ));
    }
    let count = read_u32(&mut r, "layer count")? as usize;
    if count == 0 || count > 1024 {
        return Err(DiffError::Checkpoint(format!(
            "implausible layer count {count}"
        )));
    }
    let mut dims = Vec::with_capacity(count);
    for i in 0..count {
        let a = read_u32(&mut r, &format!("layer {i} input width"))? as usize;
        let b = read_u32(&mut r, &format!("layer {i} output width"))? as usize;
        dims.push((a, b));
    }
    let mut layers = Vec::with_capacity(count);
    for (i, &(a, b)) in dims.iter().enumerate() {
        let w = read_f64s(&mut r, a * b, &format!("layer {i} weights"))?;
        let bias = read_f64s(&mut r, b, &format!("layer {i} bias"))?;
        layers.push(Dense {
            weight: Tensor::new(vec![a, b], w)?,
            bias: Tensor::new(vec![b], bias)?,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(DiffError::Checkpoint(
            "trailing bytes after parameters".into(),
        ));
    }
    Mlp::from_layers(layers)
}
