//! Binary model files.
//!
//! Layout (all integers little-endian u32, all parameters little-endian f32):
//!
//! ```text
//! offset  size            field
//! 0       6               magic "ABNET1"
//! 6       4               input_dim
//! 10      4               num_classes
//! 14      4               num_layers L
//! 18      5*L             per layer: out_dim (u32), activation (u8: 0 relu, 1 identity)
//! ...     per layer       weights (out_dim*in_dim f32, row-major), bias (out_dim f32)
//! ```
//!
//! Layer input sizes are implied: the first layer reads `input_dim` values,
//! each later layer reads the previous layer's `out_dim`. The final layer's
//! `out_dim` must equal `num_classes`. Parameters are stored at f32 width and
//! upcast to f64 on load, so a loaded model re-saves to identical bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Activation, DenseLayer, ModelParams};
use crate::{Error, Result};

/// File signature; doubles as a version marker.
pub const MODEL_MAGIC: &[u8; 6] = b"ABNET1";

pub fn save_model(model: &ModelParams, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&(model.input_dim() as u32).to_le_bytes())?;
    w.write_all(&(model.num_classes() as u32).to_le_bytes())?;
    w.write_all(&(model.layers().len() as u32).to_le_bytes())?;
    for layer in model.layers() {
        w.write_all(&(layer.out_dim() as u32).to_le_bytes())?;
        let act = match layer.activation() {
            Activation::Relu => 0u8,
            Activation::Identity => 1u8,
        };
        w.write_all(&[act])?;
    }
    for layer in model.layers() {
        for &v in layer.weights() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        for &v in layer.bias() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 6];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format(format!(
            "{} is not a model file (bad magic)",
            path.display()
        )));
    }
    let input_dim = read_u32(&mut r, "input_dim")? as usize;
    let num_classes = read_u32(&mut r, "num_classes")? as usize;
    let num_layers = read_u32(&mut r, "num_layers")? as usize;
    if input_dim == 0 || num_layers == 0 {
        return Err(Error::Format("header declares an empty network".into()));
    }
    let mut specs = Vec::with_capacity(num_layers);
    for _ in 0..num_layers {
        let out_dim = read_u32(&mut r, "layer out_dim")? as usize;
        let mut act = [0u8; 1];
        read_exact(&mut r, &mut act, "layer activation")?;
        let activation = match act[0] {
            0 => Activation::Relu,
            1 => Activation::Identity,
            other => {
                return Err(Error::Format(format!("unknown activation code {other}")));
            }
        };
        specs.push((out_dim, activation));
    }
    if specs.last().map(|(out, _)| *out) != Some(num_classes) {
        return Err(Error::Format(
            "final layer width disagrees with the declared class count".into(),
        ));
    }
    let mut layers = Vec::with_capacity(num_layers);
    let mut in_dim = input_dim;
    for (out_dim, activation) in specs {
        let weights = read_f32_block(&mut r, in_dim * out_dim, "weights")?;
        let bias = read_f32_block(&mut r, out_dim, "bias")?;
        layers.push(DenseLayer::new(in_dim, out_dim, weights, bias, activation)?);
        in_dim = out_dim;
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after parameter blocks".into()));
    }
    ModelParams::new(layers)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("file truncated while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f32_block(r: &mut impl Read, len: usize, what: &str) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; len * 4];
    read_exact(r, &mut bytes, what)?;
    let mut out = Vec::with_capacity(len);
    for chunk in bytes.chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Format(format!("non-finite value in {what} block")));
        }
        out.push(f64::from(v));
    }
    Ok(out)
}
