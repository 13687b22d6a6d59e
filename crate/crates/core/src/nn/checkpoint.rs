//! Binary checkpoint format for [`DenseNet`].
//!
//! All integers are little-endian `u32`, all reals little-endian IEEE-754
//! `f64`:
//!
//! ```text
//! magic        4 bytes  "SADN"
//! version      u32      1
//! dropout_rate f64
//! n_dropout    u32
//! dropout_at   u32 × n_dropout      (layer indices, ascending)
//! n_layers     u32
//! per layer:
//!   in_dim     u32
//!   out_dim    u32
//!   activation u8       0 = relu, 1 = sigmoid, 2 = linear, 3 = softmax
//!   weights    f64 × out_dim·in_dim (row-major, one row per output unit)
//!   biases     f64 × out_dim
//! ```

use std::collections::BTreeSet;
use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::{Activation, DenseLayer, DenseNet, NnError};

pub const NET_MAGIC: &[u8; 4] = b"SADN";
pub const NET_VERSION: u32 = 1;

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<(), NnError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<(), NnError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64, NnError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn expect_magic<R: Read>(
    r: &mut R,
    magic: &[u8; 4],
    version: u32,
) -> Result<(), NnError> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(NnError::Checkpoint(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let v = read_u32(r)?;
    if v != version {
        return Err(NnError::Checkpoint(format!("unsupported version {v}")));
    }
    Ok(())
}

fn dim(v: usize) -> Result<u32, NnError> {
    u32::try_from(v).map_err(|_| NnError::Checkpoint(format!("dimension {v} exceeds u32")))
}

impl DenseNet {
    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> Result<(), NnError> {
        w.write_all(NET_MAGIC)?;
        write_u32(w, NET_VERSION)?;
        write_f64(w, self.dropout_rate())?;
        write_u32(w, dim(self.dropout_after().len())?)?;
        for &i in self.dropout_after() {
            write_u32(w, dim(i)?)?;
        }
        write_u32(w, dim(self.layers().len())?)?;
        for layer in self.layers() {
            write_u32(w, dim(layer.in_dim())?)?;
            write_u32(w, dim(layer.out_dim())?)?;
            w.write_all(&[layer.activation().code()])?;
            for &v in layer.weights().iter() {
                write_f64(w, v)?;
            }
            for &v in layer.biases().iter() {
                write_f64(w, v)?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<DenseNet, NnError> {
        expect_magic(r, NET_MAGIC, NET_VERSION)?;
        let dropout_rate = read_f64(r)?;
        let n_dropout = read_u32(r)? as usize;
        let mut dropout_after = BTreeSet::new();
        for _ in 0..n_dropout {
            dropout_after.insert(read_u32(r)? as usize);
        }
        let n_layers = read_u32(r)? as usize;
        let mut layers = Vec::with_capacity(n_layers.min(64));
        for _ in 0..n_layers {
            let in_dim = read_u32(r)? as usize;
            let out_dim = read_u32(r)? as usize;
            let mut code = [0u8; 1];
            r.read_exact(&mut code)?;
            let activation = Activation::from_code(code[0]).ok_or_else(|| {
                NnError::Checkpoint(format!("unknown activation code {}", code[0]))
            })?;
            let mut w = Vec::with_capacity(out_dim * in_dim);
            for _ in 0..out_dim * in_dim {
                w.push(read_f64(r)?);
            }
            let mut b = Vec::with_capacity(out_dim);
            for _ in 0..out_dim {
                b.push(read_f64(r)?);
            }
            let weights = Array2::from_shape_vec((out_dim, in_dim), w)
                .map_err(|e| NnError::Checkpoint(e.to_string()))?;
            layers.push(DenseLayer::new(weights, Array1::from(b), activation)?);
        }
        DenseNet::new(layers, dropout_rate, dropout_after)
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }
}
