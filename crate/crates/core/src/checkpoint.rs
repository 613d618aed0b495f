//! Binary checkpoint files.
//!
//! Layout: the 8-byte magic `CCBCKPT\0`, a little-endian `u32` format
//! version, a little-endian `u32` byte length followed by a JSON header,
//! then every parameter as a little-endian `f64` in header order. Values
//! round-trip bit-for-bit for both `f32` and `f64` models.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::LrParameters;
use crate::ccb::{CcbModel, TrainingConfig};
use crate::policy::{PolicyParameters, NUM_ACTIONS};
use crate::{Error, Result, Scalar};

const MAGIC: &[u8; 8] = b"CCBCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Header {
    Ccb {
        scalar: String,
        step: u64,
        input_dim: usize,
        hidden_dim: usize,
        config: TrainingConfig,
    },
    Lr {
        scalar: String,
        dim: usize,
    },
}

/// `step-<t>.ckpt`
pub fn checkpoint_file_name(step: u64) -> String {
    format!("step-{step}.ckpt")
}

pub fn checkpoint_path(run_dir: &Path, step: u64) -> PathBuf {
    run_dir.join(checkpoint_file_name(step))
}

fn scalar_name<T: Scalar>() -> String {
    std::any::type_name::<T>().to_string()
}

fn write_header<W: Write>(w: &mut W, header: &Header) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R) -> Result<Header> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let len = read_u32(r)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    Ok(serde_json::from_slice(&json)?)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn write_values<'a, T: Scalar, W: Write>(w: &mut W, values: impl IntoIterator<Item = &'a T>) -> Result<()> {
    for v in values {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    Ok(())
}

fn read_values<T: Scalar, R: Read>(r: &mut R, n: usize) -> Result<Vec<T>> {
    let mut buf = [0u8; 8];
    (0..n)
        .map(|_| {
            r.read_exact(&mut buf)?;
            let v = f64::from_le_bytes(buf);
            if !v.is_finite() {
                return Err(Error::Checkpoint("non-finite parameter in checkpoint".into()));
            }
            Ok(T::of(v))
        })
        .collect()
}

fn read_policy<T: Scalar, R: Read>(r: &mut R, input_dim: usize, hidden_dim: usize) -> Result<PolicyParameters<T>> {
    Ok(PolicyParameters {
        input_dim,
        hidden_dim,
        w1: read_values(r, hidden_dim * input_dim)?,
        b1: read_values(r, hidden_dim)?,
        w2: read_values(r, NUM_ACTIONS * hidden_dim)?,
        b2: read_values(r, NUM_ACTIONS)?,
    })
}

fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(Error::Checkpoint("trailing bytes after checkpoint payload".into())),
    }
}

pub fn write_ccb<T: Scalar, W: Write>(mut w: W, model: &CcbModel<T>) -> Result<()> {
    write_header(
        &mut w,
        &Header::Ccb {
            scalar: scalar_name::<T>(),
            step: model.step,
            input_dim: model.input_dim(),
            hidden_dim: model.policy0.hidden_dim,
            config: model.config.clone(),
        },
    )?;
    write_values(&mut w, model.policy0.iter())?;
    write_values(&mut w, model.policy1.iter())?;
    w.flush()?;
    Ok(())
}

pub fn read_ccb<T: Scalar, R: Read>(mut r: R) -> Result<CcbModel<T>> {
    match read_header(&mut r)? {
        Header::Ccb {
            step,
            input_dim,
            hidden_dim,
            config,
            ..
        } => {
            let policy0 = read_policy(&mut r, input_dim, hidden_dim)?;
            let policy1 = read_policy(&mut r, input_dim, hidden_dim)?;
            expect_eof(&mut r)?;
            let mut model = CcbModel::from_policies(policy0, policy1, config)?;
            model.step = step;
            Ok(model)
        }
        Header::Lr { .. } => Err(Error::Checkpoint("expected a bandit checkpoint, found a logistic one".into())),
    }
}

pub fn write_lr<T: Scalar, W: Write>(mut w: W, params: &LrParameters<T>) -> Result<()> {
    write_header(
        &mut w,
        &Header::Lr {
            scalar: scalar_name::<T>(),
            dim: params.weights.len(),
        },
    )?;
    write_values(&mut w, params.weights.iter().chain(std::iter::once(&params.bias)))?;
    w.flush()?;
    Ok(())
}

pub fn read_lr<T: Scalar, R: Read>(mut r: R) -> Result<LrParameters<T>> {
    match read_header(&mut r)? {
        Header::Lr { dim, .. } => {
            let mut weights = read_values(&mut r, dim + 1)?;
            let bias = weights.pop().expect("dim + 1 values were read");
            expect_eof(&mut r)?;
            Ok(LrParameters { weights, bias })
        }
        Header::Ccb { .. } => Err(Error::Checkpoint("expected a logistic checkpoint, found a bandit one".into())),
    }
}

pub fn save_ccb<T: Scalar>(path: &Path, model: &CcbModel<T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    write_ccb(BufWriter::new(file), model)
}

pub fn load_ccb<T: Scalar>(path: &Path) -> Result<CcbModel<T>> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_ccb(BufReader::new(file))
}

pub fn save_lr<T: Scalar>(path: &Path, params: &LrParameters<T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    write_lr(BufWriter::new(file), params)
}

pub fn load_lr<T: Scalar>(path: &Path) -> Result<LrParameters<T>> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_lr(BufReader::new(file))
}
