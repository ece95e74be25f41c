//! Checkpoint format: one JSON header line `{"config", "tensors": [{name, shape, offset}]}`
//! terminated by `\n`, then every tensor as raw little-endian `f64`, row-major, in manifest order.
//! `offset` is the byte offset of a tensor from the start of the data section.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::params::{ModelParams, ParamId};
use super::{ModelConfig, ModelError};
use crate::tensor::Matrix;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint manifest: {0}")]
    Manifest(String),
    #[error("checkpoint model: {0}")]
    Model(#[from] ModelError),
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

pub fn write_checkpoint<T: Scalar, W: Write>(params: &ModelParams<T>, mut out: W) -> Result<(), CheckpointError> {
    let mut offset = 0u64;
    let tensors = ParamId::ALL
        .iter()
        .map(|&id| {
            let t = params.get(id);
            let entry = TensorEntry { name: id.name().to_owned(), shape: [t.rows(), t.cols()], offset };
            offset += (t.as_slice().len() * 8) as u64;
            entry
        })
        .collect();
    let header = Header { config: params.config().clone(), tensors };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for t in params.tensors() {
        let mut buf = Vec::with_capacity(t.as_slice().len() * 8);
        for &x in t.as_slice() {
            buf.extend_from_slice(&x.as_f64().to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<T: Scalar, R: BufRead>(mut input: R) -> Result<ModelParams<T>, CheckpointError> {
    let mut line = Vec::new();
    input.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(CheckpointError::Manifest("missing header terminator".into()));
    }
    let header: Header = serde_json::from_slice(&line[..line.len() - 1])?;
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;

    let mut tensors: Vec<Option<Matrix<T>>> = vec![None; ParamId::ALL.len()];
    for entry in &header.tensors {
        let id = ParamId::from_name(&entry.name)
            .ok_or_else(|| CheckpointError::Manifest(format!("unknown tensor {:?}", entry.name)))?;
        let [rows, cols] = entry.shape;
        let start = usize::try_from(entry.offset).map_err(|_| CheckpointError::Manifest("offset overflow".into()))?;
        let end = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(start))
            .ok_or_else(|| CheckpointError::Manifest(format!("{}: size overflow", entry.name)))?;
        let bytes = data
            .get(start..end)
            .ok_or_else(|| CheckpointError::Manifest(format!("{}: data section too short", entry.name)))?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
            .collect();
        if tensors[id.index()].replace(Matrix::from_vec(rows, cols, values)).is_some() {
            return Err(CheckpointError::Manifest(format!("duplicate tensor {:?}", entry.name)));
        }
    }
    let tensors = tensors
        .into_iter()
        .zip(ParamId::ALL)
        .map(|(t, id)| t.ok_or_else(|| CheckpointError::Manifest(format!("missing tensor {:?}", id.name()))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ModelParams::from_tensors(header.config, tensors)?)
}
