use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_classifier, ArchitectureSpec, Classifier, Real};
use crate::codec::{read_blob, write_blob};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DUCACKPT";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    spec: ArchitectureSpec,
    num_classes: usize,
    dtype: String,
    tensors: Vec<TensorMeta>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

/// Serializes every state tensor bit-exactly (little endian).
pub fn encode_checkpoint<F: Real>(net: &Classifier<F>) -> Vec<u8> {
    let state = net.state();
    let header = Header {
        spec: net.spec().clone(),
        num_classes: net.num_classes(),
        dtype: F::DTYPE.to_string(),
        tensors: state
            .iter()
            .map(|(name, t)| TensorMeta { name: name.clone(), shape: t.shape().to_vec() })
            .collect(),
    };
    let mut payload = Vec::with_capacity(net.num_parameters() * F::BYTES);
    for (_, t) in &state {
        for &v in t.iter() {
            v.write_le(&mut payload);
        }
    }
    write_blob(MAGIC, &header, &payload)
}

pub fn decode_checkpoint<F: Real>(bytes: &[u8]) -> Result<Classifier<F>> {
    let (header, payload): (Header, &[u8]) = read_blob(MAGIC, bytes)?;
    if header.dtype != F::DTYPE {
        return Err(Error::format(format!("checkpoint dtype {} does not match {}", header.dtype, F::DTYPE)));
    }
    header.spec.validate()?;
    let declared: usize = header
        .tensors
        .iter()
        .try_fold(0usize, |acc, t| {
            t.shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).and_then(|n| acc.checked_add(n))
        })
        .ok_or_else(|| Error::format("tensor sizes overflow"))?;
    if declared.checked_mul(F::BYTES) != Some(payload.len()) {
        return Err(Error::format(format!(
            "payload holds {} bytes, header declares {declared} values",
            payload.len()
        )));
    }
    let mut net: Classifier<F> = build_classifier(&header.spec, header.num_classes, 0)?;
    let expected: Vec<TensorMeta> = net
        .state()
        .iter()
        .map(|(name, t)| TensorMeta { name: name.clone(), shape: t.shape().to_vec() })
        .collect();
    if expected != header.tensors {
        return Err(Error::format("tensor layout does not match the declared architecture"));
    }
    let mut chunks = payload.chunks_exact(F::BYTES);
    for t in net.state_mut() {
        for v in t.iter_mut() {
            *v = F::read_le(chunks.next().expect("length checked"));
        }
    }
    Ok(net)
}

pub fn save_checkpoint<F: Real>(net: &Classifier<F>, path: &Path) -> Result<()> {
    crate::codec::write_atomic(path, &encode_checkpoint(net))
}

pub fn load_checkpoint<F: Real>(path: &Path) -> Result<Classifier<F>> {
    let bytes = fs::read(path).map_err(Error::at_path(path))?;
    decode_checkpoint(&bytes)
}
