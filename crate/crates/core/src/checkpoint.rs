//! Versioned model checkpoints: a self-describing JSON manifest next to a
//! binary blob of raw little-endian 64-bit floats.
//!
//! `save("model.ckpt", ...)` writes `model.ckpt.json` and `model.ckpt.bin`.
//! The manifest carries the format version, architecture, schema (with a
//! digest), vocabularies, hyper-parameters, batch-norm fitted flags and the
//! tensor directory; the blob holds tensor data in directory order.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::{FeatureSchema, FieldVocab, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{Architecture, HyperParams, ModelGraph};
use crate::scalar::Scalar;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    arch: String,
    schema_digest: String,
    schema: FeatureSchema,
    vocab: Vec<Option<Vec<String>>>,
    hyper: HyperParams,
    bn_fitted: Vec<bool>,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn schema_digest(schema: &FeatureSchema) -> Result<String> {
    let json = serde_json::to_string(schema)
        .map_err(|e| Error::Checkpoint(format!("schema serialization: {e}")))?;
    Ok(format!("fnv1a64:{:016x}", fnv1a64(json.as_bytes())))
}

/// Manifest and blob paths for a checkpoint base path; a trailing `.json`
/// is stripped first so both spellings address the same pair.
pub fn checkpoint_paths(path: &Path) -> (PathBuf, PathBuf) {
    let s = path.to_string_lossy();
    let base = s.strip_suffix(".json").unwrap_or(&s).to_string();
    (
        PathBuf::from(format!("{base}.json")),
        PathBuf::from(format!("{base}.bin")),
    )
}

pub fn save<F: Scalar>(graph: &mut ModelGraph<F>, path: &Path) -> Result<()> {
    let (json_path, bin_path) = checkpoint_paths(path);
    let vocab: Vec<Option<Vec<String>>> = graph
        .vocab
        .per_field
        .iter()
        .map(|v| v.as_ref().map(|fv| fv.tokens().to_vec()))
        .collect();
    let mut manifest = Manifest {
        format_version: FORMAT_VERSION,
        arch: graph.arch.as_str().to_string(),
        schema_digest: schema_digest(&graph.schema)?,
        schema: graph.schema.clone(),
        vocab,
        hyper: graph.hyper.clone(),
        bn_fitted: graph.bn_fitted_flags(),
        tensors: Vec::new(),
    };

    let mut blob: Vec<u8> = Vec::new();
    for (name, tensor) in graph.named_tensors_mut() {
        manifest.tensors.push(TensorEntry {
            name,
            shape: [tensor.rows(), tensor.cols()],
        });
        for &v in tensor.data() {
            blob.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
    }

    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Checkpoint(format!("manifest serialization: {e}")))?;
    fs::File::create(&json_path)?.write_all(json.as_bytes())?;
    fs::File::create(&bin_path)?.write_all(&blob)?;
    Ok(())
}

pub fn load<F: Scalar>(path: &Path) -> Result<ModelGraph<F>> {
    let (json_path, bin_path) = checkpoint_paths(path);
    let json = fs::read_to_string(&json_path)
        .map_err(|e| Error::Checkpoint(format!("cannot read manifest {}: {e}", json_path.display())))?;
    let manifest: Manifest = serde_json::from_str(&json)
        .map_err(|e| Error::Checkpoint(format!("malformed manifest {}: {e}", json_path.display())))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {} is not supported (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let digest = schema_digest(&manifest.schema)?;
    if digest != manifest.schema_digest {
        return Err(Error::Checkpoint(format!(
            "schema digest mismatch: manifest says {}, schema hashes to {digest}",
            manifest.schema_digest
        )));
    }
    if manifest.vocab.len() != manifest.schema.field_count() {
        return Err(Error::Checkpoint(format!(
            "vocabulary covers {} fields, schema has {}",
            manifest.vocab.len(),
            manifest.schema.field_count()
        )));
    }
    let vocab = Vocabulary {
        per_field: manifest
            .vocab
            .iter()
            .map(|v| v.clone().map(FieldVocab::from_tokens))
            .collect(),
    };
    let arch = Architecture::parse(&manifest.arch)?;
    let mut graph = ModelGraph::build(arch, manifest.schema.clone(), vocab, manifest.hyper.clone(), 0)?;

    let expected_bytes: usize = manifest
        .tensors
        .iter()
        .map(|t| t.shape[0] * t.shape[1] * 8)
        .sum();
    let mut blob = Vec::new();
    fs::File::open(&bin_path)
        .map_err(|e| Error::Checkpoint(format!("cannot read blob {}: {e}", bin_path.display())))?
        .read_to_end(&mut blob)?;
    if blob.len() != expected_bytes {
        return Err(Error::Checkpoint(format!(
            "blob {} holds {} bytes but the manifest describes {expected_bytes} (truncated or stale file)",
            bin_path.display(),
            blob.len()
        )));
    }

    // Decode blob in directory order.
    let mut values: Vec<(String, [usize; 2], Vec<f64>)> = Vec::with_capacity(manifest.tensors.len());
    let mut offset = 0;
    for entry in &manifest.tensors {
        let count = entry.shape[0] * entry.shape[1];
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            let mut buf = [0u8; 8];
            buf.copy_from_slice(&blob[offset..offset + 8]);
            data.push(f64::from_le_bytes(buf));
            offset += 8;
        }
        values.push((entry.name.clone(), entry.shape, data));
    }

    {
        let mut targets = graph.named_tensors_mut();
        if targets.len() != values.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors, model expects {}",
                values.len(),
                targets.len()
            )));
        }
        for (name, tensor) in targets.iter_mut() {
            let (entry_name, shape, data) = values
                .iter()
                .find(|(n, _, _)| n == name)
                .ok_or_else(|| Error::Checkpoint(format!("tensor {name} missing from checkpoint")))?;
            if [tensor.rows(), tensor.cols()] != *shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {entry_name}: checkpoint shape {}x{} does not match model shape {}x{}",
                    shape[0],
                    shape[1],
                    tensor.rows(),
                    tensor.cols()
                )));
            }
            for (dst, &src) in tensor.data_mut().iter_mut().zip(data) {
                *dst = F::from_f64_lossy(src);
            }
        }
    }
    graph.set_bn_fitted_flags(&manifest.bn_fitted)?;
    graph.set_training(false);
    Ok(graph)
}
