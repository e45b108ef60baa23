//! Binary model checkpoints: a magic tag, a JSON header describing the
//! tensors, then raw little-endian payload bytes.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::io::IoError;
use crate::model::ModelConfig;
use crate::nn::{AdamConfig, AdamState, ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"P2G1";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TensorKind {
    Param,
    AdamM,
    AdamV,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    kind: TensorKind,
    shape: Vec<usize>,
    dtype: Dtype,
    /// Element offset into the payload.
    offset: usize,
    /// Element count.
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    seed: u64,
    config: ModelConfig,
    optimizer: Option<OptimizerMeta>,
    manifest: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct OptimizerMeta {
    adam: AdamConfig,
    steps: u64,
}

/// Everything a checkpoint restores.
#[derive(Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub optimizer: Option<AdamState>,
}

/// Errors when a loaded config does not match the expected one, naming the
/// differing fields.
pub fn ensure_config_matches(expected: &ModelConfig, found: &ModelConfig) -> Result<(), IoError> {
    let diff = expected.diff(found);
    if diff.is_empty() {
        Ok(())
    } else {
        Err(IoError::ConfigMismatch(diff.join(", ")))
    }
}

/// Writes parameters (and optionally optimizer state) with the model config
/// they belong to. Byte output is a pure function of the inputs.
pub fn save_checkpoint(
    path: &Path,
    config: &ModelConfig,
    params: &ParamStore,
    optimizer: Option<&AdamState>,
) -> Result<(), IoError> {
    let mut manifest = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    let mut offset = 0usize;
    let mut push = |manifest: &mut Vec<ManifestEntry>,
                    payload: &mut Vec<u8>,
                    name: &str,
                    kind: TensorKind,
                    t: &Tensor| {
        manifest.push(ManifestEntry {
            name: name.to_string(),
            kind,
            shape: t.shape().to_vec(),
            dtype: Dtype::F64,
            offset,
            len: t.numel(),
        });
        for &v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        offset += t.numel();
    };
    for (name, t) in params.iter() {
        push(&mut manifest, &mut payload, name, TensorKind::Param, t);
    }
    if let Some(opt) = optimizer {
        let (m, v) = opt.moments();
        for (name, t) in m {
            push(&mut manifest, &mut payload, name, TensorKind::AdamM, t);
        }
        for (name, t) in v {
            push(&mut manifest, &mut payload, name, TensorKind::AdamV, t);
        }
    }
    let header = Header {
        version: CHECKPOINT_VERSION,
        seed: params.seed(),
        config: config.clone(),
        optimizer: optimizer.map(|o| OptimizerMeta {
            adam: *o.config(),
            steps: o.steps_taken(),
        }),
        manifest,
    };
    let header_json = serde_json::to_vec(&header).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })?;
    let mut bytes = Vec::with_capacity(8 + header_json.len() + payload.len());
    bytes.extend_from_slice(&CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    bytes.extend_from_slice(&payload);
    fs::write(path, bytes)?;
    Ok(())
}

fn corrupt(path: &Path, reason: impl Into<String>) -> IoError {
    IoError::CorruptCheckpoint {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, IoError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 || bytes[..4] != CHECKPOINT_MAGIC {
        return Err(corrupt(path, "missing magic bytes"));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let payload_start = 8 + header_len;
    if payload_start > bytes.len() {
        return Err(corrupt(
            path,
            format!("header claims {header_len} bytes, file is too short"),
        ));
    }
    let header: Header = serde_json::from_slice(&bytes[8..payload_start])
        .map_err(|e| corrupt(path, format!("bad header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(corrupt(
            path,
            format!(
                "version {} (this build reads {CHECKPOINT_VERSION})",
                header.version
            ),
        ));
    }
    let payload = &bytes[payload_start..];

    let mut params = ParamStore::new(header.seed);
    let mut adam_m: IndexMap<String, Tensor> = IndexMap::new();
    let mut adam_v: IndexMap<String, Tensor> = IndexMap::new();
    for entry in &header.manifest {
        let expected: usize = entry.shape.iter().product();
        if expected != entry.len {
            return Err(corrupt(
                path,
                format!(
                    "tensor {:?} declares shape {:?} but {} elements",
                    entry.name, entry.shape, entry.len
                ),
            ));
        }
        let start = entry
            .offset
            .checked_mul(entry.dtype.size())
            .ok_or_else(|| corrupt(path, "offset overflow"))?;
        let end = start
            .checked_add(entry.len * entry.dtype.size())
            .ok_or_else(|| corrupt(path, "length overflow"))?;
        if end > payload.len() {
            return Err(corrupt(
                path,
                format!("tensor {:?} runs past the payload", entry.name),
            ));
        }
        let raw = &payload[start..end];
        let data: Vec<f64> = match entry.dtype {
            Dtype::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            Dtype::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        };
        let t = Tensor::new(entry.shape.clone(), data);
        match entry.kind {
            TensorKind::Param => params
                .insert(&entry.name, t)
                .map_err(|e| corrupt(path, e.to_string()))?,
            TensorKind::AdamM => {
                if adam_m.insert(entry.name.clone(), t).is_some() {
                    return Err(corrupt(path, format!("duplicate moment {:?}", entry.name)));
                }
            }
            TensorKind::AdamV => {
                if adam_v.insert(entry.name.clone(), t).is_some() {
                    return Err(corrupt(path, format!("duplicate moment {:?}", entry.name)));
                }
            }
        }
    }
    let optimizer = header
        .optimizer
        .map(|meta| AdamState::from_raw(meta.adam, meta.steps, adam_m, adam_v));
    Ok(Checkpoint {
        config: header.config,
        params,
        optimizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_model;
    use crate::nn::GradMap;

    fn small_config() -> ModelConfig {
        ModelConfig {
            hidden_dim: 4,
            n_node_classes: 2,
            ..ModelConfig::default()
        }
    }

    fn stepped_state(params: &mut ParamStore) -> AdamState {
        let mut opt = AdamState::new(AdamConfig::default());
        let mut grads = GradMap::new();
        let (name, t) = params.iter().next().map(|(n, t)| (n.to_string(), t.clone())).unwrap();
        grads.insert(name, Tensor::new(t.shape().to_vec(), vec![0.5; t.numel()]));
        opt.step(params, &grads, 1.0).unwrap();
        opt
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let cfg = small_config();
        let mut params = init_model(&cfg, 17).unwrap();
        let opt = stepped_state(&mut params);
        save_checkpoint(&path, &cfg, &params, Some(&opt)).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.config, cfg);
        assert_eq!(loaded.params, params);
        assert_eq!(loaded.optimizer.as_ref().unwrap(), &opt);

        // Saving the loaded state reproduces the file byte for byte.
        let again = dir.path().join("again.ckpt");
        save_checkpoint(&again, &loaded.config, &loaded.params, loaded.optimizer.as_ref())
            .unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    }

    #[test]
    fn optimizer_is_optional() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.ckpt");
        let cfg = small_config();
        let params = init_model(&cfg, 3).unwrap();
        save_checkpoint(&path, &cfg, &params, None).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert!(loaded.optimizer.is_none());
        assert_eq!(loaded.params, params);
    }

    #[test]
    fn truncated_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let cfg = small_config();
        let params = init_model(&cfg, 1).unwrap();
        save_checkpoint(&path, &cfg, &params, None).unwrap();
        let bytes = fs::read(&path).unwrap();
        let cut = dir.path().join("cut.ckpt");
        fs::write(&cut, &bytes[..bytes.len() - 9]).unwrap();
        let err = load_checkpoint(&cut).unwrap_err();
        assert!(matches!(err, IoError::CorruptCheckpoint { .. }), "{err}");
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not.ckpt");
        fs::write(&path, b"nope, not a checkpoint").unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn config_mismatch_names_fields() {
        let a = small_config();
        let mut b = a.clone();
        b.hidden_dim = 7;
        b.gnn_residual = false;
        let err = ensure_config_matches(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("hidden_dim") && msg.contains("gnn_residual"), "{msg}");
        assert!(ensure_config_matches(&a, &a).is_ok());
    }
}
