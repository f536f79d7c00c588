//! JSON checkpoints: a header with format version, game digest and step
//! counters, then every parameter and optimizer moment as a named array
//! with an explicit shape. Floats round-trip bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Moments, NetDims, NetParams};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("unsupported checkpoint format version {found} (expected {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("config digest mismatch: checkpoint has {found}, game has {expected}")]
    Digest { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetParams,
    pub moments: Moments,
    pub config_digest: String,
    /// Episodes completed when the checkpoint was written.
    pub episode: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config_digest: String,
    step_count: u64,
    episode: u64,
    dims: NetDims,
}

#[derive(Serialize, Deserialize)]
struct NamedArray {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct File {
    header: Header,
    params: Vec<NamedArray>,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let params = checkpoint
        .params
        .tensors()
        .into_iter()
        .map(|t| NamedArray {
            name: t.name.to_string(),
            shape: t.shape,
            data: t.data.to_vec(),
        })
        .collect();
    let file = File {
        header: Header {
            format_version: FORMAT_VERSION,
            config_digest: checkpoint.config_digest.clone(),
            step_count: checkpoint.moments.step_count,
            episode: checkpoint.episode,
            dims: checkpoint.params.dims,
        },
        params,
        first_moment: checkpoint.moments.first.clone(),
        second_moment: checkpoint.moments.second.clone(),
    };
    let text = serde_json::to_string(&file).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Loads a checkpoint. With `expected_digest` set, a different embedded
/// digest is an error; pass `None` to force loading.
pub fn load_checkpoint(path: impl AsRef<Path>, expected_digest: Option<&str>) -> Result<Checkpoint, CheckpointError> {
    let text = fs::read_to_string(path)?;
    let file: File = serde_json::from_str(&text).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    if file.header.format_version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            found: file.header.format_version,
        });
    }
    if let Some(expected) = expected_digest {
        if expected != file.header.config_digest {
            return Err(CheckpointError::Digest {
                expected: expected.to_string(),
                found: file.header.config_digest,
            });
        }
    }
    let mut params = NetParams::new(file.header.dims, 0);
    let shapes: Vec<(String, Vec<usize>)> = params
        .tensors()
        .into_iter()
        .map(|t| (t.name.to_string(), t.shape))
        .collect();
    if file.params.len() != shapes.len() {
        return Err(CheckpointError::Corrupt(format!(
            "expected {} tensors, found {}",
            shapes.len(),
            file.params.len()
        )));
    }
    for (((name, data), (_, shape)), stored) in params.tensors_mut().into_iter().zip(&shapes).zip(&file.params) {
        if stored.name != name || &stored.shape != shape || stored.data.len() != data.len() {
            return Err(CheckpointError::Corrupt(format!(
                "tensor `{}` {:?} does not match `{name}` {shape:?}",
                stored.name, stored.shape
            )));
        }
        data.copy_from_slice(&stored.data);
    }
    let n = params.parameter_count();
    if file.first_moment.len() != n || file.second_moment.len() != n {
        return Err(CheckpointError::Corrupt("optimizer moments have the wrong length".into()));
    }
    Ok(Checkpoint {
        params,
        moments: Moments {
            first: file.first_moment,
            second: file.second_moment,
            step_count: file.header.step_count,
        },
        config_digest: file.header.config_digest,
        episode: file.header.episode,
    })
}
