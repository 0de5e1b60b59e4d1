//! JSON model checkpoints.
//!
//! ```text
//! { "format": "rewire-checkpoint", "version": 1,
//!   "arch": "gcn", "activation": "relu", "d_in": .., "hidden": .., "classes": ..,
//!   "tensors": [ { "name": "w1", "rows": .., "cols": .., "data": [row-major f64] }, .. ],
//!   "config": { TrainConfig }, "seed": .. }
//! ```
//!
//! Floats are written in shortest round-trip form, so save/load is lossless.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Activation, Architecture, ModelParams, TrainConfig};
use crate::error::{Error, Result};

const FORMAT: &str = "rewire-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stored {
    format: String,
    version: u32,
    arch: Architecture,
    activation: Activation,
    d_in: usize,
    hidden: usize,
    classes: usize,
    tensors: Vec<StoredTensor>,
    config: TrainConfig,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub config: TrainConfig,
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, config: &TrainConfig) -> Result<()> {
    let names = params.arch.param_names();
    let stored = Stored {
        format: FORMAT.into(),
        version: VERSION,
        arch: params.arch,
        activation: params.activation,
        d_in: params.d_in,
        hidden: params.hidden,
        classes: params.classes,
        tensors: params
            .tensors
            .iter()
            .zip(names)
            .map(|(t, name)| StoredTensor {
                name: (*name).into(),
                rows: t.nrows(),
                cols: t.ncols(),
                data: t.iter().copied().collect(),
            })
            .collect(),
        config: config.clone(),
        seed: config.seed,
    };
    fs::write(path, serde_json::to_string_pretty(&stored)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    let stored: Stored =
        serde_json::from_str(&text).map_err(|e| Error::load(path, e.to_string()))?;
    if stored.format != FORMAT {
        return Err(Error::load(path, format!("not a checkpoint ({})", stored.format)));
    }
    if stored.version != VERSION {
        return Err(Error::Version {
            found: stored.version,
            expected: VERSION,
        });
    }
    let names = stored.arch.param_names();
    if stored.tensors.len() != names.len()
        || stored.tensors.iter().zip(names).any(|(t, n)| t.name != *n)
    {
        return Err(Error::load(path, "tensor names do not match architecture"));
    }
    let tensors = stored
        .tensors
        .into_iter()
        .map(|t| {
            Array2::from_shape_vec((t.rows, t.cols), t.data)
                .map_err(|e| Error::load(path, format!("tensor {}: {e}", t.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    let params = ModelParams {
        arch: stored.arch,
        activation: stored.activation,
        d_in: stored.d_in,
        hidden: stored.hidden,
        classes: stored.classes,
        tensors,
    };
    params.validate()?;
    Ok(Checkpoint {
        params,
        config: stored.config,
    })
}
