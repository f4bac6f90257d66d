//! Checkpoint directories: `model.json` (architecture, seed, frozen groups
//! and tensor index) plus one `TNS1` file per tensor.
//!
//! The container only holds rank-2 and rank-3 tensors, so every tensor is
//! stored as `[shape[0], rest]` and its logical shape lives in the index.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ArchDescriptor, Group, ModelParams};
use super::{FusenetError, Result};
use crate::imagery::{read_tensor_file, write_tensor_file, FloatTensor};

pub const MODEL_FILE: &str = "model.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub group: Group,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointIndex {
    pub format: u32,
    pub version: String,
    pub arch: ArchDescriptor,
    pub seed: u64,
    pub frozen: Vec<Group>,
    pub tensors: Vec<TensorEntry>,
}

fn storage_dims(shape: &[usize]) -> Vec<usize> {
    match shape {
        [n] => vec![1, *n],
        [a, rest @ ..] => vec![*a, rest.iter().product()],
        [] => vec![1, 1],
    }
}

/// Writes `params` into `dir` (created if needed). Values are rounded to
/// `f32`.
pub fn save(dir: &Path, params: &ModelParams) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut tensors = Vec::new();
    let mut failure = None;
    params.for_each(|name, group, t| {
        let file = format!("{name}.tns");
        let stored = FloatTensor::from_f64(storage_dims(t.shape()), t.data()).expect("dims match data");
        if let Err(e) = write_tensor_file(&dir.join(&file), &stored, None) {
            failure.get_or_insert(e);
        }
        tensors.push(TensorEntry { name: name.to_string(), group, shape: t.shape().to_vec(), file });
    });
    if let Some(e) = failure {
        return Err(e.into());
    }
    let index = CheckpointIndex {
        format: 1,
        version: crate::VERSION.to_string(),
        arch: params.arch.clone(),
        seed: params.seed,
        frozen: params.frozen.clone(),
        tensors,
    };
    fs::write(dir.join(MODEL_FILE), serde_json::to_string_pretty(&index)? + "\n")?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<ModelParams> {
    let index: CheckpointIndex = serde_json::from_slice(&fs::read(dir.join(MODEL_FILE))?)?;
    let mut params = ModelParams::init(index.arch.clone(), index.seed);
    params.frozen = index.frozen.clone();
    let mut expected = Vec::new();
    params.for_each(|name, _, t| expected.push((name.to_string(), t.shape().to_vec())));
    if expected.len() != index.tensors.len() {
        return Err(FusenetError::Checkpoint(format!("expected {} tensors, index lists {}", expected.len(), index.tensors.len())));
    }
    let mut loaded = Vec::with_capacity(expected.len());
    for ((name, shape), entry) in expected.iter().zip(&index.tensors) {
        if *name != entry.name || *shape != entry.shape {
            return Err(FusenetError::Checkpoint(format!("tensor {} does not match architecture ({name} {shape:?})", entry.name)));
        }
        let t = read_tensor_file(&dir.join(&entry.file))?;
        if t.dims() != storage_dims(shape).as_slice() {
            return Err(FusenetError::Checkpoint(format!("{}: stored dims {:?}", entry.name, t.dims())));
        }
        loaded.push(t.to_f64());
    }
    let mut i = 0;
    params.for_each_mut(|_, _, t| {
        t.data_mut().copy_from_slice(&loaded[i]);
        i += 1;
    });
    if !params.is_finite() {
        return Err(FusenetError::Checkpoint("non-finite parameter".into()));
    }
    Ok(params)
}

/// Directory of the shipped foundation stand-in checkpoint.
pub fn foundation_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets").join("foundation")
}

/// Loads the shipped foundation stand-in.
pub fn load_foundation() -> Result<ModelParams> {
    load(&foundation_dir())
}
