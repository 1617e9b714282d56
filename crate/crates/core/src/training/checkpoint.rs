//! Zip checkpoint: `meta.json`, one f32 blob per parameter / running-statistics
//! tensor under `tensors/`, and the Adam moments as f64 blobs under `optimizer/`.
//!
//! Parameters live on the f32 grid, so the f32 blobs are exact. Moments are not,
//! hence f64 for them: resumed training replays the uninterrupted run bit for bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, Write};
use std::path::Path;

use ndarray::{ArrayD, ArrayViewD, ArrayViewMutD, IxDyn};
use serde::{Deserialize, Serialize};
use zip::{ZipArchive, ZipWriter};

use super::optim::Adam;
use super::trainer::{EpochRecord, TrainConfig, TrainState};
use crate::data::archive::{entry_options, f32_from_le, f32_le_bytes, read_entry};
use crate::error::{Error, Result};
use crate::model::{ModelParameters, Params};
use crate::rng::RandomSource;
use crate::types::{FeatureSpec, ModelConfig, PerModality};

pub const CHECKPOINT_VERSION: &str = "avmc-checkpoint/1";
const META: &str = "meta.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    version: String,
    model: ModelConfig,
    specs: PerModality<FeatureSpec>,
    train: TrainConfig,
    seed: u64,
    epoch: usize,
    steps: u64,
    best_valid_mae: Option<f64>,
    optimizer_step: u64,
    tensors: Vec<TensorRecord>,
    history: Vec<EpochRecord>,
    loss_trace: Vec<f64>,
}

fn tensor_path(name: &str) -> String {
    format!("tensors/{name}.f32")
}

fn moment_path(which: &str, name: &str) -> String {
    format!("optimizer/{which}/{name}.f64")
}

fn visit_all(params: &ModelParameters, f: &mut dyn FnMut(String, ArrayViewD<'_, f64>)) {
    params.weights.visit("", f);
    params.visit_state(f);
}

fn visit_all_mut(params: &mut ModelParameters, f: &mut dyn FnMut(String, ArrayViewMutD<'_, f64>)) {
    params.weights.visit_mut("", f);
    params.visit_state_mut(f);
}

/// Writes a checkpoint; the bytes are a pure function of the state.
pub fn write_checkpoint_to<W: Write + Seek>(state: &TrainState, writer: W) -> Result<W> {
    let mut tensors = Vec::new();
    let mut blobs = Vec::new();
    visit_all(&state.params, &mut |name, t| {
        blobs.push((tensor_path(&name), f32_le_bytes(t.iter().map(|&x| x as f32))));
        tensors.push(TensorRecord {
            name,
            shape: t.shape().to_vec(),
        });
    });
    let weight_names = state.params.weights.tensor_names();
    for (which, moments) in [("first", &state.optimizer.first), ("second", &state.optimizer.second)] {
        for (name, m) in weight_names.iter().zip(moments) {
            let bytes: Vec<u8> = m.iter().flat_map(|x| x.to_le_bytes()).collect();
            blobs.push((moment_path(which, name), bytes));
        }
    }
    let meta = Meta {
        version: CHECKPOINT_VERSION.to_string(),
        model: state.params.config.clone(),
        specs: state.params.specs.clone(),
        train: state.config.clone(),
        seed: state.seed,
        epoch: state.epoch,
        steps: state.steps,
        best_valid_mae: state.best_valid_mae,
        optimizer_step: state.optimizer.step,
        tensors,
        history: state.history.clone(),
        loss_trace: state.loss_trace.clone(),
    };

    let mut zip = ZipWriter::new(writer);
    zip.start_file(META, entry_options())?;
    zip.write_all(&serde_json::to_vec_pretty(&meta)?)
        .map_err(|e| Error::Format(format!("writing {META}: {e}")))?;
    for (path, bytes) in blobs {
        zip.start_file(path.as_str(), entry_options())?;
        zip.write_all(&bytes)
            .map_err(|e| Error::Format(format!("writing {path}: {e}")))?;
    }
    Ok(zip.finish()?)
}

pub fn save_checkpoint(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = write_checkpoint_to(state, BufWriter::new(file))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainState> {
    load(path.as_ref(), None)
}

/// Loads a checkpoint into a model built from `expected`, so any architectural
/// difference surfaces as a validation error naming the first offending tensor.
pub fn load_checkpoint_expecting(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<TrainState> {
    load(path.as_ref(), Some(expected))
}

pub fn read_checkpoint<R: Read + Seek>(reader: R, expected: Option<&ModelConfig>) -> Result<TrainState> {
    let mut zip = ZipArchive::new(reader)?;
    let meta_bytes = read_entry(&mut zip, META)?.ok_or_else(|| Error::Format(format!("checkpoint has no {META}")))?;
    let meta: Meta = serde_json::from_slice(&meta_bytes).map_err(|e| Error::Format(format!("{META}: {e}")))?;
    if meta.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version `{}` (expected `{CHECKPOINT_VERSION}`)",
            meta.version
        )));
    }

    let declared: BTreeMap<&str, &[usize]> = meta.tensors.iter().map(|t| (t.name.as_str(), t.shape.as_slice())).collect();
    let mut blobs = BTreeMap::new();
    for t in &meta.tensors {
        let path = tensor_path(&t.name);
        let bytes = read_entry(&mut zip, &path)?.ok_or_else(|| Error::Format(format!("checkpoint is missing {path}")))?;
        let n: usize = t.shape.iter().product();
        if bytes.len() != 4 * n {
            return Err(Error::Format(format!(
                "tensor `{}` holds {} bytes, shape {:?} needs {}",
                t.name,
                bytes.len(),
                t.shape,
                4 * n
            )));
        }
        blobs.insert(t.name.clone(), f32_from_le(&bytes));
    }

    let config = expected.unwrap_or(&meta.model);
    // Initial values are irrelevant: every tensor is overwritten below.
    let mut params = ModelParameters::init(config, &meta.specs, &mut RandomSource::new(0))?;
    let mut expected_names = Vec::new();
    visit_all(&params, &mut |name, t| expected_names.push((name, t.shape().to_vec())));
    for (name, shape) in &expected_names {
        match declared.get(name.as_str()) {
            None => {
                return Err(Error::Validation(format!("checkpoint has no tensor `{name}`")));
            }
            Some(found) if *found != shape.as_slice() => {
                return Err(Error::Validation(format!(
                    "tensor `{name}` has shape {found:?} in the checkpoint, the model expects {shape:?}"
                )));
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = declared.keys().find(|k| !expected_names.iter().any(|(n, _)| n == *k)) {
        return Err(Error::Validation(format!("checkpoint tensor `{extra}` does not belong to the model")));
    }
    visit_all_mut(&mut params, &mut |name, mut t| {
        let values = &blobs[&name];
        t.iter_mut().zip(values).for_each(|(w, &v)| *w = f64::from(v));
    });

    let mut optimizer = Adam::new(meta.train.optimizer, &params.weights);
    optimizer.step = meta.optimizer_step;
    let weight_shapes: Vec<(String, Vec<usize>)> = {
        let mut v = Vec::new();
        params.weights.visit("", &mut |name, t| v.push((name, t.shape().to_vec())));
        v
    };
    for (which, moments) in [("first", &mut optimizer.first), ("second", &mut optimizer.second)] {
        for ((name, shape), slot) in weight_shapes.iter().zip(moments.iter_mut()) {
            let path = moment_path(which, name);
            let bytes = read_entry(&mut zip, &path)?.ok_or_else(|| Error::Format(format!("checkpoint is missing {path}")))?;
            let n: usize = shape.iter().product();
            if bytes.len() != 8 * n {
                return Err(Error::Format(format!("{path} holds {} bytes, expected {}", bytes.len(), 8 * n)));
            }
            let values: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            *slot = ArrayD::from_shape_vec(IxDyn(shape), values).expect("length checked");
        }
    }

    Ok(TrainState {
        params,
        optimizer,
        config: meta.train,
        seed: meta.seed,
        epoch: meta.epoch,
        steps: meta.steps,
        best_valid_mae: meta.best_valid_mae,
        history: meta.history,
        loss_trace: meta.loss_trace,
    })
}

fn load(path: &Path, expected: Option<&ModelConfig>) -> Result<TrainState> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file), expected)
}
