//! Zip feature archive: `manifest.json` plus one raw little-endian f32 blob per
//! instance and modality at `data/<id>/<modality>.f32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipArchive, ZipWriter};

use super::Dataset;
use crate::error::{Error, Result};
use crate::types::{FeatureSequence, FeatureSpec, Instance, LabelSet, ModalityKind, PerModality, Split};

pub const ARCHIVE_VERSION: &str = "avmc-feature-archive/1";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShapeRecord {
    seq_len: usize,
    feat_dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRecord {
    m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceRecord {
    id: String,
    split: Split,
    labels: Option<LabelRecord>,
    valid_len: PerModality<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: String,
    specs: PerModality<ShapeRecord>,
    instances: Vec<InstanceRecord>,
}

pub(crate) fn entry_options() -> SimpleFileOptions {
    SimpleFileOptions::default()
        .compression_method(CompressionMethod::Stored)
        .last_modified_time(DateTime::default())
}

pub(crate) fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\']) {
        return Err(Error::Validation(format!("instance id `{id}` is not usable as a path component")));
    }
    Ok(())
}

fn blob_path(id: &str, kind: ModalityKind) -> String {
    format!("data/{id}/{}.f32", kind.name())
}

pub(crate) fn f32_le_bytes(values: impl IntoIterator<Item = f32>) -> Vec<u8> {
    values.into_iter().flat_map(f32::to_le_bytes).collect()
}

pub(crate) fn f32_from_le(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

pub(crate) fn read_entry<R: Read + Seek>(zip: &mut ZipArchive<R>, name: &str) -> Result<Option<Vec<u8>>> {
    let mut entry = match zip.by_name(name) {
        Ok(e) => e,
        Err(zip::result::ZipError::FileNotFound) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let mut buf = Vec::with_capacity(entry.size() as usize);
    entry
        .read_to_end(&mut buf)
        .map_err(|e| Error::Format(format!("reading {name}: {e}")))?;
    Ok(Some(buf))
}

fn labels_from_record(id: &str, rec: &LabelRecord) -> Result<LabelSet> {
    let wrap = |e: Error| Error::Validation(format!("instance `{id}`: {e}"));
    match (rec.t, rec.a, rec.v) {
        (Some(t), Some(a), Some(v)) => LabelSet::new(rec.m, t, a, v).map_err(wrap),
        (None, None, None) => LabelSet::multimodal_only(rec.m).map_err(wrap),
        _ => Err(Error::Validation(format!(
            "instance `{id}`: unimodal labels must be all present or all absent"
        ))),
    }
}

fn record_from_labels(labels: &LabelSet) -> LabelRecord {
    let uni = labels.unimodal();
    LabelRecord {
        m: labels.multimodal(),
        t: uni.map(|u| u.t),
        a: uni.map(|u| u.a),
        v: uni.map(|u| u.v),
    }
}

/// Reads an archive, validating every blob against the manifest.
pub fn load_feature_archive(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut zip = ZipArchive::new(BufReader::new(file))?;
    let manifest_bytes = read_entry(&mut zip, MANIFEST)?
        .ok_or_else(|| Error::Format(format!("{} has no {MANIFEST}", path.display())))?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| Error::Format(format!("{MANIFEST}: {e}")))?;
    if manifest.version != ARCHIVE_VERSION {
        return Err(Error::Format(format!(
            "unsupported archive version `{}` (expected `{ARCHIVE_VERSION}`)",
            manifest.version
        )));
    }
    let specs = manifest
        .specs
        .try_map(|kind, s| FeatureSpec::new(kind, s.seq_len, s.feat_dim))?;

    let mut instances = Vec::with_capacity(manifest.instances.len());
    for rec in &manifest.instances {
        check_id(&rec.id)?;
        let features = specs.try_map(|kind, spec| {
            let name = blob_path(&rec.id, kind);
            let bytes = read_entry(&mut zip, &name)?
                .ok_or_else(|| Error::Format(format!("instance `{}`: missing blob {name}", rec.id)))?;
            let expected = spec.seq_len * spec.feat_dim * 4;
            if bytes.len() != expected {
                return Err(Error::Validation(format!(
                    "instance `{}`: {kind} blob holds {} bytes, declared [{}x{}] needs {expected}",
                    rec.id,
                    bytes.len(),
                    spec.seq_len,
                    spec.feat_dim
                )));
            }
            let values = Array2::from_shape_vec((spec.seq_len, spec.feat_dim), f32_from_le(&bytes))
                .expect("length checked above");
            FeatureSequence::new(*spec, values, *rec.valid_len.get(kind))
                .map_err(|e| Error::Validation(format!("instance `{}`: {e}", rec.id)))
        })?;
        let labels = rec
            .labels
            .as_ref()
            .map(|l| labels_from_record(&rec.id, l))
            .transpose()?;
        instances.push(Instance::new(rec.id.clone(), rec.split, features, labels)?);
    }
    Dataset::new(specs, instances)
}

/// Serializes a dataset. Output bytes depend only on the dataset contents.
pub fn write_feature_archive(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    write_archive_to(dataset, &mut writer)?;
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub(crate) fn write_archive_to<W: Write + Seek>(dataset: &Dataset, sink: W) -> Result<()> {
    for inst in dataset.instances() {
        check_id(&inst.id)?;
    }
    let manifest = Manifest {
        version: ARCHIVE_VERSION.to_string(),
        specs: dataset.specs().map(|_, s| ShapeRecord {
            seq_len: s.seq_len,
            feat_dim: s.feat_dim,
        }),
        instances: dataset
            .instances()
            .iter()
            .map(|inst| InstanceRecord {
                id: inst.id.clone(),
                split: inst.split,
                labels: inst.labels.as_ref().map(record_from_labels),
                valid_len: inst.features.map(|_, s| s.valid_len()),
            })
            .collect(),
    };
    let mut zip = ZipWriter::new(sink);
    let opts = entry_options();
    zip.start_file(MANIFEST, opts)?;
    let json = serde_json::to_vec_pretty(&manifest)?;
    zip.write_all(&json).map_err(|e| Error::io(MANIFEST, e))?;
    for inst in dataset.instances() {
        for (kind, seq) in inst.features.iter() {
            let name = blob_path(&inst.id, kind);
            zip.start_file(name.as_str(), opts)?;
            zip.write_all(&f32_le_bytes(seq.values().iter().copied()))
                .map_err(|e| Error::io(&name, e))?;
        }
    }
    zip.finish()?;
    Ok(())
}
