use std::collections::BTreeMap;
use std::io::Write;

use avmc_core::data::{generate_synthetic, load_feature_archive, write_feature_archive};
use avmc_core::{Error, FeatureSpec, ModalityKind, Split};
use serde_json::json;
use zip::write::SimpleFileOptions;
use zip::ZipWriter;

#[test]
fn round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.zip");
    let data = generate_synthetic(12, 5, &FeatureSpec::small(), 4).unwrap();
    write_feature_archive(&data, &path).unwrap();
    let loaded = load_feature_archive(&path).unwrap();
    assert_eq!(loaded, data);

    let again = dir.path().join("again.zip");
    write_feature_archive(&loaded, &again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

fn raw_archive(path: &std::path::Path, blobs: &[(&str, usize)]) {
    let manifest = json!({
        "version": "avmc-feature-archive/1",
        "specs": {
            "text": {"seq_len": 50, "feat_dim": 768},
            "acoustic": {"seq_len": 925, "feat_dim": 25},
            "visual": {"seq_len": 232, "feat_dim": 177},
        },
        "instances": [{
            "id": "clip_7",
            "split": "train",
            "labels": {"m": 0.2, "t": 0.4, "a": 0.0, "v": -0.2},
            "valid_len": {"text": 30, "acoustic": 400, "visual": 100},
        }],
    });
    let mut zip = ZipWriter::new(std::fs::File::create(path).unwrap());
    let opts = SimpleFileOptions::default();
    zip.start_file("manifest.json", opts).unwrap();
    zip.write_all(manifest.to_string().as_bytes()).unwrap();
    for (name, floats) in blobs {
        zip.start_file(format!("data/clip_7/{name}.f32"), opts).unwrap();
        zip.write_all(&vec![0u8; floats * 4]).unwrap();
    }
    zip.finish().unwrap();
}

#[test]
fn canonical_shapes_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ok.zip");
    raw_archive(&path, &[("text", 50 * 768), ("acoustic", 925 * 25), ("visual", 232 * 177)]);
    let data = load_feature_archive(&path).unwrap();
    assert_eq!(data.specs(), &FeatureSpec::canonical());
    assert_eq!(data.instances()[0].features.acoustic.valid_len(), 400);
}

#[test]
fn short_text_blob_names_the_instance() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.zip");
    raw_archive(&path, &[("text", 40 * 768), ("acoustic", 925 * 25), ("visual", 232 * 177)]);
    match load_feature_archive(&path) {
        Err(Error::Validation(msg)) => assert!(msg.contains("clip_7") && msg.contains("text"), "{msg}"),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn missing_manifest_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.zip");
    ZipWriter::new(std::fs::File::create(&path).unwrap()).finish().unwrap();
    assert!(matches!(load_feature_archive(&path), Err(Error::Format(_))));
}

#[test]
fn synthetic_labels_cover_the_grid() {
    let data = generate_synthetic(400, 0, &FeatureSpec::small(), 9).unwrap();
    let mut histogram = BTreeMap::new();
    for inst in data.instances() {
        let labels = inst.labels.unwrap();
        for task in ModalityKind::TASKS {
            let y = labels.get(task).unwrap();
            let scaled = y * 5.0;
            assert!((scaled - scaled.round()).abs() < 1e-9 && y.abs() <= 1.0, "{y}");
        }
        *histogram.entry((labels.multimodal() * 5.0).round() as i64).or_insert(0) += 1;
    }
    // 400 uniform draws over 11 points: every point is hit.
    assert_eq!(histogram.len(), 11, "{histogram:?}");
    let stats = data.stats();
    assert_eq!(stats.train + stats.valid + stats.test, 400);
    assert_eq!(data.split(Split::Train).count(), 248);
}
