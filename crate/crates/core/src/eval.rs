//! Sentiment metrics (Acc2, weighted F1, Acc2_weak, MAE, Pearson correlation, R²),
//! split evaluation and prediction files.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize, Serializer};

use crate::data::{batch_iterator, Dataset};
use crate::error::{Error, Result};
use crate::model::ModelParameters;
use crate::rng::RandomSource;
use crate::types::{LabelSet, ModalityKind, PerTask, Split};

/// Ground-truth intensities at or inside this bound count as weak sentiment.
pub const WEAK_BOUND: f64 = 0.4;
const GRID_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Unimodal,
    Multimodal,
}

impl std::str::FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unimodal" => Ok(Self::Unimodal),
            "multimodal" => Ok(Self::Multimodal),
            other => Err(Error::Config(format!("unknown label source `{other}`"))),
        }
    }
}

impl std::fmt::Display for LabelSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Unimodal => "unimodal",
            Self::Multimodal => "multimodal",
        })
    }
}

fn round2<S: Serializer>(value: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64((value * 100.0).round() / 100.0)
}

fn round2_opt<S: Serializer>(value: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match value {
        Some(v) => round2(v, s),
        None => s.serialize_none(),
    }
}

/// Full-precision metric values. Percent metrics are on the 0–100 scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(serialize_with = "round2")]
    pub acc2: f64,
    #[serde(serialize_with = "round2")]
    pub f1: f64,
    /// `None` when no ground-truth label lies in `[-0.4, 0.4]`.
    #[serde(serialize_with = "round2_opt")]
    pub acc2_weak: Option<f64>,
    pub mae: f64,
    /// `None` when labels or predictions are constant.
    #[serde(serialize_with = "round2_opt")]
    pub corr: Option<f64>,
    /// `None` when labels are constant.
    #[serde(serialize_with = "round2_opt")]
    pub r_square: Option<f64>,
    pub n_instances: usize,
    pub n_weak: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: ModalityKind,
    pub label_source: LabelSource,
    #[serde(flatten)]
    pub metrics: Metrics,
}

fn negative(x: f64) -> bool {
    x < 0.0
}

fn binary_accuracy(pairs: &[(f64, f64)]) -> f64 {
    let hits = pairs.iter().filter(|(p, y)| negative(*p) == negative(*y)).count();
    hits as f64 / pairs.len() as f64 * 100.0
}

/// Support-weighted F1 over the negative / non-negative classes.
fn weighted_f1(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mut total = 0.0;
    for class in [true, false] {
        let tp = pairs.iter().filter(|(p, y)| negative(*p) == class && negative(*y) == class).count() as f64;
        let fp = pairs.iter().filter(|(p, y)| negative(*p) == class && negative(*y) != class).count() as f64;
        let fn_ = pairs.iter().filter(|(p, y)| negative(*p) != class && negative(*y) == class).count() as f64;
        let support = tp + fn_;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if support > 0.0 { tp / support } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        total += f1 * support / n;
    }
    total * 100.0
}

pub fn is_weak(label: f64) -> bool {
    label.abs() <= WEAK_BOUND + GRID_TOL
}

pub fn compute_metrics(predictions: &[f64], labels: &[f64]) -> Result<Metrics> {
    if predictions.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Validation("cannot compute metrics on an empty set".into()));
    }
    if predictions.iter().chain(labels).any(|v| !v.is_finite()) {
        return Err(Error::Validation("predictions and labels must be finite".into()));
    }
    let pairs: Vec<(f64, f64)> = predictions.iter().copied().zip(labels.iter().copied()).collect();
    let n = pairs.len() as f64;

    let weak: Vec<(f64, f64)> = pairs.iter().copied().filter(|&(_, y)| is_weak(y)).collect();
    let mae = pairs.iter().map(|(p, y)| (p - y).abs()).sum::<f64>() / n;

    let mean_p = predictions.iter().sum::<f64>() / n;
    let mean_y = labels.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_p = 0.0;
    let mut var_y = 0.0;
    let mut ss_res = 0.0;
    for &(p, y) in &pairs {
        cov += (p - mean_p) * (y - mean_y);
        var_p += (p - mean_p).powi(2);
        var_y += (y - mean_y).powi(2);
        ss_res += (y - p).powi(2);
    }
    let corr = (var_p > 0.0 && var_y > 0.0).then(|| cov / (var_p.sqrt() * var_y.sqrt()) * 100.0);
    let r_square = (var_y > 0.0).then(|| (1.0 - ss_res / var_y) * 100.0);

    Ok(Metrics {
        acc2: binary_accuracy(&pairs),
        f1: weighted_f1(&pairs),
        acc2_weak: (!weak.is_empty()).then(|| binary_accuracy(&weak)),
        mae,
        corr,
        r_square,
        n_instances: pairs.len(),
        n_weak: weak.len(),
    })
}

/// Eval-mode predictions for every instance of one split.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitPredictions {
    pub ids: Vec<String>,
    pub predictions: PerTask<Vec<f64>>,
    pub labels: Vec<Option<LabelSet>>,
}

pub fn predict_split(params: &ModelParameters, dataset: &Dataset, split: Split, batch_size: usize) -> Result<SplitPredictions> {
    let mut out = SplitPredictions {
        ids: Vec::new(),
        predictions: PerTask::splat(Vec::new()),
        labels: Vec::new(),
    };
    let mut unused = RandomSource::new(0);
    for batch in batch_iterator(dataset, &[split], batch_size, false, &mut unused)? {
        let forward = params.predict(&batch)?;
        for task in ModalityKind::TASKS {
            out.predictions
                .get_mut(task)
                .extend(forward.predictions.get(task).iter().copied());
        }
        out.ids.extend(batch.ids);
    }
    out.labels = dataset.split(split).map(|i| i.labels).collect();
    Ok(out)
}

impl SplitPredictions {
    /// Ground truth for `task` under `source`.
    pub fn labels_for(&self, task: ModalityKind, source: LabelSource) -> Result<Vec<f64>> {
        let key = match source {
            LabelSource::Multimodal => ModalityKind::Multimodal,
            LabelSource::Unimodal => task,
        };
        self.ids
            .iter()
            .zip(&self.labels)
            .map(|(id, labels)| {
                labels.and_then(|l| l.get(key)).ok_or_else(|| {
                    Error::Validation(format!("instance `{id}` has no {} label", key.name()))
                })
            })
            .collect()
    }

    pub fn report(&self, task: ModalityKind, source: LabelSource) -> Result<MetricsReport> {
        let labels = self.labels_for(task, source)?;
        Ok(MetricsReport {
            task,
            label_source: source,
            metrics: compute_metrics(self.predictions.get(task), &labels)?,
        })
    }
}

/// Metrics for every requested (task, label source) pair on one labeled split.
pub fn evaluate(
    params: &ModelParameters,
    dataset: &Dataset,
    split: Split,
    tasks: &[ModalityKind],
    sources: &[LabelSource],
) -> Result<Vec<MetricsReport>> {
    if !split.is_labeled() {
        return Err(Error::Validation(format!("split `{split}` has no labels to evaluate against")));
    }
    if dataset.split(split).next().is_none() {
        return Err(Error::Validation(format!("split `{split}` is empty")));
    }
    let preds = predict_split(params, dataset, split, 64)?;
    let mut reports = Vec::with_capacity(tasks.len() * sources.len());
    for &task in tasks {
        for &source in sources {
            reports.push(preds.report(task, source)?);
        }
    }
    Ok(reports)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub prediction: f64,
    pub label: Option<f64>,
}

/// `id,prediction,label` rows; `label` may be empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PredictionFile {
    pub records: Vec<PredictionRecord>,
}

impl PredictionFile {
    pub fn from_split(preds: &SplitPredictions, task: ModalityKind, source: LabelSource) -> Self {
        let key = match source {
            LabelSource::Multimodal => ModalityKind::Multimodal,
            LabelSource::Unimodal => task,
        };
        let records = preds
            .ids
            .iter()
            .zip(preds.predictions.get(task))
            .zip(&preds.labels)
            .map(|((id, &prediction), labels)| PredictionRecord {
                id: id.clone(),
                prediction,
                label: labels.and_then(|l| l.get(key)),
            })
            .collect();
        Self { records }
    }

    pub fn write_csv(&self, sink: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        for rec in &self.records {
            w.serialize(rec)?;
        }
        w.flush().map_err(|e| Error::io("prediction csv", e))?;
        Ok(())
    }

    pub fn read_csv(source: impl Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(source);
        let records = r.deserialize().collect::<std::result::Result<Vec<PredictionRecord>, _>>()?;
        let mut seen = std::collections::HashSet::new();
        for rec in &records {
            if !seen.insert(rec.id.as_str()) {
                return Err(Error::Validation(format!("duplicate id `{}` in prediction file", rec.id)));
            }
            if !rec.prediction.is_finite() || rec.label.is_some_and(|l| !l.is_finite()) {
                return Err(Error::Validation(format!("non-finite value for `{}`", rec.id)));
            }
        }
        Ok(Self { records })
    }
}
