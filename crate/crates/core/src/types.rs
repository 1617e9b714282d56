//! Domain records shared across the crate: modalities, feature sequences, labels,
//! instances and the model / loss / mixup configuration.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Activation, HeadArch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModalityKind {
    Text,
    Acoustic,
    Visual,
    Multimodal,
}

impl ModalityKind {
    /// Modalities that carry feature sequences, in fusion order.
    pub const FEATURES: [ModalityKind; 3] = [Self::Text, Self::Acoustic, Self::Visual];
    /// Prediction tasks, one head each.
    pub const TASKS: [ModalityKind; 4] = [Self::Multimodal, Self::Text, Self::Acoustic, Self::Visual];

    pub fn name(self) -> &'static str {
        match self {
            Self::Text => "text",
            Self::Acoustic => "acoustic",
            Self::Visual => "visual",
            Self::Multimodal => "multimodal",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Self::Text => "t",
            Self::Acoustic => "a",
            Self::Visual => "v",
            Self::Multimodal => "m",
        }
    }

    pub fn is_feature(self) -> bool {
        self != Self::Multimodal
    }

    /// Position within [`ModalityKind::TASKS`].
    pub fn task_index(self) -> usize {
        match self {
            Self::Multimodal => 0,
            Self::Text => 1,
            Self::Acoustic => 2,
            Self::Visual => 3,
        }
    }
}

impl fmt::Display for ModalityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModalityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "t" | "text" => Ok(Self::Text),
            "a" | "acoustic" | "audio" => Ok(Self::Acoustic),
            "v" | "visual" | "vision" => Ok(Self::Visual),
            "m" | "multimodal" => Ok(Self::Multimodal),
            other => Err(Error::Config(format!("unknown modality `{other}`"))),
        }
    }
}

/// One value per feature modality (text, acoustic, visual).
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerModality<T> {
    pub text: T,
    pub acoustic: T,
    pub visual: T,
}

impl<T> PerModality<T> {
    pub fn new(text: T, acoustic: T, visual: T) -> Self {
        Self {
            text,
            acoustic,
            visual,
        }
    }

    pub fn get(&self, kind: ModalityKind) -> &T {
        match kind {
            ModalityKind::Text => &self.text,
            ModalityKind::Acoustic => &self.acoustic,
            ModalityKind::Visual => &self.visual,
            ModalityKind::Multimodal => panic!("multimodal is not a feature modality"),
        }
    }

    pub fn get_mut(&mut self, kind: ModalityKind) -> &mut T {
        match kind {
            ModalityKind::Text => &mut self.text,
            ModalityKind::Acoustic => &mut self.acoustic,
            ModalityKind::Visual => &mut self.visual,
            ModalityKind::Multimodal => panic!("multimodal is not a feature modality"),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(ModalityKind, &T) -> U) -> PerModality<U> {
        PerModality {
            text: f(ModalityKind::Text, &self.text),
            acoustic: f(ModalityKind::Acoustic, &self.acoustic),
            visual: f(ModalityKind::Visual, &self.visual),
        }
    }

    pub fn try_map<U>(&self, mut f: impl FnMut(ModalityKind, &T) -> Result<U>) -> Result<PerModality<U>> {
        Ok(PerModality {
            text: f(ModalityKind::Text, &self.text)?,
            acoustic: f(ModalityKind::Acoustic, &self.acoustic)?,
            visual: f(ModalityKind::Visual, &self.visual)?,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (ModalityKind, &T)> {
        [
            (ModalityKind::Text, &self.text),
            (ModalityKind::Acoustic, &self.acoustic),
            (ModalityKind::Visual, &self.visual),
        ]
        .into_iter()
    }
}

/// One value per prediction task (m, t, a, v).
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerTask<T> {
    pub m: T,
    pub t: T,
    pub a: T,
    pub v: T,
}

impl<T> PerTask<T> {
    pub fn splat(value: T) -> Self
    where
        T: Clone,
    {
        Self {
            m: value.clone(),
            t: value.clone(),
            a: value.clone(),
            v: value,
        }
    }

    pub fn get(&self, task: ModalityKind) -> &T {
        match task {
            ModalityKind::Multimodal => &self.m,
            ModalityKind::Text => &self.t,
            ModalityKind::Acoustic => &self.a,
            ModalityKind::Visual => &self.v,
        }
    }

    pub fn get_mut(&mut self, task: ModalityKind) -> &mut T {
        match task {
            ModalityKind::Multimodal => &mut self.m,
            ModalityKind::Text => &mut self.t,
            ModalityKind::Acoustic => &mut self.a,
            ModalityKind::Visual => &mut self.v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub modality: ModalityKind,
    pub seq_len: usize,
    pub feat_dim: usize,
}

impl FeatureSpec {
    pub fn new(modality: ModalityKind, seq_len: usize, feat_dim: usize) -> Result<Self> {
        let spec = Self {
            modality,
            seq_len,
            feat_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.modality.is_feature() {
            return Err(Error::Validation("multimodal has no feature spec".into()));
        }
        if self.seq_len == 0 || self.feat_dim == 0 {
            return Err(Error::Validation(format!(
                "{} spec must have positive seq_len and feat_dim, got {}x{}",
                self.modality, self.seq_len, self.feat_dim
            )));
        }
        Ok(())
    }

    /// The CH-SIMS v2.0 default feature shapes.
    pub fn canonical() -> PerModality<FeatureSpec> {
        PerModality::new(
            FeatureSpec {
                modality: ModalityKind::Text,
                seq_len: 50,
                feat_dim: 768,
            },
            FeatureSpec {
                modality: ModalityKind::Acoustic,
                seq_len: 925,
                feat_dim: 25,
            },
            FeatureSpec {
                modality: ModalityKind::Visual,
                seq_len: 232,
                feat_dim: 177,
            },
        )
    }

    /// Small shapes for synthetic experiments.
    pub fn small() -> PerModality<FeatureSpec> {
        PerModality::new(
            FeatureSpec {
                modality: ModalityKind::Text,
                seq_len: 8,
                feat_dim: 32,
            },
            FeatureSpec {
                modality: ModalityKind::Acoustic,
                seq_len: 20,
                feat_dim: 8,
            },
            FeatureSpec {
                modality: ModalityKind::Visual,
                seq_len: 16,
                feat_dim: 16,
            },
        )
    }
}

pub fn validate_specs(specs: &PerModality<FeatureSpec>) -> Result<()> {
    for (kind, spec) in specs.iter() {
        if spec.modality != kind {
            return Err(Error::Validation(format!(
                "spec stored under {kind} declares modality {}",
                spec.modality
            )));
        }
        spec.validate()?;
    }
    Ok(())
}

/// A padded `[seq_len x feat_dim]` feature matrix for one modality of one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    spec: FeatureSpec,
    values: Array2<f32>,
    valid_len: usize,
}

impl FeatureSequence {
    pub fn new(spec: FeatureSpec, values: Array2<f32>, valid_len: usize) -> Result<Self> {
        if values.dim() != (spec.seq_len, spec.feat_dim) {
            return Err(Error::Validation(format!(
                "{} sequence has shape {:?}, spec requires ({}, {})",
                spec.modality,
                values.dim(),
                spec.seq_len,
                spec.feat_dim
            )));
        }
        if valid_len > spec.seq_len {
            return Err(Error::Validation(format!(
                "{} valid_len {valid_len} exceeds seq_len {}",
                spec.modality, spec.seq_len
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("{} sequence has non-finite values", spec.modality)));
        }
        if values.slice(s![valid_len.., ..]).iter().any(|&v| v != 0.0) {
            return Err(Error::Validation(format!(
                "{} sequence has non-zero rows past valid_len {valid_len}",
                spec.modality
            )));
        }
        Ok(Self {
            spec,
            values,
            valid_len,
        })
    }

    pub fn zeros(spec: FeatureSpec) -> Self {
        Self {
            spec,
            values: Array2::zeros((spec.seq_len, spec.feat_dim)),
            valid_len: 0,
        }
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn values(&self) -> &Array2<f32> {
        &self.values
    }

    pub fn valid_len(&self) -> usize {
        self.valid_len
    }
}

/// Returns the grid value `k / 5` if `value` sits on the 11-point label grid.
pub fn snap_label(value: f64) -> Result<f64> {
    let scaled = value * 5.0;
    let k = scaled.round();
    if !value.is_finite() || (scaled - k).abs() > 1e-6 || k.abs() > 5.0 {
        return Err(Error::Validation(format!(
            "label {value} is not a multiple of 0.2 within [-1, 1]"
        )));
    }
    Ok(k / 5.0)
}

/// The 11 admissible label values, ascending.
pub fn label_grid() -> [f64; 11] {
    std::array::from_fn(|i| (i as f64 - 5.0) / 5.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnimodalLabels {
    pub t: f64,
    pub a: f64,
    pub v: f64,
}

/// Ground truth for one supervised instance.
///
/// Archives that only ship the multimodal label leave `unimodal` empty; the unimodal
/// tasks are then masked out for that instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelSet {
    multimodal: f64,
    unimodal: Option<UnimodalLabels>,
}

impl LabelSet {
    pub fn new(m: f64, t: f64, a: f64, v: f64) -> Result<Self> {
        Ok(Self {
            multimodal: snap_label(m)?,
            unimodal: Some(UnimodalLabels {
                t: snap_label(t)?,
                a: snap_label(a)?,
                v: snap_label(v)?,
            }),
        })
    }

    pub fn multimodal_only(m: f64) -> Result<Self> {
        Ok(Self {
            multimodal: snap_label(m)?,
            unimodal: None,
        })
    }

    pub fn multimodal(&self) -> f64 {
        self.multimodal
    }

    pub fn unimodal(&self) -> Option<UnimodalLabels> {
        self.unimodal
    }

    pub fn get(&self, task: ModalityKind) -> Option<f64> {
        match task {
            ModalityKind::Multimodal => Some(self.multimodal),
            ModalityKind::Text => self.unimodal.map(|u| u.t),
            ModalityKind::Acoustic => self.unimodal.map(|u| u.a),
            ModalityKind::Visual => self.unimodal.map(|u| u.v),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
    Unlabeled,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Valid, Split::Test, Split::Unlabeled];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
            Split::Unlabeled => "unlabeled",
        }
    }

    pub fn is_labeled(self) -> bool {
        self != Split::Unlabeled
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            "unlabeled" => Ok(Split::Unlabeled),
            other => Err(Error::Validation(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub id: String,
    pub split: Split,
    pub features: PerModality<FeatureSequence>,
    pub labels: Option<LabelSet>,
}

impl Instance {
    pub fn new(
        id: impl Into<String>,
        split: Split,
        features: PerModality<FeatureSequence>,
        labels: Option<LabelSet>,
    ) -> Result<Self> {
        let id = id.into();
        if split.is_labeled() != labels.is_some() {
            return Err(Error::Validation(format!(
                "instance `{id}`: split {split} {} labels",
                if labels.is_some() { "must not carry" } else { "requires" }
            )));
        }
        for (kind, seq) in features.iter() {
            if seq.spec().modality != kind {
                return Err(Error::Validation(format!(
                    "instance `{id}`: {} sequence stored under {kind}",
                    seq.spec().modality
                )));
            }
        }
        Ok(Self {
            id,
            split,
            features,
            labels,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Encoder output width per modality.
    pub hidden_dims: PerModality<usize>,
    pub lstm_layers: usize,
    /// Per-direction LSTM width; `None` means half of the modality's hidden dim.
    pub lstm_hidden: Option<usize>,
    /// Widths of the two hidden classifier layers; `None` means (input/2, input/4).
    pub classifier_hidden: Option<[usize; 2]>,
    pub activation: Activation,
    /// Dropout between classifier layers.
    pub dropout: f64,
    pub head: HeadArch,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dims: PerModality::new(128, 32, 64),
            lstm_layers: 1,
            lstm_hidden: None,
            classifier_hidden: None,
            activation: Activation::Relu,
            dropout: 0.0,
            head: HeadArch::Standard,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (kind, &h) in self.hidden_dims.iter() {
            if h == 0 {
                return Err(Error::Config(format!("model.hidden_dims.{kind} must be positive")));
            }
        }
        if self.lstm_layers == 0 {
            return Err(Error::Config("model.lstm_layers must be positive".into()));
        }
        if self.lstm_hidden == Some(0) {
            return Err(Error::Config("model.lstm_hidden must be positive".into()));
        }
        if let Some(widths) = self.classifier_hidden {
            if widths.contains(&0) {
                return Err(Error::Config("model.classifier_hidden widths must be positive".into()));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("model.dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn fused_dim(&self) -> usize {
        self.hidden_dims.text + self.hidden_dims.acoustic + self.hidden_dims.visual
    }

    /// Input width of a task head.
    pub fn head_input(&self, task: ModalityKind) -> usize {
        match task {
            ModalityKind::Multimodal => self.fused_dim(),
            k => *self.hidden_dims.get(k),
        }
    }

    pub fn lstm_hidden_for(&self, kind: ModalityKind) -> usize {
        self.lstm_hidden
            .unwrap_or_else(|| (*self.hidden_dims.get(kind) / 2).max(1))
    }

    pub fn classifier_widths(&self, input: usize) -> [usize; 2] {
        self.classifier_hidden
            .unwrap_or([(input / 2).max(1), (input / 4).max(1)])
    }
}

/// Weights of the two acoustic/visual mixup consistency tasks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixWeights {
    pub a: f64,
    pub v: f64,
}

impl MixWeights {
    pub fn get(&self, kind: ModalityKind) -> f64 {
        match kind {
            ModalityKind::Acoustic => self.a,
            ModalityKind::Visual => self.v,
            other => panic!("no mixup task for {other}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: PerTask<f64>,
    pub beta: MixWeights,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: PerTask::splat(1.0),
            beta: MixWeights { a: 1.0, v: 1.0 },
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for task in ModalityKind::TASKS {
            let w = *self.alpha.get(task);
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!(
                    "train.loss_weights.alpha.{} must be a nonnegative number",
                    task.short()
                )));
            }
        }
        if ModalityKind::TASKS.iter().all(|&t| *self.alpha.get(t) == 0.0) {
            return Err(Error::Config("train.loss_weights.alpha needs at least one positive weight".into()));
        }
        for (name, w) in [("a", self.beta.a), ("v", self.beta.v)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!(
                    "train.loss_weights.beta.{name} must be a nonnegative number"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixGranularity {
    PerBatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixupConfig {
    /// Shape of the symmetric Beta distribution λ is drawn from.
    pub beta_alpha: f64,
    pub granularity: MixGranularity,
    /// Treat mixed targets as constants during backpropagation.
    pub target_stop_gradient: bool,
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self {
            beta_alpha: 0.5,
            granularity: MixGranularity::PerBatch,
            target_stop_gradient: true,
        }
    }
}

impl MixupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_alpha.is_finite() && self.beta_alpha > 0.0) {
            return Err(Error::Config("train.mixup.beta_alpha must be positive".into()));
        }
        Ok(())
    }
}
