//! The late-fusion backbone: text / acoustic / visual encoders, concatenation fusion
//! and four independent task heads.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};

use super::batchnorm::RunningStats;
use super::head::{Head, HeadArch};
use super::layers::{join, Linear, Params};
use super::lstm::{BiLstm, BiLstmTrace};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::types::{FeatureSequence, FeatureSpec, ModalityKind, ModelConfig, PerModality, PerTask};

#[derive(Clone, Debug, PartialEq)]
pub struct UnimodalRepresentation {
    pub modality: ModalityKind,
    pub vector: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusedRepresentation {
    pub vector: Array1<f64>,
}

/// One scalar sentiment prediction per task head.
pub type PredictionSet = PerTask<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct TextEncoder {
    pub proj: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceEncoder {
    pub lstm: BiLstm,
    pub proj: Linear,
}

/// Every learnable tensor of the model. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub text: TextEncoder,
    pub acoustic: SequenceEncoder,
    pub visual: SequenceEncoder,
    pub heads: PerTask<Head>,
}

impl Weights {
    pub fn zeros_like(&self) -> Self {
        let seq = |e: &SequenceEncoder| SequenceEncoder {
            lstm: e.lstm.zeros_like(),
            proj: Linear::zeros(e.proj.input_dim(), e.proj.output_dim()),
        };
        Self {
            text: TextEncoder {
                proj: Linear::zeros(self.text.proj.input_dim(), self.text.proj.output_dim()),
            },
            acoustic: seq(&self.acoustic),
            visual: seq(&self.visual),
            heads: PerTask {
                m: self.heads.m.zeros_like(),
                t: self.heads.t.zeros_like(),
                a: self.heads.a.zeros_like(),
                v: self.heads.v.zeros_like(),
            },
        }
    }

    fn sequence(&self, kind: ModalityKind) -> &SequenceEncoder {
        match kind {
            ModalityKind::Acoustic => &self.acoustic,
            ModalityKind::Visual => &self.visual,
            other => panic!("{other} has no sequence encoder"),
        }
    }

    fn sequence_mut(&mut self, kind: ModalityKind) -> &mut SequenceEncoder {
        match kind {
            ModalityKind::Acoustic => &mut self.acoustic,
            ModalityKind::Visual => &mut self.visual,
            other => panic!("{other} has no sequence encoder"),
        }
    }
}

impl Params for Weights {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'_, f64>)) {
        self.text.proj.visit(&join(prefix, "encoder.text.proj"), f);
        for (name, enc) in [("acoustic", &self.acoustic), ("visual", &self.visual)] {
            enc.lstm.visit(&join(prefix, &format!("encoder.{name}.lstm")), f);
            enc.proj.visit(&join(prefix, &format!("encoder.{name}.proj")), f);
        }
        for task in ModalityKind::TASKS {
            self.heads
                .get(task)
                .visit(&join(prefix, &format!("head.{}", task.short())), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'_, f64>)) {
        self.text.proj.visit_mut(&join(prefix, "encoder.text.proj"), f);
        for (name, enc) in [("acoustic", &mut self.acoustic), ("visual", &mut self.visual)] {
            enc.lstm.visit_mut(&join(prefix, &format!("encoder.{name}.lstm")), f);
            enc.proj.visit_mut(&join(prefix, &format!("encoder.{name}.proj")), f);
        }
        for task in ModalityKind::TASKS {
            self.heads
                .get_mut(task)
                .visit_mut(&join(prefix, &format!("head.{}", task.short())), f);
        }
    }
}

#[derive(Clone, Debug)]
struct TextCache {
    input: Array1<f64>,
    pre: Array1<f64>,
}

#[derive(Clone, Debug)]
struct SequenceCache {
    trace: BiLstmTrace,
    summary: Array1<f64>,
    pre: Array1<f64>,
}

/// Encoder outputs for a batch together with what backpropagation needs.
#[derive(Clone, Debug)]
pub struct EncodedBatch {
    /// `[batch x h_k]` per modality.
    pub reps: PerModality<Array2<f64>>,
    text: Vec<TextCache>,
    acoustic: Vec<SequenceCache>,
    visual: Vec<SequenceCache>,
}

impl EncodedBatch {
    pub fn len(&self) -> usize {
        self.reps.text.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[F_t ; F_a ; F_v]` per row.
    pub fn fused(&self) -> Array2<f64> {
        concatenate![
            Axis(1),
            self.reps.text.view(),
            self.reps.acoustic.view(),
            self.reps.visual.view()
        ]
    }
}

/// Predictions for a batch, plus the acoustic / visual representations mixup consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub predictions: PerTask<Array1<f64>>,
    pub reps: PerModality<Array2<f64>>,
}

impl ForwardOutput {
    pub fn prediction_sets(&self) -> Vec<PredictionSet> {
        (0..self.predictions.m.len())
            .map(|i| PerTask {
                m: self.predictions.m[i],
                t: self.predictions.t[i],
                a: self.predictions.a[i],
                v: self.predictions.v[i],
            })
            .collect()
    }
}

/// Concatenates the three unimodal representations in text, acoustic, visual order.
pub fn fuse(
    config: &ModelConfig,
    text: &UnimodalRepresentation,
    acoustic: &UnimodalRepresentation,
    visual: &UnimodalRepresentation,
) -> Result<FusedRepresentation> {
    for (kind, rep) in [
        (ModalityKind::Text, text),
        (ModalityKind::Acoustic, acoustic),
        (ModalityKind::Visual, visual),
    ] {
        let expected = *config.hidden_dims.get(kind);
        if rep.modality != kind || rep.vector.len() != expected {
            return Err(Error::Shape(format!(
                "fusion slot {kind} expects a {kind} vector of length {expected}, got {} of length {}",
                rep.modality,
                rep.vector.len()
            )));
        }
    }
    Ok(FusedRepresentation {
        vector: concatenate![Axis(0), text.vector.view(), acoustic.vector.view(), visual.vector.view()],
    })
}

/// Learnable weights, batch-norm running statistics and the train/eval flag.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters {
    pub config: ModelConfig,
    pub specs: PerModality<FeatureSpec>,
    pub weights: Weights,
    /// Running statistics of each head's input normalization; `None` for affine heads.
    pub running: PerTask<Option<RunningStats>>,
    pub training: bool,
}

impl ModelParameters {
    pub fn init(config: &ModelConfig, specs: &PerModality<FeatureSpec>, rng: &mut RandomSource) -> Result<Self> {
        config.validate()?;
        crate::types::validate_specs(specs)?;
        let h = &config.hidden_dims;
        let text = TextEncoder {
            proj: Linear::init(specs.text.feat_dim, h.text, rng),
        };
        let mut seq = |kind: ModalityKind| {
            let lstm_h = config.lstm_hidden_for(kind);
            let lstm = BiLstm::init(specs.get(kind).feat_dim, lstm_h, config.lstm_layers, rng);
            let proj = Linear::init(2 * lstm_h, *h.get(kind), rng);
            SequenceEncoder { lstm, proj }
        };
        let acoustic = seq(ModalityKind::Acoustic);
        let visual = seq(ModalityKind::Visual);
        let mut head = |task: ModalityKind| {
            let input = config.head_input(task);
            Head::init(config.head, input, config.classifier_widths(input), rng)
        };
        let heads = PerTask {
            m: head(ModalityKind::Multimodal),
            t: head(ModalityKind::Text),
            a: head(ModalityKind::Acoustic),
            v: head(ModalityKind::Visual),
        };
        let stats = |task: ModalityKind| {
            (config.head == HeadArch::Standard).then(|| RunningStats::new(config.head_input(task)))
        };
        Ok(Self {
            config: config.clone(),
            specs: specs.clone(),
            weights: Weights {
                text,
                acoustic,
                visual,
                heads,
            },
            running: PerTask {
                m: stats(ModalityKind::Multimodal),
                t: stats(ModalityKind::Text),
                a: stats(ModalityKind::Acoustic),
                v: stats(ModalityKind::Visual),
            },
            training: false,
        })
    }

    pub fn train_mode(&mut self) {
        self.training = true;
    }

    pub fn eval_mode(&mut self) {
        self.training = false;
    }

    /// Running statistics tensors, named like the weights they belong to.
    pub fn visit_state(&self, f: &mut dyn FnMut(String, ArrayViewD<'_, f64>)) {
        for task in ModalityKind::TASKS {
            if let Some(stats) = self.running.get(task) {
                stats.visit(&format!("head.{}.bn", task.short()), f);
            }
        }
    }

    pub fn visit_state_mut(&mut self, f: &mut dyn FnMut(String, ArrayViewMutD<'_, f64>)) {
        for task in ModalityKind::TASKS {
            if let Some(stats) = self.running.get_mut(task) {
                stats.visit_mut(&format!("head.{}.bn", task.short()), f);
            }
        }
    }

    fn check_spec(&self, seq: &FeatureSequence, kind: ModalityKind) -> Result<()> {
        if seq.spec() != self.specs.get(kind) {
            return Err(Error::Shape(format!(
                "{kind} input has spec {:?}, model expects {:?}",
                seq.spec(),
                self.specs.get(kind)
            )));
        }
        Ok(())
    }

    fn text_forward(&self, row0: ArrayView1<'_, f64>) -> (Array1<f64>, TextCache) {
        let proj = &self.weights.text.proj;
        let pre = proj.weight.dot(&row0) + &proj.bias;
        let act = self.config.activation;
        (
            pre.mapv(|v| act.apply(v)),
            TextCache {
                input: row0.to_owned(),
                pre,
            },
        )
    }

    fn sequence_forward(&self, kind: ModalityKind, rows: ArrayView2<'_, f64>) -> (Array1<f64>, SequenceCache) {
        let enc = self.weights.sequence(kind);
        let (summary, trace) = enc.lstm.forward(rows);
        let pre = enc.proj.weight.dot(&summary) + &enc.proj.bias;
        let act = self.config.activation;
        (
            pre.mapv(|v| act.apply(v)),
            SequenceCache { trace, summary, pre },
        )
    }

    /// Text representation from the first (sentence-level) token row only.
    pub fn encode_text(&self, seq: &FeatureSequence) -> Result<UnimodalRepresentation> {
        self.check_spec(seq, ModalityKind::Text)?;
        let row0 = seq.values().row(0).mapv(f64::from);
        Ok(UnimodalRepresentation {
            modality: ModalityKind::Text,
            vector: self.text_forward(row0.view()).0,
        })
    }

    /// BiLSTM over the valid rows, then a projection to `h_k`.
    pub fn encode_sequence(&self, seq: &FeatureSequence, kind: ModalityKind) -> Result<UnimodalRepresentation> {
        if !matches!(kind, ModalityKind::Acoustic | ModalityKind::Visual) {
            return Err(Error::Validation(format!("{kind} is not a sequence-encoded modality")));
        }
        self.check_spec(seq, kind)?;
        if seq.valid_len() == 0 {
            return Err(Error::Validation(format!("{kind} sequence has no valid rows")));
        }
        let rows = seq.values().slice(s![..seq.valid_len(), ..]).mapv(f64::from);
        Ok(UnimodalRepresentation {
            modality: kind,
            vector: self.sequence_forward(kind, rows.view()).0,
        })
    }

    /// Eval-mode head prediction for one representation (batch norm uses running statistics).
    pub fn classify(&self, rep: ArrayView1<'_, f64>, task: ModalityKind) -> Result<f64> {
        let head = self.weights.heads.get(task);
        if rep.len() != head.input_dim() {
            return Err(Error::Shape(format!(
                "{} head expects input of length {}, got {}",
                task,
                head.input_dim(),
                rep.len()
            )));
        }
        let rows = rep.insert_axis(Axis(0));
        Ok(head.forward_eval(rows, self.running.get(task).as_ref(), self.config.activation)[0])
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        for (kind, x) in batch.features.iter() {
            let spec = self.specs.get(kind);
            let (_, t, d) = x.dim();
            if (t, d) != (spec.seq_len, spec.feat_dim) {
                return Err(Error::Shape(format!(
                    "{kind} batch tensor is {t}x{d}, model expects {}x{}",
                    spec.seq_len, spec.feat_dim
                )));
            }
        }
        Ok(())
    }

    pub fn encode_batch(&self, batch: &Batch) -> Result<EncodedBatch> {
        self.check_batch(batch)?;
        let n = batch.len();
        let mut text_reps = Array2::zeros((n, self.config.hidden_dims.text));
        let mut text = Vec::with_capacity(n);
        for i in 0..n {
            let row0 = batch.features.text.slice(s![i, 0, ..]);
            let (rep, cache) = self.text_forward(row0);
            text_reps.row_mut(i).assign(&rep);
            text.push(cache);
        }
        let encode = |kind: ModalityKind| -> Result<(Array2<f64>, Vec<SequenceCache>)> {
            let mut reps = Array2::zeros((n, *self.config.hidden_dims.get(kind)));
            let mut caches = Vec::with_capacity(n);
            for i in 0..n {
                let len = batch.valid_lens.get(kind)[i];
                if len == 0 {
                    return Err(Error::Validation(format!(
                        "instance `{}`: {kind} sequence has no valid rows",
                        batch.ids[i]
                    )));
                }
                let rows = batch.features.get(kind).slice(s![i, ..len, ..]);
                let (rep, cache) = self.sequence_forward(kind, rows);
                reps.row_mut(i).assign(&rep);
                caches.push(cache);
            }
            Ok((reps, caches))
        };
        let (a_reps, acoustic) = encode(ModalityKind::Acoustic)?;
        let (v_reps, visual) = encode(ModalityKind::Visual)?;
        Ok(EncodedBatch {
            reps: PerModality::new(text_reps, a_reps, v_reps),
            text,
            acoustic,
            visual,
        })
    }

    /// Backpropagates `d_reps` (gradient w.r.t. each modality's representation rows)
    /// through the encoders, accumulating into `grad`.
    pub fn backward_encoders(&self, encoded: &EncodedBatch, d_reps: &PerModality<Array2<f64>>, grad: &mut Weights) {
        let act = self.config.activation;
        for (i, cache) in encoded.text.iter().enumerate() {
            let d_pre = &d_reps.text.row(i) * &cache.pre.mapv(|p| act.derivative(p));
            grad.text.proj.weight += &outer(d_pre.view(), cache.input.view());
            grad.text.proj.bias += &d_pre;
        }
        for (kind, caches) in [
            (ModalityKind::Acoustic, &encoded.acoustic),
            (ModalityKind::Visual, &encoded.visual),
        ] {
            let enc = self.weights.sequence(kind);
            let g = grad.sequence_mut(kind);
            for (i, cache) in caches.iter().enumerate() {
                let d_pre = &d_reps.get(kind).row(i) * &cache.pre.mapv(|p| act.derivative(p));
                g.proj.weight += &outer(d_pre.view(), cache.summary.view());
                g.proj.bias += &d_pre;
                let d_summary = enc.proj.weight.t().dot(&d_pre);
                enc.lstm.backward(&cache.trace, d_summary.view(), &mut g.lstm);
            }
        }
    }

    /// Forward pass over a batch. In training mode heads use batch statistics and
    /// update the running statistics; `rng` drives dropout.
    pub fn forward(&mut self, batch: &Batch, rng: &mut RandomSource) -> Result<ForwardOutput> {
        if !self.training {
            return self.predict(batch);
        }
        let encoded = self.encode_batch(batch)?;
        let fused = encoded.fused();
        let act = self.config.activation;
        let dropout = self.config.dropout;
        let mut predictions = PerTask::splat(Array1::zeros(0));
        for task in ModalityKind::TASKS {
            let input = match task {
                ModalityKind::Multimodal => fused.view(),
                k => encoded.reps.get(k).view(),
            };
            let (y, _) = self.weights.heads.get(task).forward_train(
                input,
                self.running.get_mut(task).as_mut(),
                act,
                dropout,
                rng,
            );
            *predictions.get_mut(task) = y;
        }
        Ok(ForwardOutput {
            predictions,
            reps: encoded.reps,
        })
    }

    /// Eval-mode forward; a pure function of the batch and the parameters.
    pub fn predict(&self, batch: &Batch) -> Result<ForwardOutput> {
        let encoded = self.encode_batch(batch)?;
        let fused = encoded.fused();
        let act = self.config.activation;
        let mut predictions = PerTask::splat(Array1::zeros(0));
        for task in ModalityKind::TASKS {
            let input = match task {
                ModalityKind::Multimodal => fused.view(),
                k => encoded.reps.get(k).view(),
            };
            *predictions.get_mut(task) =
                self.weights
                    .heads
                    .get(task)
                    .forward_eval(input, self.running.get(task).as_ref(), act);
        }
        Ok(ForwardOutput {
            predictions,
            reps: encoded.reps,
        })
    }
}

fn outer(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.dot(&b2)
}
