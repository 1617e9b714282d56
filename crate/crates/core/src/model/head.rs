use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use serde::{Deserialize, Serialize};

use super::batchnorm::{BatchNorm, BatchNormCache, RunningStats};
use super::layers::{join, Activation, Linear, Params};
use crate::rng::RandomSource;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadArch {
    /// Batch norm followed by three feed-forward layers.
    #[default]
    Standard,
    /// A single affine map to the output.
    Affine,
}

/// Task head mapping a representation to one scalar sentiment score.
#[derive(Clone, Debug, PartialEq)]
pub enum Head {
    Standard {
        bn: BatchNorm,
        fc1: Linear,
        fc2: Linear,
        out: Linear,
    },
    Affine {
        out: Linear,
    },
}

#[derive(Clone, Debug)]
pub enum HeadCache {
    Standard {
        bn: BatchNormCache,
        normalized: Array2<f64>,
        pre1: Array2<f64>,
        act1: Array2<f64>,
        mask1: Option<Array2<f64>>,
        pre2: Array2<f64>,
        act2: Array2<f64>,
        mask2: Option<Array2<f64>>,
    },
    Affine {
        input: Array2<f64>,
    },
}

/// Inverted dropout mask, or `None` when dropout is off.
fn dropout_mask(shape: (usize, usize), p: f64, rng: &mut RandomSource) -> Option<Array2<f64>> {
    (p > 0.0).then(|| {
        let keep = 1.0 - p;
        Array2::from_shape_simple_fn(shape, || if rng.uniform() < keep { 1.0 / keep } else { 0.0 })
    })
}

impl Head {
    pub fn init(arch: HeadArch, input: usize, hidden: [usize; 2], rng: &mut RandomSource) -> Self {
        match arch {
            HeadArch::Standard => Head::Standard {
                bn: BatchNorm::new(input),
                fc1: Linear::init(input, hidden[0], rng),
                fc2: Linear::init(hidden[0], hidden[1], rng),
                out: Linear::init(hidden[1], 1, rng),
            },
            HeadArch::Affine => Head::Affine {
                out: Linear::init(input, 1, rng),
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            Head::Standard { bn, fc1, fc2, out } => Head::Standard {
                bn: BatchNorm::zeros(bn.dim()),
                fc1: Linear::zeros(fc1.input_dim(), fc1.output_dim()),
                fc2: Linear::zeros(fc2.input_dim(), fc2.output_dim()),
                out: Linear::zeros(out.input_dim(), out.output_dim()),
            },
            Head::Affine { out } => Head::Affine {
                out: Linear::zeros(out.input_dim(), out.output_dim()),
            },
        }
    }

    pub fn arch(&self) -> HeadArch {
        match self {
            Head::Standard { .. } => HeadArch::Standard,
            Head::Affine { .. } => HeadArch::Affine,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Head::Standard { fc1, .. } => fc1.input_dim(),
            Head::Affine { out } => out.input_dim(),
        }
    }

    pub fn forward_eval(&self, x: ArrayView2<'_, f64>, running: Option<&RunningStats>, act: Activation) -> Array1<f64> {
        match self {
            Head::Standard { bn, fc1, fc2, out } => {
                let running = running.expect("standard head needs running statistics");
                let normalized = bn.forward_eval(x, running);
                let h1 = fc1.forward_rows(normalized.view()).mapv(|v| act.apply(v));
                let h2 = fc2.forward_rows(h1.view()).mapv(|v| act.apply(v));
                out.forward_rows(h2.view()).column(0).to_owned()
            }
            Head::Affine { out } => out.forward_rows(x).column(0).to_owned(),
        }
    }

    pub fn forward_train(
        &self,
        x: ArrayView2<'_, f64>,
        running: Option<&mut RunningStats>,
        act: Activation,
        dropout: f64,
        rng: &mut RandomSource,
    ) -> (Array1<f64>, HeadCache) {
        match self {
            Head::Standard { bn, fc1, fc2, out } => {
                let running = running.expect("standard head needs running statistics");
                let (normalized, bn_cache) = bn.forward_train(x, running);
                let pre1 = fc1.forward_rows(normalized.view());
                let mut act1 = pre1.mapv(|v| act.apply(v));
                let mask1 = dropout_mask(act1.dim(), dropout, rng);
                if let Some(m) = &mask1 {
                    act1 *= m;
                }
                let pre2 = fc2.forward_rows(act1.view());
                let mut act2 = pre2.mapv(|v| act.apply(v));
                let mask2 = dropout_mask(act2.dim(), dropout, rng);
                if let Some(m) = &mask2 {
                    act2 *= m;
                }
                let y = out.forward_rows(act2.view()).column(0).to_owned();
                (
                    y,
                    HeadCache::Standard {
                        bn: bn_cache,
                        normalized,
                        pre1,
                        act1,
                        mask1,
                        pre2,
                        act2,
                        mask2,
                    },
                )
            }
            Head::Affine { out } => (
                out.forward_rows(x).column(0).to_owned(),
                HeadCache::Affine { input: x.to_owned() },
            ),
        }
    }

    /// Accumulates into `grad` and returns the gradient w.r.t. the head input rows.
    pub fn backward(&self, cache: &HeadCache, d_y: ArrayView1<'_, f64>, act: Activation, grad: &mut Head) -> Array2<f64> {
        let d_y = d_y.insert_axis(Axis(1));
        match (self, cache, grad) {
            (
                Head::Standard { bn, fc1, fc2, out },
                HeadCache::Standard {
                    bn: bn_cache,
                    normalized,
                    pre1,
                    act1,
                    mask1,
                    pre2,
                    act2,
                    mask2,
                },
                Head::Standard {
                    bn: g_bn,
                    fc1: g1,
                    fc2: g2,
                    out: g_out,
                },
            ) => {
                let mut d_act2 = out.backward_rows(act2.view(), d_y, g_out);
                if let Some(m) = mask2 {
                    d_act2 *= m;
                }
                d_act2.zip_mut_with(pre2, |d, &p| *d *= act.derivative(p));
                let mut d_act1 = fc2.backward_rows(act1.view(), d_act2.view(), g2);
                if let Some(m) = mask1 {
                    d_act1 *= m;
                }
                d_act1.zip_mut_with(pre1, |d, &p| *d *= act.derivative(p));
                let d_norm = fc1.backward_rows(normalized.view(), d_act1.view(), g1);
                bn.backward(bn_cache, d_norm.view(), g_bn)
            }
            (Head::Affine { out }, HeadCache::Affine { input }, Head::Affine { out: g_out }) => {
                out.backward_rows(input.view(), d_y, g_out)
            }
            _ => panic!("head, cache and gradient architectures disagree"),
        }
    }
}

impl Params for Head {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'_, f64>)) {
        match self {
            Head::Standard { bn, fc1, fc2, out } => {
                bn.visit(&join(prefix, "bn"), f);
                fc1.visit(&join(prefix, "fc1"), f);
                fc2.visit(&join(prefix, "fc2"), f);
                out.visit(&join(prefix, "out"), f);
            }
            Head::Affine { out } => out.visit(&join(prefix, "out"), f),
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'_, f64>)) {
        match self {
            Head::Standard { bn, fc1, fc2, out } => {
                bn.visit_mut(&join(prefix, "bn"), f);
                fc1.visit_mut(&join(prefix, "fc1"), f);
                fc2.visit_mut(&join(prefix, "fc2"), f);
                out.visit_mut(&join(prefix, "out"), f);
            }
            Head::Affine { out } => out.visit_mut(&join(prefix, "out"), f),
        }
    }
}
