use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// Round to the nearest `f32` so every stored parameter survives a 32-bit checkpoint exactly.
pub(crate) fn to_f32_grid(x: f64) -> f64 {
    x as f32 as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation.
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - pre.tanh().powi(2),
            Activation::Identity => 1.0,
        }
    }
}

/// Visits every tensor of a parameter tree under a dotted name.
pub trait Params {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'_, f64>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'_, f64>));

    fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit("", &mut |name, _| names.push(name));
        names
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut("", &mut |_, mut t| t.fill(value));
    }

    /// `self += alpha * other`; both trees must have the same layout.
    fn scaled_add(&mut self, alpha: f64, other: &Self)
    where
        Self: Sized,
    {
        let mut views = Vec::new();
        other.visit("", &mut |_, t| views.push(t.to_owned()));
        let mut i = 0;
        self.visit_mut("", &mut |_, mut t| {
            t.scaled_add(alpha, &views[i]);
            i += 1;
        });
    }

    fn sum_of_squares(&self) -> f64 {
        let mut acc = 0.0;
        self.visit("", &mut |_, t| acc += t.iter().map(|x| x * x).sum::<f64>());
        acc
    }

    fn snap_to_f32(&mut self) {
        self.visit_mut("", &mut |_, mut t| t.mapv_inplace(to_f32_grid));
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Affine map `W x + b` with `W` stored as `[out x in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// Uniform init in `±1/sqrt(input)`.
    pub fn init(input: usize, output: usize, rng: &mut RandomSource) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((output, input), || {
            to_f32_grid(rng.uniform_range(-bound, bound))
        });
        let bias = Array1::from_shape_simple_fn(output, || to_f32_grid(rng.uniform_range(-bound, bound)));
        Self { weight, bias }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward_rows(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.dot(&self.weight.t());
        out += &self.bias;
        out
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the input rows.
    pub fn backward_rows(
        &self,
        x: ArrayView2<'_, f64>,
        d_out: ArrayView2<'_, f64>,
        grad: &mut Linear,
    ) -> Array2<f64> {
        grad.weight += &d_out.t().dot(&x);
        grad.bias += &d_out.sum_axis(Axis(0));
        d_out.dot(&self.weight)
    }
}

impl Params for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'_, f64>)) {
        f(join(prefix, "weight"), self.weight.view().into_dyn());
        f(join(prefix, "bias"), self.bias.view().into_dyn());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'_, f64>)) {
        f(join(prefix, "weight"), self.weight.view_mut().into_dyn());
        f(join(prefix, "bias"), self.bias.view_mut().into_dyn());
    }
}

/// One feed-forward layer: `activation(W x + b)`.
pub fn ffn_layer(x: ArrayView1<'_, f64>, layer: &Linear, activation: Activation) -> Result<Array1<f64>> {
    if x.len() != layer.input_dim() {
        return Err(Error::Shape(format!(
            "ffn input has length {}, layer expects {}",
            x.len(),
            layer.input_dim()
        )));
    }
    let pre = layer.weight.dot(&x) + &layer.bias;
    Ok(pre.mapv(|v| activation.apply(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn identity3() -> Linear {
        Linear {
            weight: Array2::eye(3),
            bias: Array1::zeros(3),
        }
    }

    #[test]
    fn ffn_identity() {
        let x = array![1.0, -2.0, 3.0];
        let y = ffn_layer(x.view(), &identity3(), Activation::Identity).unwrap();
        assert_eq!(y, array![1.0, -2.0, 3.0]);
    }

    #[test]
    fn ffn_relu() {
        let x = array![1.0, -2.0, 3.0];
        let y = ffn_layer(x.view(), &identity3(), Activation::Relu).unwrap();
        assert_eq!(y, array![1.0, 0.0, 3.0]);
    }

    #[test]
    fn ffn_hand_matmul() {
        let layer = Linear {
            weight: array![[1.0, 1.0], [0.0, 2.0]],
            bias: array![1.0, 0.0],
        };
        let y = ffn_layer(array![2.0, 3.0].view(), &layer, Activation::Identity).unwrap();
        assert_eq!(y, array![6.0, 6.0]);
    }

    #[test]
    fn ffn_dimension_mismatch() {
        let err = ffn_layer(array![1.0, 2.0].view(), &identity3(), Activation::Relu).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn rows_match_vector_path() {
        let mut rng = RandomSource::new(1);
        let layer = Linear::init(4, 3, &mut rng);
        let x = Array2::from_shape_fn((2, 4), |(i, j)| (i * 4 + j) as f64 * 0.1);
        let rows = layer.forward_rows(x.view());
        for i in 0..2 {
            let v = ffn_layer(x.row(i), &layer, Activation::Identity).unwrap();
            for j in 0..3 {
                assert!((rows[[i, j]] - v[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn init_lands_on_f32_grid() {
        let mut rng = RandomSource::new(5);
        let layer = Linear::init(7, 3, &mut rng);
        assert!(layer.weight.iter().all(|&w| w == to_f32_grid(w)));
        assert_eq!(layer.tensor_names(), vec!["weight", "bias"]);
        assert_eq!(layer.num_params(), 24);
    }
}
