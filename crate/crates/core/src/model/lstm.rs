//! Bidirectional stacked LSTM with explicit backpropagation through time.
//!
//! Gate layout inside the `4h` axis is input, forget, cell, output. Each direction keeps
//! a single bias vector.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};

use super::layers::{join, to_f32_grid, Params};
use crate::rng::RandomSource;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmDirection {
    pub w_ih: Array2<f64>,
    pub w_hh: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Values kept from one forward pass of one direction.
#[derive(Clone, Debug)]
pub struct LstmTrace {
    input: Array2<f64>,
    hidden: Array2<f64>,
    cell: Array2<f64>,
    /// Post-activation gates `[i, f, g, o]` per step.
    gates: Array2<f64>,
}

impl LstmTrace {
    pub fn hidden(&self) -> &Array2<f64> {
        &self.hidden
    }
}

impl LstmDirection {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn init(input: usize, hidden: usize, rng: &mut RandomSource) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut draw = || to_f32_grid(rng.uniform_range(-bound, bound));
        Self {
            w_ih: Array2::from_shape_simple_fn((4 * hidden, input), &mut draw),
            w_hh: Array2::from_shape_simple_fn((4 * hidden, hidden), &mut draw),
            bias: Array1::from_shape_simple_fn(4 * hidden, &mut draw),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn forward(&self, input: ArrayView2<'_, f64>) -> LstmTrace {
        let steps = input.nrows();
        let h = self.hidden_dim();
        let projected = input.dot(&self.w_ih.t()) + &self.bias;
        let mut hidden = Array2::zeros((steps, h));
        let mut cell = Array2::zeros((steps, h));
        let mut gates = Array2::zeros((steps, 4 * h));
        let mut h_prev = Array1::<f64>::zeros(h);
        let mut c_prev = Array1::<f64>::zeros(h);
        for t in 0..steps {
            let z = &projected.row(t) + &self.w_hh.dot(&h_prev);
            let mut g_row = gates.row_mut(t);
            for j in 0..h {
                let i_g = sigmoid(z[j]);
                let f_g = sigmoid(z[h + j]);
                let c_g = z[2 * h + j].tanh();
                let o_g = sigmoid(z[3 * h + j]);
                let c = f_g * c_prev[j] + i_g * c_g;
                g_row[j] = i_g;
                g_row[h + j] = f_g;
                g_row[2 * h + j] = c_g;
                g_row[3 * h + j] = o_g;
                cell[[t, j]] = c;
                hidden[[t, j]] = o_g * c.tanh();
            }
            h_prev = hidden.row(t).to_owned();
            c_prev = cell.row(t).to_owned();
        }
        LstmTrace {
            input: input.to_owned(),
            hidden,
            cell,
            gates,
        }
    }

    /// `d_hidden[t]` is the loss gradient w.r.t. the emitted hidden state at step `t`.
    /// Returns the gradient w.r.t. the input rows when `want_input_grad` is set.
    pub fn backward(
        &self,
        trace: &LstmTrace,
        d_hidden: ArrayView2<'_, f64>,
        grad: &mut LstmDirection,
        want_input_grad: bool,
    ) -> Option<Array2<f64>> {
        let steps = trace.hidden.nrows();
        let h = self.hidden_dim();
        let mut d_z = Array2::<f64>::zeros((steps, 4 * h));
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);
        for t in (0..steps).rev() {
            let g = trace.gates.row(t);
            let mut dz_row = d_z.row_mut(t);
            for j in 0..h {
                let dh = d_hidden[[t, j]] + dh_next[j];
                let c = trace.cell[[t, j]];
                let tc = c.tanh();
                let (i_g, f_g, c_g, o_g) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let c_prev = if t > 0 { trace.cell[[t - 1, j]] } else { 0.0 };
                let dc = dh * o_g * (1.0 - tc * tc) + dc_next[j];
                dz_row[j] = dc * c_g * i_g * (1.0 - i_g);
                dz_row[h + j] = dc * c_prev * f_g * (1.0 - f_g);
                dz_row[2 * h + j] = dc * i_g * (1.0 - c_g * c_g);
                dz_row[3 * h + j] = dh * tc * o_g * (1.0 - o_g);
                dc_next[j] = dc * f_g;
            }
            dh_next = self.w_hh.t().dot(&d_z.row(t));
        }
        grad.w_ih += &d_z.t().dot(&trace.input);
        if steps > 1 {
            let prev = trace.hidden.slice(s![..steps - 1, ..]);
            grad.w_hh += &d_z.slice(s![1.., ..]).t().dot(&prev);
        }
        grad.bias += &d_z.sum_axis(Axis(0));
        want_input_grad.then(|| d_z.dot(&self.w_ih))
    }
}

impl Params for LstmDirection {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'_, f64>)) {
        f(join(prefix, "w_ih"), self.w_ih.view().into_dyn());
        f(join(prefix, "w_hh"), self.w_hh.view().into_dyn());
        f(join(prefix, "bias"), self.bias.view().into_dyn());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'_, f64>)) {
        f(join(prefix, "w_ih"), self.w_ih.view_mut().into_dyn());
        f(join(prefix, "w_hh"), self.w_hh.view_mut().into_dyn());
        f(join(prefix, "bias"), self.bias.view_mut().into_dyn());
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmLayer {
    pub forward: LstmDirection,
    pub backward: LstmDirection,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstm {
    pub layers: Vec<BiLstmLayer>,
}

#[derive(Clone, Debug)]
pub struct BiLstmTrace {
    layers: Vec<(LstmTrace, LstmTrace)>,
}

fn reversed(x: ArrayView2<'_, f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}

impl BiLstm {
    pub fn init(input: usize, hidden: usize, layers: usize, rng: &mut RandomSource) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let width = if l == 0 { input } else { 2 * hidden };
                BiLstmLayer {
                    forward: LstmDirection::init(width, hidden, rng),
                    backward: LstmDirection::init(width, hidden, rng),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| BiLstmLayer {
                    forward: LstmDirection::zeros(l.forward.w_ih.ncols(), l.forward.hidden_dim()),
                    backward: LstmDirection::zeros(l.backward.w_ih.ncols(), l.backward.hidden_dim()),
                })
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].forward.w_ih.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers[0].forward.hidden_dim()
    }

    /// Width of the summary vector: final forward state plus final backward state.
    pub fn output_dim(&self) -> usize {
        2 * self.hidden_dim()
    }

    /// Runs over every row of `input` (callers pass only the valid prefix).
    pub fn forward(&self, input: ArrayView2<'_, f64>) -> (Array1<f64>, BiLstmTrace) {
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut current = input.to_owned();
        for layer in &self.layers {
            let fwd = layer.forward.forward(current.view());
            let bwd = layer.backward.forward(reversed(current.view()).view());
            current = concatenate![Axis(1), fwd.hidden.view(), reversed(bwd.hidden.view()).view()];
            traces.push((fwd, bwd));
        }
        let (fwd, bwd) = traces.last().expect("at least one layer");
        let last = fwd.hidden.nrows() - 1;
        let summary = concatenate![Axis(0), fwd.hidden.row(last), bwd.hidden.row(last)];
        (summary, BiLstmTrace { layers: traces })
    }

    pub fn backward(&self, trace: &BiLstmTrace, d_summary: ArrayView1<'_, f64>, grad: &mut BiLstm) {
        let h = self.hidden_dim();
        let steps = trace.layers[0].0.hidden.nrows();
        // Gradient w.r.t. the layer output sequence, in forward time order, [steps x 2h].
        let mut d_out = Array2::<f64>::zeros((steps, 2 * h));
        d_out.slice_mut(s![steps - 1, ..h]).assign(&d_summary.slice(s![..h]));
        // The backward direction's final state belongs to time step 0.
        d_out.slice_mut(s![0, h..]).assign(&d_summary.slice(s![h..]));
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (fwd, bwd) = &trace.layers[l];
            let need_input = l > 0;
            let d_fwd_in = layer.forward.backward(
                fwd,
                d_out.slice(s![.., ..h]),
                &mut grad.layers[l].forward,
                need_input,
            );
            let d_bwd_rev = reversed(d_out.slice(s![.., h..]));
            let d_bwd_in = layer.backward.backward(
                bwd,
                d_bwd_rev.view(),
                &mut grad.layers[l].backward,
                need_input,
            );
            if let (Some(df), Some(db)) = (d_fwd_in, d_bwd_in) {
                d_out = df + reversed(db.view());
            }
        }
    }
}

impl Params for BiLstm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'_, f64>)) {
        for (l, layer) in self.layers.iter().enumerate() {
            layer.forward.visit(&join(prefix, &format!("{l}.fwd")), f);
            layer.backward.visit(&join(prefix, &format!("{l}.bwd")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'_, f64>)) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer.forward.visit_mut(&join(prefix, &format!("{l}.fwd")), f);
            layer.backward.visit_mut(&join(prefix, &format!("{l}.bwd")), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_input(rows: usize, cols: usize, rng: &mut RandomSource) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || rng.normal())
    }

    fn scalar_loss(summary: &Array1<f64>, weights: &Array1<f64>) -> f64 {
        summary.dot(weights)
    }

    #[test]
    fn summary_width_and_determinism() {
        let mut rng = RandomSource::new(2);
        let lstm = BiLstm::init(3, 4, 1, &mut rng);
        let x = sample_input(5, 3, &mut rng);
        let (a, _) = lstm.forward(x.view());
        let (b, _) = lstm.forward(x.view());
        assert_eq!(a.len(), 8);
        assert_eq!(a, b);
    }

    #[test]
    fn backward_direction_reads_sequence_reversed() {
        let mut rng = RandomSource::new(9);
        let mut lstm = BiLstm::init(2, 3, 1, &mut rng);
        // Make both directions identical: the backward final state on x equals the
        // forward final state on reversed x.
        lstm.layers[0].backward = lstm.layers[0].forward.clone();
        let x = sample_input(4, 2, &mut rng);
        let (on_x, _) = lstm.forward(x.view());
        let (on_rev, _) = lstm.forward(reversed(x.view()).view());
        for j in 0..3 {
            assert!((on_x[3 + j] - on_rev[j]).abs() < 1e-12);
        }
    }

    fn check_gradients(layers: usize) {
        let mut rng = RandomSource::new(11 + layers as u64);
        let lstm = BiLstm::init(3, 2, layers, &mut rng);
        let x = sample_input(4, 3, &mut rng);
        let probe = Array1::from_shape_simple_fn(4, || rng.normal());
        let (summary, trace) = lstm.forward(x.view());
        let _ = scalar_loss(&summary, &probe);
        let mut grad = lstm.zeros_like();
        lstm.backward(&trace, probe.view(), &mut grad);

        let mut analytic = Vec::new();
        grad.visit("", &mut |_, t| analytic.extend(t.iter().copied()));
        let n = analytic.len();
        let step = 1e-5;
        for idx in 0..n {
            let eval = |delta: f64| {
                let mut p = lstm.clone();
                let mut k = 0;
                p.visit_mut("", &mut |_, mut t| {
                    for v in t.iter_mut() {
                        if k == idx {
                            *v += delta;
                        }
                        k += 1;
                    }
                });
                scalar_loss(&p.forward(x.view()).0, &probe)
            };
            let numeric = (eval(step) - eval(-step)) / (2.0 * step);
            let err = (numeric - analytic[idx]).abs() / (numeric.abs() + analytic[idx].abs()).max(1e-6);
            assert!(err < 1e-5, "param {idx}: numeric {numeric} analytic {}", analytic[idx]);
        }
    }

    #[test]
    fn gradients_single_layer() {
        check_gradients(1);
    }

    #[test]
    fn gradients_stacked() {
        check_gradients(2);
    }
}
