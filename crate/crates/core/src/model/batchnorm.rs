use ndarray::{Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};

use super::layers::{join, to_f32_grid, Params};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Learnable per-feature scale and shift.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

/// Running mean / (unbiased) variance used in eval mode.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            var: Array1::ones(dim),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'_, f64>)) {
        f(join(prefix, "running_mean"), self.mean.view().into_dyn());
        f(join(prefix, "running_var"), self.var.view().into_dyn());
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'_, f64>)) {
        f(join(prefix, "running_mean"), self.mean.view_mut().into_dyn());
        f(join(prefix, "running_var"), self.var.view_mut().into_dyn());
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormCache {
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
    batch_stats: bool,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            gamma: Array1::zeros(dim),
            beta: Array1::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward_eval(&self, x: ArrayView2<'_, f64>, running: &RunningStats) -> Array2<f64> {
        let inv_std = running.var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        ((&x - &running.mean) * &inv_std) * &self.gamma + &self.beta
    }

    /// Training-mode normalization with batch statistics; updates `running`.
    ///
    /// A batch of one has no spread, so it is normalized with the running statistics,
    /// which are then left untouched.
    pub fn forward_train(&self, x: ArrayView2<'_, f64>, running: &mut RunningStats) -> (Array2<f64>, BatchNormCache) {
        let n = x.nrows();
        if n < 2 {
            let inv_std = running.var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let normalized = (&x - &running.mean) * &inv_std;
            let out = &normalized * &self.gamma + &self.beta;
            return (
                out,
                BatchNormCache {
                    normalized,
                    inv_std,
                    batch_stats: false,
                },
            );
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
        let centered = &x - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let normalized = &centered * &inv_std;
        let out = &normalized * &self.gamma + &self.beta;

        let unbiased = &var * (n as f64 / (n as f64 - 1.0));
        running.mean.zip_mut_with(&mean, |r, &m| {
            *r = to_f32_grid((1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m)
        });
        running.var.zip_mut_with(&unbiased, |r, &v| {
            *r = to_f32_grid((1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v)
        });
        (
            out,
            BatchNormCache {
                normalized,
                inv_std,
                batch_stats: true,
            },
        )
    }

    pub fn backward(&self, cache: &BatchNormCache, d_out: ArrayView2<'_, f64>, grad: &mut BatchNorm) -> Array2<f64> {
        grad.gamma += &(&d_out * &cache.normalized).sum_axis(Axis(0));
        grad.beta += &d_out.sum_axis(Axis(0));
        let d_norm = &d_out * &self.gamma;
        if !cache.batch_stats {
            return d_norm * &cache.inv_std;
        }
        let n = d_out.nrows() as f64;
        let sum_d = d_norm.sum_axis(Axis(0));
        let sum_dx = (&d_norm * &cache.normalized).sum_axis(Axis(0));
        let mut dx = &d_norm * n - &sum_d - &(&cache.normalized * &sum_dx);
        dx *= &(&cache.inv_std / n);
        dx
    }
}

impl Params for BatchNorm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'_, f64>)) {
        f(join(prefix, "gamma"), self.gamma.view().into_dyn());
        f(join(prefix, "beta"), self.beta.view().into_dyn());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'_, f64>)) {
        f(join(prefix, "gamma"), self.gamma.view_mut().into_dyn());
        f(join(prefix, "beta"), self.beta.view_mut().into_dyn());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn fresh_eval_is_near_identity() {
        let bn = BatchNorm::new(2);
        let x = array![[1.0, -2.0]];
        let y = bn.forward_eval(x.view(), &RunningStats::new(2));
        assert!((y[[0, 0]] - 1.0 / (1.0 + BN_EPS).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn train_mode_normalizes_and_tracks() {
        let bn = BatchNorm::new(1);
        let mut running = RunningStats::new(1);
        let x = array![[1.0], [3.0]];
        let (y, _) = bn.forward_train(x.view(), &mut running);
        assert!((y[[0, 0]] + y[[1, 0]]).abs() < 1e-12);
        assert!((running.mean[0] - 0.2).abs() < 1e-6);
        // unbiased variance of {1, 3} is 2
        assert!((running.var[0] - (0.9 + 0.2)).abs() < 1e-6);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut bn = BatchNorm::new(2);
        bn.gamma = array![1.5, -0.5];
        bn.beta = array![0.1, 0.2];
        let x = array![[0.3, 1.0], [-1.2, 0.4], [0.8, -0.7]];
        let probe = array![[1.0, 2.0], [-0.5, 0.3], [0.7, -1.1]];
        let loss = |x: &Array2<f64>| {
            let mut r = RunningStats::new(2);
            (bn.forward_train(x.view(), &mut r).0 * &probe).sum()
        };
        let mut r = RunningStats::new(2);
        let (_, cache) = bn.forward_train(x.view(), &mut r);
        let mut g = BatchNorm::zeros(2);
        let dx = bn.backward(&cache, probe.view(), &mut g);
        for i in 0..3 {
            for j in 0..2 {
                let mut xp = x.clone();
                xp[[i, j]] += 1e-6;
                let mut xm = x.clone();
                xm[[i, j]] -= 1e-6;
                let numeric = (loss(&xp) - loss(&xm)) / 2e-6;
                assert!((numeric - dx[[i, j]]).abs() < 1e-6, "{numeric} vs {}", dx[[i, j]]);
            }
        }
    }
}
