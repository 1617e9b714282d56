//! Representation mixup: pair each instance with a shuffled partner and interpolate
//! representations and targets with one Beta-distributed coefficient per batch.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::types::MixupConfig;

/// Interpolation weight and partner assignment shared by the acoustic and visual streams.
#[derive(Clone, Debug, PartialEq)]
pub struct MixupDraw {
    lambda: f64,
    permutation: Vec<usize>,
}

impl MixupDraw {
    pub fn new(lambda: f64, permutation: Vec<usize>) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Validation(format!("mixup lambda {lambda} outside [0, 1]")));
        }
        let mut seen = vec![false; permutation.len()];
        for &p in &permutation {
            if p >= seen.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Validation("mixup pairing is not a permutation".into()));
            }
        }
        Ok(Self { lambda, permutation })
    }

    pub fn sample(config: &MixupConfig, n: usize, rng: &mut RandomSource) -> Self {
        let lambda = sample_lambda(config, rng);
        let permutation = shuffle_pairing(n, rng);
        Self { lambda, permutation }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }
}

pub fn sample_lambda(config: &MixupConfig, rng: &mut RandomSource) -> f64 {
    rng.beta(config.beta_alpha).clamp(0.0, 1.0)
}

/// Uniformly random permutation of `0..n`; fixed points allowed.
pub fn shuffle_pairing(n: usize, rng: &mut RandomSource) -> Vec<usize> {
    rng.permutation(n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixedStream {
    /// `λ·F_i + (1−λ)·F_perm(i)` per row.
    pub reps: Array2<f64>,
    /// `λ·ŷ_i + (1−λ)·ŷ_perm(i)`.
    pub targets: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixedBatch {
    pub acoustic: MixedStream,
    pub visual: MixedStream,
}

pub fn mix_rows(reps: ArrayView2<'_, f64>, draw: &MixupDraw) -> Array2<f64> {
    let partner = reps.select(Axis(0), &draw.permutation);
    let lambda = draw.lambda;
    let mut out = reps.to_owned();
    out.zip_mut_with(&partner, |x, &p| *x = lambda * *x + (1.0 - lambda) * p);
    out
}

pub fn mix_values(values: ArrayView1<'_, f64>, draw: &MixupDraw) -> Array1<f64> {
    let lambda = draw.lambda;
    Array1::from_shape_fn(values.len(), |i| {
        lambda * values[i] + (1.0 - lambda) * values[draw.permutation[i]]
    })
}

pub fn mix_stream(reps: ArrayView2<'_, f64>, targets: ArrayView1<'_, f64>, draw: &MixupDraw) -> Result<MixedStream> {
    if reps.nrows() != targets.len() || targets.len() != draw.len() {
        return Err(Error::Shape(format!(
            "mixup sizes disagree: {} representations, {} targets, pairing over {}",
            reps.nrows(),
            targets.len(),
            draw.len()
        )));
    }
    Ok(MixedStream {
        reps: mix_rows(reps, draw),
        targets: mix_values(targets, draw),
    })
}

/// Mixes the acoustic and visual streams with the same λ and pairing.
pub fn mixup_batch(
    acoustic: (ArrayView2<'_, f64>, ArrayView1<'_, f64>),
    visual: (ArrayView2<'_, f64>, ArrayView1<'_, f64>),
    draw: &MixupDraw,
) -> Result<MixedBatch> {
    Ok(MixedBatch {
        acoustic: mix_stream(acoustic.0, acoustic.1, draw)?,
        visual: mix_stream(visual.0, visual.1, draw)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn draw(lambda: f64, perm: Vec<usize>) -> MixupDraw {
        MixupDraw::new(lambda, perm).unwrap()
    }

    #[test]
    fn half_mix_example() {
        let reps = array![[1.0, 2.0], [3.0, 4.0]];
        let targets = array![0.2, -0.2];
        let out = mix_stream(reps.view(), targets.view(), &draw(0.5, vec![1, 0])).unwrap();
        assert_eq!(out.reps.row(0), array![2.0, 3.0]);
        assert!(out.targets[0].abs() < 1e-15);
    }

    #[test]
    fn quarter_mix_example() {
        let reps = array![[4.0], [0.0]];
        let targets = array![1.0, -1.0];
        let out = mix_stream(reps.view(), targets.view(), &draw(0.25, vec![1, 0])).unwrap();
        assert_eq!(out.reps[[0, 0]], 1.0);
        assert_eq!(out.targets[0], -0.5);
    }

    #[test]
    fn lambda_one_is_identity() {
        let reps = array![[1.0, -1.0], [0.5, 2.0], [3.0, 0.0]];
        let targets = array![0.1, 0.2, 0.3];
        let out = mix_stream(reps.view(), targets.view(), &draw(1.0, vec![2, 0, 1])).unwrap();
        assert_eq!(out.reps, reps);
        assert_eq!(out.targets, targets);
    }

    #[test]
    fn size_mismatch_is_shape_error() {
        let reps = array![[1.0], [2.0]];
        let targets = array![0.1, 0.2, 0.3];
        let err = mix_stream(reps.view(), targets.view(), &draw(0.5, vec![1, 0])).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn draw_rejects_non_permutation() {
        assert!(MixupDraw::new(0.5, vec![0, 0]).is_err());
        assert!(MixupDraw::new(0.5, vec![0, 2]).is_err());
        assert!(MixupDraw::new(1.5, vec![0]).is_err());
    }

    #[test]
    fn single_instance_pairing_is_identity() {
        let mut rng = RandomSource::new(3);
        assert_eq!(shuffle_pairing(1, &mut rng), vec![0]);
    }

    #[test]
    fn pairing_is_reproducible_bijection() {
        let a = shuffle_pairing(5, &mut RandomSource::new(17));
        let b = shuffle_pairing(5, &mut RandomSource::new(17));
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn lambda_draws_in_unit_interval_and_uniform_mean() {
        let mut rng = RandomSource::new(99);
        let cfg = MixupConfig {
            beta_alpha: 1.0,
            ..MixupConfig::default()
        };
        let draws: Vec<f64> = (0..10_000).map(|_| sample_lambda(&cfg, &mut rng)).collect();
        assert!(draws.iter().all(|x| (0.0..=1.0).contains(x)));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((0.48..=0.52).contains(&mean), "mean {mean}");
        let mut rng = RandomSource::new(99);
        let again: Vec<f64> = (0..10_000).map(|_| sample_lambda(&cfg, &mut rng)).collect();
        assert_eq!(draws, again);
    }

    proptest! {
        #[test]
        fn exchange_symmetry_and_convexity(
            rows in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 1..8),
            lambda in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let n = rows.len();
            let reps = Array2::from_shape_fn((n, 3), |(i, j)| rows[i][j]);
            let perm = shuffle_pairing(n, &mut RandomSource::new(seed));
            let fwd = mix_rows(reps.view(), &draw(lambda, perm.clone()));
            // Exchange: put each partner first and the original second, mix with 1 - λ.
            let partners = reps.select(Axis(0), &perm);
            let stacked = ndarray::concatenate![Axis(0), partners.view(), reps.view()];
            let swap: Vec<usize> = (0..2 * n).map(|i| (i + n) % (2 * n)).collect();
            let exchanged = mix_rows(stacked.view(), &draw(1.0 - lambda, swap));
            for i in 0..n {
                for j in 0..3 {
                    let (a, b) = (reps[[i, j]], reps[[perm[i], j]]);
                    let x = fwd[[i, j]];
                    prop_assert!(x >= a.min(b) - 1e-12 && x <= a.max(b) + 1e-12);
                    prop_assert!((x - exchanged[[i, j]]).abs() < 1e-12);
                }
            }
            let identity: Vec<usize> = (0..n).collect();
            let fixed = mix_rows(reps.view(), &draw(lambda, identity));
            for (x, y) in fixed.iter().zip(reps.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
