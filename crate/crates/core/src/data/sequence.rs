use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::types::{FeatureSequence, FeatureSpec};

/// Fits a raw `[n x d]` matrix to `target_len` rows: zero rows are appended to short
/// inputs and long inputs keep their prefix.
pub fn pad_or_truncate(raw: ArrayView2<'_, f32>, spec: FeatureSpec) -> Result<FeatureSequence> {
    let (n, d) = raw.dim();
    if d != spec.feat_dim {
        return Err(Error::Validation(format!(
            "{} features have dimension {d}, expected {}",
            spec.modality, spec.feat_dim
        )));
    }
    if n == 0 {
        return Err(Error::Validation(format!("{} input has no rows", spec.modality)));
    }
    let keep = n.min(spec.seq_len);
    let mut values = Array2::zeros((spec.seq_len, d));
    values.slice_mut(s![..keep, ..]).assign(&raw.slice(s![..keep, ..]));
    FeatureSequence::new(spec, values, keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ModalityKind;

    fn spec() -> FeatureSpec {
        FeatureSpec::new(ModalityKind::Text, 50, 3).unwrap()
    }

    fn raw(n: usize) -> Array2<f32> {
        Array2::from_shape_fn((n, 3), |(i, j)| (i * 3 + j + 1) as f32)
    }

    #[test]
    fn pads_short_input() {
        let seq = pad_or_truncate(raw(30).view(), spec()).unwrap();
        assert_eq!(seq.valid_len(), 30);
        assert_eq!(seq.values().slice(s![..30, ..]), raw(30));
        assert!(seq.values().slice(s![30.., ..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn truncates_to_prefix() {
        let seq = pad_or_truncate(raw(60).view(), spec()).unwrap();
        assert_eq!(seq.valid_len(), 50);
        assert_eq!(seq.values(), &raw(60).slice(s![..50, ..]).to_owned());
    }

    #[test]
    fn exact_length_is_identity() {
        let seq = pad_or_truncate(raw(50).view(), spec()).unwrap();
        assert_eq!(seq.valid_len(), 50);
        assert_eq!(seq.values(), &raw(50));
    }

    #[test]
    fn rejects_wrong_dimension() {
        let bad = Array2::<f32>::ones((10, 4));
        assert!(matches!(pad_or_truncate(bad.view(), spec()), Err(Error::Validation(_))));
    }
}
