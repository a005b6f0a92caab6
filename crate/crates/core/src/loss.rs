//! Rank losses and the mean absolute error metric.

use crate::error::{Error, Result};
use crate::types::Rank;

/// A loss on pairs of ranks. All variants vanish on the diagonal, are
/// positive off it (for a positive scale) and are symmetric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossFn {
    /// `|y - y'|`
    Absolute,
    /// `1[y != y']`
    ZeroOne,
    /// `delta * 1[y != y']`
    ScaledZeroOne(f64),
    /// `delta * |y - y'|`
    ScaledAbsolute(f64),
}

impl LossFn {
    pub fn eval(&self, y: Rank, yhat: Rank) -> f64 {
        let gap = absolute_loss(y, yhat) as f64;
        let miss = if y == yhat { 0.0 } else { 1.0 };
        match *self {
            LossFn::Absolute => gap,
            LossFn::ZeroOne => miss,
            LossFn::ScaledZeroOne(delta) => delta * miss,
            LossFn::ScaledAbsolute(delta) => delta * gap,
        }
    }

    /// Rejects non-positive or non-finite scales.
    pub fn validate(&self) -> Result<()> {
        match *self {
            LossFn::ScaledZeroOne(delta) | LossFn::ScaledAbsolute(delta) if !(delta.is_finite() && delta > 0.0) => {
                Err(Error::InvalidParameter(format!("loss scale must be positive, got {delta}")))
            }
            _ => Ok(()),
        }
    }
}

/// `|y - yhat|`
pub fn absolute_loss(y: Rank, yhat: Rank) -> usize {
    y.abs_diff(yhat)
}

/// Arithmetic mean of the absolute rank losses.
pub fn mean_absolute_error(truths: &[Rank], preds: &[Rank]) -> Result<f64> {
    if truths.len() != preds.len() {
        return Err(Error::LengthMismatch { left: truths.len(), right: preds.len() });
    }
    if truths.is_empty() {
        return Err(Error::Empty);
    }
    let total: usize = truths.iter().zip(preds).map(|(&y, &p)| absolute_loss(y, p)).sum();
    Ok(total as f64 / truths.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn absolute_loss_examples() {
        assert_eq!(absolute_loss(3, 3), 0);
        assert_eq!(absolute_loss(1, 3), 2);
        assert_eq!(absolute_loss(5, 2), 3);
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mean_absolute_error(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(mean_absolute_error(&[1, 3, 5], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(mean_absolute_error(&[2], &[4]).unwrap(), 2.0);
    }

    #[test]
    fn mae_errors() {
        assert!(matches!(mean_absolute_error(&[1, 2], &[1]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(mean_absolute_error(&[], &[]), Err(Error::Empty)));
    }

    #[test]
    fn scaled_losses() {
        assert_eq!(LossFn::ScaledZeroOne(0.5).eval(1, 4), 0.5);
        assert_eq!(LossFn::ScaledAbsolute(0.5).eval(1, 4), 1.5);
        assert_eq!(LossFn::ZeroOne.eval(2, 2), 0.0);
        assert!(LossFn::ScaledAbsolute(0.0).validate().is_err());
        assert!(LossFn::ScaledZeroOne(-1.0).validate().is_err());
        assert!(LossFn::Absolute.validate().is_ok());
    }

    proptest! {
        #[test]
        fn absolute_loss_is_a_metric(a in 1usize..12, b in 1usize..12, c in 1usize..12) {
            prop_assert_eq!(absolute_loss(a, b), absolute_loss(b, a));
            prop_assert!(absolute_loss(a, c) <= absolute_loss(a, b) + absolute_loss(b, c));
            prop_assert_eq!(absolute_loss(a, b) == 0, a == b);
        }

        #[test]
        fn losses_vanish_only_on_diagonal(a in 1usize..8, b in 1usize..8, delta in 0.01f64..3.0) {
            for loss in [LossFn::Absolute, LossFn::ZeroOne, LossFn::ScaledZeroOne(delta), LossFn::ScaledAbsolute(delta)] {
                prop_assert_eq!(loss.eval(a, b), loss.eval(b, a));
                prop_assert_eq!(loss.eval(a, b) > 0.0, a != b);
            }
        }

        #[test]
        fn mae_is_permutation_invariant(
            pairs in proptest::collection::vec((1usize..6, 1usize..6), 1..40),
            seed in any::<u64>(),
        ) {
            let (t, p): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
            let mut order: Vec<usize> = (0..pairs.len()).collect();
            // deterministic Fisher-Yates driven by the seed
            let mut s = seed | 1;
            for i in (1..order.len()).rev() {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                order.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let tp: Vec<_> = order.iter().map(|&i| t[i]).collect();
            let pp: Vec<_> = order.iter().map(|&i| p[i]).collect();
            let a = mean_absolute_error(&t, &p).unwrap();
            let b = mean_absolute_error(&tp, &pp).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
