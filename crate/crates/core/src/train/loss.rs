//! Per-head masked, class-weighted binary cross-entropy.

use serde::{Deserialize, Serialize};

use crate::data::labels::{LabelSet, N_HEADS};
use crate::scalar::Scalar;

/// Weight of each class per head: `w[y] = min(cap, 1 / frequency of y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub positive: [f64; N_HEADS],
    pub negative: [f64; N_HEADS],
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights {
        positive: [1.0; N_HEADS],
        negative: [1.0; N_HEADS],
    };

    /// Inverse class frequencies over the defined labels, capped at `cap`.
    /// A class never observed gets the cap.
    pub fn from_labels<'a>(labels: impl Iterator<Item = &'a LabelSet>, cap: f64) -> Self {
        let mut pos = [0usize; N_HEADS];
        let mut neg = [0usize; N_HEADS];
        for l in labels {
            for (h, v) in l.0.iter().enumerate() {
                match v {
                    Some(true) => pos[h] += 1,
                    Some(false) => neg[h] += 1,
                    None => {}
                }
            }
        }
        let w = |k: usize, n: usize| if k == 0 { cap } else { (n as f64 / k as f64).min(cap) };
        ClassWeights {
            positive: std::array::from_fn(|h| w(pos[h], pos[h] + neg[h])),
            negative: std::array::from_fn(|h| w(neg[h], pos[h] + neg[h])),
        }
    }

    pub fn weight(&self, head: usize, y: bool) -> f64 {
        if y {
            self.positive[head]
        } else {
            self.negative[head]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOutput<T> {
    pub loss: T,
    /// Gradient of the loss with respect to each head's probability.
    pub dprobs: [T; N_HEADS],
    /// Gradient with respect to each head's logit, `w (p - y)`.
    pub dlogits: [T; N_HEADS],
}

/// `sum_h w_y * -(y ln p + (1 - y) ln(1 - p))` over heads with a defined label.
/// Undefined heads contribute exactly zero loss and gradient.
pub fn masked_bce_loss<T: Scalar>(probs: &[T; N_HEADS], labels: &LabelSet, weights: &ClassWeights) -> LossOutput<T> {
    let mut out = LossOutput {
        loss: T::zero(),
        dprobs: [T::zero(); N_HEADS],
        dlogits: [T::zero(); N_HEADS],
    };
    for h in 0..N_HEADS {
        let Some(y) = labels.0[h] else { continue };
        let w = T::of(weights.weight(h, y));
        let p = probs[h];
        let (one, yt) = (T::one(), if y { T::one() } else { T::zero() });
        out.loss += -w * (yt * p.ln() + (one - yt) * (one - p).ln());
        out.dprobs[h] = w * (-yt / p + (one - yt) / (one - p));
        out.dlogits[h] = w * (p - yt);
    }
    out
}

/// Same loss evaluated from logits with `softplus`, finite even when a
/// probability rounds to 0 or 1. Used by the trainer.
pub fn masked_bce_from_logits<T: Scalar>(logits: &[T; N_HEADS], probs: &[T; N_HEADS], labels: &LabelSet, weights: &ClassWeights) -> (T, [T; N_HEADS]) {
    let softplus = |z: T| if z > T::zero() { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    let mut loss = T::zero();
    let mut d = [T::zero(); N_HEADS];
    for h in 0..N_HEADS {
        let Some(y) = labels.0[h] else { continue };
        let w = T::of(weights.weight(h, y));
        let z = logits[h];
        // -ln p = softplus(-z), -ln(1-p) = softplus(z)
        loss += w * if y { softplus(-z) } else { softplus(z) };
        d[h] = w * (probs[h] - if y { T::one() } else { T::zero() });
    }
    (loss, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ops::sigmoid;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn labels(v: [Option<bool>; N_HEADS]) -> LabelSet {
        LabelSet(v)
    }

    #[test]
    fn perfect_predictions_have_vanishing_loss() {
        let mut l = LabelSet::UNDEFINED;
        l.0[0] = Some(true);
        l.0[4] = Some(false);
        let mut p = [0.5; N_HEADS];
        p[0] = 1.0 - 1e-12;
        p[4] = 1e-12;
        assert!(masked_bce_loss(&p, &l, &ClassWeights::UNIT).loss < 1e-10);
    }

    #[test]
    fn undefined_labels_contribute_nothing() {
        let out = masked_bce_loss(&[0.3; N_HEADS], &LabelSet::UNDEFINED, &ClassWeights::UNIT);
        assert_eq!(out.loss, 0.0);
        assert!(out.dprobs.iter().chain(&out.dlogits).all(|&g| g == 0.0));
    }

    #[test]
    fn class_weights_invert_frequency_with_cap() {
        let mut a = LabelSet::UNDEFINED;
        a.0[0] = Some(true);
        let mut b = LabelSet::UNDEFINED;
        b.0[0] = Some(false);
        let mut all = vec![a];
        all.extend(std::iter::repeat_n(b, 49));
        let w = ClassWeights::from_labels(all.iter(), 20.0);
        assert_eq!(w.positive[0], 20.0);
        assert!((w.negative[0] - 50.0 / 49.0).abs() < 1e-15);
        let w = ClassWeights::from_labels(all.iter(), 100.0);
        assert_eq!(w.positive[0], 50.0);
        assert_eq!(w.positive[1], 100.0);
    }

    proptest! {
        #[test]
        fn matches_scalar_oracle(s in 0u64..10_000) {
            let mut rng = seed::rng(s, "bce");
            let l = labels(std::array::from_fn(|_| match rng.random_range(0..3) { 0 => None, 1 => Some(true), _ => Some(false) }));
            let z: [f64; N_HEADS] = std::array::from_fn(|_| rng.random_range(-6.0..6.0));
            let p = z.map(sigmoid);
            let w = ClassWeights {
                positive: std::array::from_fn(|_| rng.random_range(1.0..20.0)),
                negative: std::array::from_fn(|_| rng.random_range(1.0..2.0)),
            };
            let mut want = 0.0;
            for h in 0..N_HEADS {
                if let Some(y) = l.0[h] {
                    let y = if y { 1.0 } else { 0.0 };
                    let wy = if y == 1.0 { w.positive[h] } else { w.negative[h] };
                    want += wy * -(y * p[h].ln() + (1.0 - y) * (1.0 - p[h]).ln());
                }
            }
            let out = masked_bce_loss(&p, &l, &w);
            prop_assert!((out.loss - want).abs() <= 1e-12 * (1.0 + want));
            let (lz, dz) = masked_bce_from_logits(&z, &p, &l, &w);
            prop_assert!((lz - want).abs() <= 1e-10 * (1.0 + want));
            for h in 0..N_HEADS {
                // chain rule through the sigmoid
                prop_assert!((out.dprobs[h] * p[h] * (1.0 - p[h]) - out.dlogits[h]).abs() < 1e-9);
                prop_assert_eq!(dz[h], out.dlogits[h]);
            }
        }
    }
}
