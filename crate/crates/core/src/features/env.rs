//! Ambient light and sound summaries.

use serde::{Deserialize, Serialize};

use crate::scalar::{mean, Scalar};

pub const ENV_FEATURES: [&str; 4] = ["l", "lmin", "lmax", "lmean"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvFeatures<T> {
    /// Mean light intensity (lux).
    pub l: T,
    /// Sound pressure level summaries (dB).
    pub lmin: T,
    pub lmax: T,
    pub lmean: T,
}

impl<T: Scalar> EnvFeatures<T> {
    pub fn to_vec(&self) -> Vec<T> {
        vec![self.l, self.lmin, self.lmax, self.lmean]
    }
}

/// `None` unless both streams have at least one sample.
pub fn env_features<T: Scalar>(light: &[T], sound: &[T]) -> Option<EnvFeatures<T>> {
    if light.is_empty() || sound.is_empty() {
        return None;
    }
    let lmin = sound.iter().copied().fold(T::infinity(), T::min);
    let lmax = sound.iter().copied().fold(T::neg_infinity(), T::max);
    let lmean = mean(sound).max(lmin).min(lmax);
    Some(EnvFeatures {
        l: mean(light),
        lmin,
        lmax,
        lmean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn small_example() {
        let f = env_features(&[100.0f64], &[40.0, 50.0, 60.0]).unwrap();
        assert_eq!(f.to_vec(), vec![100.0, 40.0, 60.0, 50.0]);
    }

    #[test]
    fn single_sound_sample() {
        let f = env_features(&[3.0f64], &[47.5]).unwrap();
        assert_eq!((f.lmin, f.lmax, f.lmean), (47.5, 47.5, 47.5));
    }

    #[test]
    fn empty_stream_is_absent() {
        assert!(env_features::<f64>(&[], &[1.0]).is_none());
        assert!(env_features::<f64>(&[1.0], &[]).is_none());
    }

    #[test]
    fn matches_streaming_recomputation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let light: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..800.0)).collect();
        let sound: Vec<f64> = (0..10_000).map(|_| rng.random_range(30.0..90.0)).collect();
        let f = env_features(&light, &sound).unwrap();
        // Welford-style running mean and extrema, a different accumulation path.
        let (mut m, mut lo, mut hi) = (0.0, f64::MAX, f64::MIN);
        for (i, &s) in sound.iter().enumerate() {
            m += (s - m) / (i + 1) as f64;
            lo = lo.min(s);
            hi = hi.max(s);
        }
        let mut ml = 0.0;
        for (i, &x) in light.iter().enumerate() {
            ml += (x - ml) / (i + 1) as f64;
        }
        assert!((f.lmean - m).abs() < 1e-9);
        assert!((f.l - ml).abs() < 1e-9);
        assert_eq!((f.lmin, f.lmax), (lo, hi));
        assert!(f.lmin <= f.lmean && f.lmean <= f.lmax);
    }
}
