//! Accelerometer resampling and window statistics (MVM, SDVM, MANGLE, SDANGLE, DF, position).

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::data::record::Placement;
use crate::error::{Error, Result};
use crate::scalar::{mean, population_sd, Scalar};

pub const TARGET_RATE_HZ: f64 = 10.0;

pub const ACCEL_FEATURES: [&str; 6] = ["mvm", "sdvm", "mangle", "sdangle", "df", "position"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelSample<T> {
    /// Seconds from an arbitrary origin.
    pub t: f64,
    pub xyz: [T; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccelStream<T> {
    pub placement: Placement,
    pub native_rate: f64,
    pub samples: Vec<AccelSample<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelFeatures<T> {
    pub mvm: T,
    pub sdvm: T,
    pub mangle: T,
    pub sdangle: T,
    pub df: T,
    pub position: T,
}

impl<T: Scalar> AccelFeatures<T> {
    pub fn to_vec(&self) -> Vec<T> {
        vec![self.mvm, self.sdvm, self.mangle, self.sdangle, self.df, self.position]
    }
}

/// Averages samples into uniform bins of `1 / target_hz` seconds starting at the
/// first sample; empty bins repeat the previous bin.
pub fn resample_accel<T: Scalar>(stream: &AccelStream<T>, target_hz: f64) -> Result<AccelStream<T>> {
    if stream.native_rate < target_hz {
        return Err(Error::UpsamplingUnsupported(stream.native_rate));
    }
    let Some(first) = stream.samples.first() else {
        return Ok(AccelStream {
            placement: stream.placement,
            native_rate: target_hz,
            samples: Vec::new(),
        });
    };
    let t0 = first.t;
    let bin_of = |t: f64| ((t - t0) * target_hz + 1e-9).floor() as usize;
    let n_bins = bin_of(stream.samples.last().unwrap().t) + 1;

    let mut sums = vec![[T::zero(); 3]; n_bins];
    let mut counts = vec![0usize; n_bins];
    for s in &stream.samples {
        let b = bin_of(s.t);
        for (acc, &v) in sums[b].iter_mut().zip(&s.xyz) {
            *acc += v;
        }
        counts[b] += 1;
    }
    let mut out = Vec::with_capacity(n_bins);
    let mut last = [T::zero(); 3];
    for (b, (sum, &count)) in sums.iter().zip(&counts).enumerate() {
        if count > 0 {
            let c = T::of_usize(count);
            last = [sum[0] / c, sum[1] / c, sum[2] / c];
        }
        out.push(AccelSample {
            t: t0 + b as f64 / target_hz,
            xyz: last,
        });
    }
    Ok(AccelStream {
        placement: stream.placement,
        native_rate: target_hz,
        samples: out,
    })
}

/// Angle between the x axis and the acceleration vector; `pi/2` for a zero vector.
pub fn x_angle<T: Scalar>(xyz: [T; 3], magnitude: T) -> T {
    if magnitude == T::zero() {
        return T::FRAC_PI_2();
    }
    let c = (xyz[0] / magnitude).max(-T::one()).min(T::one());
    c.acos()
}

/// Frequency (Hz) of the largest non-DC DFT magnitude; 0 for a flat signal.
/// Ties resolve to the lowest frequency.
pub fn dominant_frequency<T: Scalar>(signal: &[T], rate_hz: f64) -> T {
    let n = signal.len();
    if n < 2 {
        return T::zero();
    }
    let mut buf: Vec<Complex<T>> = signal.iter().map(|&x| Complex::new(x, T::zero())).collect();
    FftPlanner::<T>::new().plan_fft_forward(n).process(&mut buf);
    let scale = signal.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let floor = T::epsilon().sqrt() * T::of_usize(n) * scale;
    let mut best_k = 0;
    let mut best = floor;
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let m = c.norm();
        if m > best {
            best = m;
            best_k = k;
        }
    }
    T::of(best_k as f64 * rate_hz / n as f64)
}

/// Features of one window's (already 10 Hz) samples; `None` below two samples.
pub fn accel_features<T: Scalar>(samples: &[AccelSample<T>], placement: Placement, rate_hz: f64) -> Option<AccelFeatures<T>> {
    if samples.len() < 2 {
        return None;
    }
    let vm: Vec<T> = samples
        .iter()
        .map(|s| (s.xyz[0] * s.xyz[0] + s.xyz[1] * s.xyz[1] + s.xyz[2] * s.xyz[2]).sqrt())
        .collect();
    let angle: Vec<T> = samples.iter().zip(&vm).map(|(s, &m)| x_angle(s.xyz, m)).collect();
    Some(AccelFeatures {
        mvm: mean(&vm),
        sdvm: population_sd(&vm),
        mangle: mean(&angle),
        sdangle: population_sd(&angle),
        df: dominant_frequency(&vm, rate_hz),
        position: if placement == Placement::Wrist { T::one() } else { T::zero() },
    })
}

/// Picks the wrist stream when both placements have data, resamples, and computes features.
pub fn window_accel_features<T: Scalar>(streams: &[AccelStream<T>]) -> Result<Option<AccelFeatures<T>>> {
    for placement in [Placement::Wrist, Placement::Ankle] {
        let mut resampled = Vec::new();
        for s in streams.iter().filter(|s| s.placement == placement) {
            resampled.extend(resample_accel(s, TARGET_RATE_HZ)?.samples);
        }
        if let Some(f) = accel_features(&resampled, placement, TARGET_RATE_HZ) {
            return Ok(Some(f));
        }
    }
    Ok(None)
}
