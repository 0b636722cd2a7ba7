//! Integrated gradients along the straight path from a zero baseline.

use serde::{Deserialize, Serialize};

use crate::data::labels::{Head, N_HEADS};
use crate::data::mask::Modality;
use crate::error::{Error, Result};
use crate::nn::{FusionModel, ModelInput};
use crate::scalar::Scalar;

pub const DEFAULT_STEPS: usize = 256;

/// Right Riemann sum of the path integral:
/// `IG_i = (x_i - b_i) / steps * sum_{k=1..steps} grad_i(b + k/steps (x - b))`.
pub fn integrated_gradients_fn<T: Scalar, G>(x: &[T], baseline: &[T], steps: usize, mut grad: G) -> Result<Vec<T>>
where
    G: FnMut(&[T]) -> Result<Vec<T>>,
{
    if steps == 0 {
        return Err(Error::Config("integrated gradients need at least one step".into()));
    }
    let n = x.len();
    let mut acc = vec![T::zero(); n];
    let mut point = vec![T::zero(); n];
    for k in 1..=steps {
        let alpha = T::of_usize(k) / T::of_usize(steps);
        for i in 0..n {
            point[i] = baseline[i] + alpha * (x[i] - baseline[i]);
        }
        let g = grad(&point)?;
        for i in 0..n {
            acc[i] += g[i];
        }
    }
    let steps_t = T::of_usize(steps);
    Ok((0..n).map(|i| (x[i] - baseline[i]) * acc[i] / steps_t).collect())
}

/// Attributions of one head's probability for one window. Absent modalities carry `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgResult<T> {
    pub head: Head,
    pub steps: usize,
    /// `steps x vars`, step-major like the input.
    pub ehr_temporal: Vec<T>,
    pub ehr_static: Vec<T>,
    pub accel: Option<Vec<T>>,
    pub face: Option<Vec<T>>,
    pub env: Option<Vec<T>>,
    pub f_input: T,
    pub f_baseline: T,
}

impl<T: Scalar> IgResult<T> {
    pub fn total(&self) -> T {
        let blocks = [&self.accel, &self.face, &self.env];
        self.ehr_temporal.iter().chain(&self.ehr_static).copied().sum::<T>()
            + blocks.iter().filter_map(|b| b.as_ref()).flatten().copied().sum::<T>()
    }

    pub fn delta(&self) -> T {
        self.f_input - self.f_baseline
    }

    /// `|sum IG - (f(x) - f(x'))| / |f(x) - f(x')|`, undefined when `|delta| < 1e-6`.
    pub fn completeness_residual(&self) -> Option<f64> {
        let d = self.delta().as_f64();
        (d.abs() >= 1e-6).then(|| (self.total().as_f64() - d).abs() / d.abs())
    }

    /// Attributions of an optional modality; an error if it was absent.
    pub fn modality(&self, m: Modality) -> Result<&[T]> {
        let block = match m {
            Modality::Ehr => return Ok(&self.ehr_temporal),
            Modality::Accel => &self.accel,
            Modality::Face => &self.face,
            Modality::Env => &self.env,
        };
        block.as_deref().ok_or(Error::AbsentModality(m.name()))
    }
}

fn flatten<T: Scalar>(x: &ModelInput<T>) -> Vec<T> {
    let mut v = x.ehr_temporal.clone();
    v.extend_from_slice(&x.ehr_static);
    for m in &Modality::ALL[1..] {
        if x.mask.is_present(*m) {
            v.extend_from_slice(x.block(*m).expect("present block"));
        }
    }
    v
}

fn unflatten<T: Scalar>(template: &ModelInput<T>, flat: &[T]) -> ModelInput<T> {
    let mut x = template.clone();
    let mut at = 0;
    let mut take = |dst: &mut Vec<T>| {
        let n = dst.len();
        dst.copy_from_slice(&flat[at..at + n]);
        at += n;
    };
    take(&mut x.ehr_temporal);
    take(&mut x.ehr_static);
    for m in &Modality::ALL[1..] {
        if x.mask.is_present(*m) {
            take(x.block_mut(*m).expect("optional modality").as_mut().expect("present block"));
        }
    }
    x
}

/// Integrated gradients of `sigmoid(logit_head)` with respect to every present
/// input scalar, from the all-zero baseline that shares the window's mask.
pub fn integrated_gradients<T: Scalar>(model: &FusionModel<T>, input: &ModelInput<T>, head: Head, steps: usize) -> Result<IgResult<T>> {
    // drop absent blocks so they cannot leak into the result
    let mut x = input.clone();
    for m in &Modality::ALL[1..] {
        if !x.mask.is_present(*m) {
            *x.block_mut(*m).expect("optional modality") = None;
        }
    }
    let f_input = model.forward(&x)?.probs[head.index()];
    let flat = flatten(&x);
    let zeros = vec![T::zero(); flat.len()];
    let base = unflatten(&x, &zeros);
    let f_baseline = model.forward(&base)?.probs[head.index()];
    let ig = integrated_gradients_fn(&flat, &zeros, steps, |point| {
        let t = model.forward(&unflatten(&x, point))?;
        let p = t.probs[head.index()];
        let mut d = [T::zero(); N_HEADS];
        d[head.index()] = p * (T::one() - p);
        let g = model.input_gradients(&t, &d);
        let mut v = g.ehr_temporal;
        v.extend(g.ehr_static);
        for b in [g.accel, g.face, g.env].into_iter().flatten() {
            v.extend(b);
        }
        Ok(v)
    })?;
    let r = unflatten(&x, &ig);
    Ok(IgResult {
        head,
        steps,
        ehr_temporal: r.ehr_temporal,
        ehr_static: r.ehr_static,
        accel: r.accel,
        face: r.face,
        env: r.env,
        f_input,
        f_baseline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::mask::ModalityMask;
    use crate::nn::ModelConfig;
    use crate::seed;

    #[test]
    fn linear_function_gets_closed_form_attribution() {
        let w = [0.5, -2.0, 3.25, 0.0];
        let x = [1.0, 0.5, -0.25, 7.0];
        let ig = integrated_gradients_fn(&x, &[0.0; 4], 256, |_| Ok(w.to_vec())).unwrap();
        for i in 0..4 {
            assert_eq!(ig[i], w[i] * x[i]);
        }
        // a feature f ignores gets exactly zero
        assert_eq!(ig[3], 0.0);
    }

    #[test]
    fn feature_the_model_ignores_gets_exactly_zero() {
        let mut m = FusionModel::<f64>::new(ModelConfig::tiny(), 6).unwrap();
        let range = m.layout().get("face.conv1.w").unwrap().range();
        m.params[range].iter_mut().for_each(|w| *w = 0.0);
        let x = ModelInput::random(m.config(), ModalityMask::ALL, &mut seed::rng(6, "ig"));
        let r = integrated_gradients(&m, &x, Head::Stable, 64).unwrap();
        assert!(r.face.unwrap().iter().all(|&v| v == 0.0));
        assert!(r.accel.unwrap().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn quadratic_converges_to_exact_integral() {
        // f = sum x_i^2, grad = 2x, IG_i -> x_i^2 with O(1/steps) error
        let x = [0.3f64, -0.8];
        let ig = integrated_gradients_fn(&x, &[0.0; 2], 512, |p| Ok(p.iter().map(|v| 2.0 * v).collect())).unwrap();
        for i in 0..2 {
            assert!((ig[i] - x[i] * x[i]).abs() < x[i] * x[i] * 2.0 / 512.0 + 1e-15);
        }
    }

    #[test]
    fn model_attribution_is_complete_and_masked() {
        let m = FusionModel::<f64>::new(ModelConfig::tiny(), 5).unwrap();
        let mask = ModalityMask::new(false, true, false);
        let x = ModelInput::random(m.config(), mask, &mut seed::rng(5, "ig"));
        let r = integrated_gradients(&m, &x, Head::Unstable, 256).unwrap();
        assert!(r.accel.is_none() && r.env.is_none() && r.face.is_some());
        assert!(matches!(r.modality(Modality::Accel), Err(Error::AbsentModality("accel"))));
        let res = r.completeness_residual().unwrap();
        assert!(res < 0.01, "residual {res}");
        // right sums converge at O(1/steps)
        let r2 = integrated_gradients(&m, &x, Head::Unstable, 512).unwrap();
        let res2 = r2.completeness_residual().unwrap();
        assert!(res2 < 0.6 * res, "{res2} vs {res}");
    }
}
