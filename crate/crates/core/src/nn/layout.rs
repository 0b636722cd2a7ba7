//! Flat parameter storage: every tensor lives at a fixed offset in one vector.
//!
//! A single flat buffer keeps the optimizer, checkpointing and gradient checks
//! trivial; layers only remember their offsets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
    Uniform { fan_in: usize },
    Ones,
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub init: Init,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
}

impl Layout {
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> usize {
        let offset = self.total;
        let spec = TensorSpec {
            name: name.into(),
            shape: shape.to_vec(),
            offset,
            init,
        };
        self.total += spec.len();
        self.tensors.push(spec);
        offset
    }

    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Name of the tensor owning flat index `i`.
    pub fn owner(&self, i: usize) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.range().contains(&i))
    }

    /// Draws every tensor in declaration order from `rng`.
    pub fn initialize<T: Scalar, R: Rng>(&self, rng: &mut R) -> Vec<T> {
        let mut p = vec![T::zero(); self.total];
        for t in &self.tensors {
            let slot = &mut p[t.range()];
            match t.init {
                Init::Uniform { fan_in } => {
                    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                    for x in slot {
                        *x = T::of(rng.random_range(-bound..bound));
                    }
                }
                Init::Ones => slot.fill(T::one()),
                Init::Zeros => {}
            }
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn offsets_are_contiguous_and_init_bounded() {
        let mut l = Layout::default();
        let a = l.push("a.w", &[3, 4], Init::Uniform { fan_in: 4 });
        let b = l.push("a.b", &[3], Init::Uniform { fan_in: 4 });
        let g = l.push("ln.gain", &[2], Init::Ones);
        assert_eq!((a, b, g, l.total), (0, 12, 15, 17));
        assert_eq!(l.owner(13).unwrap().name, "a.b");
        let p: Vec<f64> = l.initialize(&mut seed::rng(1, "init"));
        assert!(p[..15].iter().all(|x| x.abs() <= 0.5));
        assert_eq!(&p[15..17], &[1.0, 1.0]);
    }
}
