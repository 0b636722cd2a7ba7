//! JSON checkpoints: a named tensor dump with shapes and the model-config hash.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::model::{FusionModel, ModelConfig};

pub const CHECKPOINT_VERSION: &str = "acuity-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDump {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub config: ModelConfig,
    pub config_hash: String,
    /// Free-form provenance (arm, epoch, selection metric, upstream hashes).
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<TensorDump>,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &FusionModel<T>, meta: BTreeMap<String, String>) -> Self {
        let tensors = model
            .layout()
            .tensors
            .iter()
            .map(|t| TensorDump {
                name: t.name.clone(),
                shape: t.shape.clone(),
                values: model.params[t.range()].iter().map(|x| x.as_f64()).collect(),
            })
            .collect();
        Checkpoint {
            version: CHECKPOINT_VERSION.to_string(),
            config: model.config().clone(),
            config_hash: model.config().hash(),
            meta,
            tensors,
        }
    }

    /// Rebuilds the model after checking version, config hash and every tensor shape.
    pub fn to_model<T: Scalar>(&self) -> Result<FusionModel<T>> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("version {} (expected {CHECKPOINT_VERSION})", self.version)));
        }
        let hash = self.config.hash();
        if hash != self.config_hash {
            return Err(Error::Checkpoint(format!("config hash {} does not match recorded {}", hash, self.config_hash)));
        }
        let mut model = FusionModel::<T>::zeros(self.config.clone())?;
        let specs = model.layout().tensors.clone();
        if specs.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!("{} tensors, expected {}", self.tensors.len(), specs.len())));
        }
        for (spec, dump) in specs.iter().zip(&self.tensors) {
            if spec.name != dump.name || spec.shape != dump.shape || dump.values.len() != spec.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    dump.name, dump.shape, spec.name, spec.shape
                )));
            }
            for (dst, &v) in model.params[spec.range()].iter_mut().zip(&dump.values) {
                *dst = T::of(v);
            }
        }
        Ok(model)
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        Ok(serde_json::from_reader(input)?)
    }
}
