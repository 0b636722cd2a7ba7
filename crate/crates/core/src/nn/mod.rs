//! Modality-masked fusion network with exact reverse-mode gradients.

pub mod attention;
pub mod checkpoint;
pub mod encoders;
pub mod layout;
pub mod model;
pub mod ops;

pub use attention::{masked_attention, AttentionOutput, SEQ_LEN};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use layout::{Layout, TensorSpec};
pub use model::{ForwardTrace, FusionModel, InputGrads, Model, ModelConfig, ModelF32, ModelInput, Pooling};
