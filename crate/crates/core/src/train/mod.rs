//! Training: masked loss, Adam, early stopping and the experiment arms.

pub mod arm;
pub mod early_stop;
pub mod loss;
pub mod optim;
pub mod trainer;

pub use arm::{experiment_arm_filter, Arm};
pub use early_stop::{run_epochs, EarlyStopper, StopOutcome, Verdict};
pub use loss::{masked_bce_from_logits, masked_bce_loss, ClassWeights, LossOutput};
pub use optim::{Adam, AdamConfig};
pub use trainer::{head_aurocs, predict, read_log_jsonl, selection_metric, train, write_log_jsonl, EpochRecord, Selection, TrainConfig, TrainOutcome};
