//! Synthetic cohorts with a planted, tunable dependence between latent acuity
//! and every modality.

pub mod bayes;
pub mod config;
pub mod describe;
pub mod generate;

pub use bayes::bayes_auroc;
pub use config::{GenConfig, GEN_CONFIG_VERSION};
pub use describe::{describe_cohort, describe_windows, CohortTable};
pub use generate::{generate_cohort, generate_patient};
