//! Patient-level train/validation/test partition.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl CohortSplit {
    pub fn assignment(&self, patient_id: &str) -> Option<SplitName> {
        // Ids are stored sorted.
        if self.train.binary_search_by(|p| p.as_str().cmp(patient_id)).is_ok() {
            Some(SplitName::Train)
        } else if self.val.binary_search_by(|p| p.as_str().cmp(patient_id)).is_ok() {
            Some(SplitName::Val)
        } else if self.test.binary_search_by(|p| p.as_str().cmp(patient_id)).is_ok() {
            Some(SplitName::Test)
        } else {
            None
        }
    }
}

/// Rounded share with at least one member.
fn share(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).max(1)
}

/// 8:2 development/test by patient, then 9:1 train/validation within development.
///
/// The result depends only on the set of ids and the seed, not on input order.
pub fn split_cohort<S: AsRef<str>>(patient_ids: &[S], master_seed: u64) -> Result<CohortSplit> {
    let unique: BTreeSet<&str> = patient_ids.iter().map(|s| s.as_ref()).collect();
    if unique.len() != patient_ids.len() {
        return Err(Error::Config("duplicate patient ids in cohort".into()));
    }
    let n = unique.len();
    if n < 10 {
        return Err(Error::CohortTooSmall(n));
    }
    let mut ids: Vec<&str> = unique.into_iter().collect();
    let mut rng = seed::rng(master_seed, "split");
    ids.shuffle(&mut rng);

    let n_test = share(n, 0.2);
    let n_dev = n - n_test;
    let n_val = share(n_dev, 0.1);
    let sorted = |xs: &[&str]| {
        let mut v: Vec<String> = xs.iter().map(|s| s.to_string()).collect();
        v.sort();
        v
    };
    Ok(CohortSplit {
        test: sorted(&ids[..n_test]),
        val: sorted(&ids[n_test..n_test + n_val]),
        train: sorted(&ids[n_test + n_val..]),
    })
}
