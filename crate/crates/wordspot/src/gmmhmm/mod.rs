//! Continuous-density left-to-right HMM engine with diagonal-covariance GMM
//! emissions: likelihoods, Viterbi alignment, and embedded Baum-Welch
//! training.

pub mod gmm;
pub mod graph;
pub mod hmm;
pub mod train;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gmm::{log_sum_exp, Gmm};
pub use graph::{GraphBuilder, GraphPath, GraphUnit, HmmGraph, UnitRole};
pub use hmm::{
    concat_models, viterbi_align, viterbi_align_full, AlignedUnit, Alignment, CompositeHmm, GmmHmm,
};
pub use train::{train_embedded, TrainConfig, TrainReport};

/// A labeled collection of unit models sharing one feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    pub models: BTreeMap<String, GmmHmm>,
    pub feature_dim: usize,
    /// Charset descriptor, e.g. "full" or "reduced".
    pub charset: String,
}

impl ModelSet {
    pub fn new(feature_dim: usize, charset: &str) -> Self {
        Self {
            models: BTreeMap::new(),
            feature_dim,
            charset: charset.to_string(),
        }
    }

    pub fn insert(&mut self, model: GmmHmm) {
        self.models.insert(model.label.clone(), model);
    }

    pub fn labels(&self) -> Vec<String> {
        self.models.keys().cloned().collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (label, m) in &self.models {
            if m.dim() != self.feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.feature_dim,
                    got: m.dim(),
                });
            }
            if &m.label != label {
                return Err(Error::InvalidConfig(format!(
                    "model keyed {label} carries label {}",
                    m.label
                )));
            }
            m.validate()?;
        }
        Ok(())
    }
}
