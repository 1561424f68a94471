//! Learner configuration.

use serde::{Deserialize, Serialize};

use crate::generalise::SearchConfig;
use crate::machine::{ConcreteInput, Signature};
use crate::oracle::DomainSpec;

/// Which registers take part in state identity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionKind {
    /// Registers overwritten by the first input of every W sequence are
    /// ignored.
    #[default]
    Characterising,
    /// Every register counts.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Inputs used to learn transitions, in tie-break order.
    pub i1: Vec<ConcreteInput>,
    /// Inputs used for sampling; `i1` is prepended when missing.
    #[serde(rename = "is")]
    pub i_s: Vec<ConcreteInput>,
    #[serde(default)]
    pub h: Vec<ConcreteInput>,
    #[serde(default)]
    pub w: Vec<Vec<ConcreteInput>>,
    /// Parameter domains for the counterexample walks.
    pub domains: DomainSpec,
    #[serde(default = "defaults::k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::nfsm_budget")]
    pub nfsm_budget: usize,
    #[serde(default = "defaults::data_budget")]
    pub data_budget: usize,
    #[serde(default)]
    pub projection: ProjectionKind,
    #[serde(default = "defaults::max_restarts")]
    pub max_restarts: usize,
    /// Counterexample rounds before giving up.
    #[serde(default = "defaults::max_rounds")]
    pub max_rounds: usize,
    /// SUL steps the backbone may spend in total.
    #[serde(default = "defaults::max_backbone_steps")]
    pub max_backbone_steps: usize,
    /// Node cap of the unbounded transfer search.
    #[serde(default = "defaults::transfer_nodes")]
    pub transfer_nodes: usize,
    #[serde(default)]
    pub search: SearchConfig,
}

mod defaults {
    pub fn k() -> usize {
        3
    }
    pub fn nfsm_budget() -> usize {
        1000
    }
    pub fn data_budget() -> usize {
        10_000
    }
    pub fn max_restarts() -> usize {
        40
    }
    pub fn max_rounds() -> usize {
        40
    }
    pub fn max_backbone_steps() -> usize {
        30_000
    }
    pub fn transfer_nodes() -> usize {
        20_000
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("input `{0}` does not fit the signature")]
    BadInput(ConcreteInput),
    #[error("input `{0}` lies outside the sampling domains")]
    OutsideDomain(ConcreteInput),
    #[error("no I₁ input for event `{0}`")]
    Uncovered(String),
    #[error("h and W may only use I₁ inputs; `{0}` is not one")]
    NotInI1(ConcreteInput),
    #[error(transparent)]
    Domain(#[from] crate::oracle::DomainError),
}

impl LearnerConfig {
    /// Defaults with the given input sets and domains.
    pub fn new(i1: Vec<ConcreteInput>, i_s: Vec<ConcreteInput>, domains: DomainSpec) -> Self {
        LearnerConfig {
            i1,
            i_s,
            h: Vec::new(),
            w: Vec::new(),
            domains,
            k: defaults::k(),
            seed: 0,
            nfsm_budget: defaults::nfsm_budget(),
            data_budget: defaults::data_budget(),
            projection: ProjectionKind::default(),
            max_restarts: defaults::max_restarts(),
            max_rounds: defaults::max_rounds(),
            max_backbone_steps: defaults::max_backbone_steps(),
            transfer_nodes: defaults::transfer_nodes(),
            search: SearchConfig::default(),
        }
    }

    pub fn validate(&self, sig: &Signature) -> Result<(), ConfigError> {
        self.domains.validate(sig)?;
        for x in self.i1.iter().chain(&self.i_s) {
            sig.check_input(x).map_err(|_| ConfigError::BadInput(x.clone()))?;
            if !self.domains.contains(x, sig) {
                return Err(ConfigError::OutsideDomain(x.clone()));
            }
        }
        for decl in &sig.inputs {
            if !self.i1.iter().any(|x| x.name == decl.name) {
                return Err(ConfigError::Uncovered(decl.name.clone()));
            }
        }
        for x in self.h.iter().chain(self.w.iter().flatten()) {
            if !self.i1.contains(x) {
                return Err(ConfigError::NotInI1(x.clone()));
            }
        }
        Ok(())
    }

    /// Iₛ as an ordered list starting with I₁.
    pub fn sampling_inputs(&self) -> Vec<ConcreteInput> {
        let mut out = self.i1.clone();
        for x in &self.i_s {
            if !out.contains(x) {
                out.push(x.clone());
            }
        }
        out
    }
}
