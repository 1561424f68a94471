//! Machines shipped with the crate.

use crate::machine::{text::parse_machine, Efsm};

/// Source text of the vending machine.
pub const DRINKS: &str = include_str!("../data/drinks.efsm");

/// The vending machine: select a drink, pay 100, get served.
pub fn drinks() -> Efsm {
    parse_machine(DRINKS).expect("bundled machine parses")
}

/// Learner configuration for the vending machine.
pub const DRINKS_CONFIG: &str = include_str!("../data/drinks.json");

pub fn drinks_config() -> crate::learner::LearnerConfig {
    serde_json::from_str(DRINKS_CONFIG).expect("bundled configuration parses")
}
