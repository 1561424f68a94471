//! Running the conjecture, and the conjecture paired with a generalised
//! model, alongside the system.

use std::cell::RefCell;
use std::collections::HashMap;

use super::conjecture::{Conjecture, StateId};
use crate::machine::{ConcreteInput, ConcreteOutput, Efsm, OutputLabel, RegisterConfiguration};
use crate::oracle::{Hypothesis, Level, Verdict};

/// The abstract labels Δ allows for `input` at `q`, as text.
pub fn expected_labels(conj: &Conjecture, q: StateId, input: &str) -> String {
    let labels: Vec<String> = conj
        .labels(q, input)
        .into_iter()
        .map(|(l, _)| l.to_string())
        .collect();
    if labels.is_empty() {
        "nothing learned".into()
    } else {
        labels.join("|")
    }
}

type RowKey = (StateId, RegisterConfiguration, ConcreteInput);

/// Tracks the conjecture's control state; a step disagrees when Δ has no
/// matching label, or when Λ or an earlier step of the same walk holds
/// another output for the same configuration.
pub struct ConjectureView<'a> {
    conj: &'a Conjecture,
    walked: RefCell<HashMap<RowKey, ConcreteOutput>>,
}

impl<'a> ConjectureView<'a> {
    pub fn new(conj: &'a Conjecture) -> Self {
        ConjectureView {
            conj,
            walked: RefCell::new(HashMap::new()),
        }
    }
}

impl Hypothesis for ConjectureView<'_> {
    type State = StateId;

    fn check(
        &self,
        q: &StateId,
        before: &RegisterConfiguration,
        input: &ConcreteInput,
        observed: &ConcreteOutput,
    ) -> Verdict<StateId> {
        let conj = self.conj;
        let key = (*q, before.clone(), input.clone());
        let recorded = conj
            .row(*q, before, input)
            .map(|r| r.output.clone())
            .or_else(|| self.walked.borrow().get(&key).cloned());
        if let Some(out) = recorded {
            if &out != observed {
                return Verdict::Differ {
                    expected: out.to_string(),
                    level: Level::Nfsm,
                };
            }
        }
        let label = observed.label();
        let next = match label {
            OutputLabel::Refused => conj.target(*q, &input.name, &label),
            _ if conj.target(*q, &input.name, &OutputLabel::Refused).is_some() => None,
            _ => conj.target(*q, &input.name, &label),
        };
        match next {
            Some(t) => {
                self.walked.borrow_mut().insert(key, observed.clone());
                Verdict::Agree(t)
            }
            None => Verdict::Differ {
                expected: expected_labels(conj, *q, &input.name),
                level: Level::Nfsm,
            },
        }
    }
}

/// The conjecture decides control-level agreement; the model must then
/// reproduce the concrete output.
pub struct ModelView<'a> {
    pub conj: ConjectureView<'a>,
    pub model: &'a Efsm,
}

impl Hypothesis for ModelView<'_> {
    type State = (StateId, String);

    fn check(
        &self,
        (q, s): &(StateId, String),
        before: &RegisterConfiguration,
        input: &ConcreteInput,
        observed: &ConcreteOutput,
    ) -> Verdict<(StateId, String)> {
        let q2 = match self.conj.check(q, before, input, observed) {
            Verdict::Agree(q2) => q2,
            Verdict::Differ { expected, level } => return Verdict::Differ { expected, level },
        };
        match self.model.check(s, before, input, observed) {
            Verdict::Agree(s2) => Verdict::Agree((q2, s2)),
            Verdict::Differ { expected, .. } => Verdict::Differ {
                expected,
                level: Level::Data,
            },
        }
    }
}
