//! Conjecture states, the abstract transition relation Δ and the sample
//! table Λ.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::machine::{ConcreteInput, ConcreteOutput, OutputLabel, RegisterConfiguration, Signature};
use crate::value::Value;

pub type StateId = usize;

/// Characterisation map: W sequence → abstract responses.
pub type Characterisation = BTreeMap<Vec<ConcreteInput>, Vec<OutputLabel>>;

/// A conjecture state: responses to W observed from a reference
/// configuration (projected, see [`Projection`]).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateKey {
    pub pi1: Characterisation,
    pub pi2: RegisterConfiguration,
}

/// Which registers take part in state identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Projection {
    keep: Vec<bool>,
}

impl Projection {
    /// Keeps every register except those written by the first input of
    /// every W sequence. An empty W keeps nothing.
    pub fn for_w(sig: &Signature, w: &[Vec<ConcreteInput>]) -> Self {
        let n = sig.registers().len();
        if w.is_empty() {
            return Projection { keep: vec![false; n] };
        }
        let mut keep = vec![false; n];
        for (i, reg) in sig.registers().iter().enumerate() {
            keep[i] = w.iter().any(|seq| match seq.first() {
                None => true,
                Some(x) => !sig.input(&x.name).is_some_and(|d| d.params.contains(reg)),
            });
        }
        Projection { keep }
    }

    pub fn identity(sig: &Signature) -> Self {
        Projection {
            keep: vec![true; sig.registers().len()],
        }
    }

    pub fn apply(&self, r: &RegisterConfiguration) -> RegisterConfiguration {
        RegisterConfiguration(
            r.0.iter()
                .zip(&self.keep)
                .map(|(v, k)| if *k { v.clone() } else { Value::Undefined })
                .collect(),
        )
    }

    /// Projection of a partially known configuration; `None` when a kept
    /// register is unknown.
    pub fn apply_partial(&self, r: &[Option<Value>]) -> Option<RegisterConfiguration> {
        r.iter()
            .zip(&self.keep)
            .map(|(v, k)| if *k { v.clone() } else { Some(Value::Undefined) })
            .collect::<Option<Vec<_>>>()
            .map(RegisterConfiguration)
    }
}

/// One observed concrete transition: a Λ row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Sample {
    pub state: StateId,
    pub before: RegisterConfiguration,
    pub input: ConcreteInput,
    pub output: ConcreteOutput,
    pub after: RegisterConfiguration,
    /// 1-based position of the step in the learning trace.
    pub step: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Conjecture {
    pub keys: Vec<StateKey>,
    pub names: Vec<String>,
    /// `(state, abstract input, abstract output) → target`.
    pub delta: BTreeMap<(StateId, String, OutputLabel), StateId>,
    pub samples: Vec<Sample>,
    by_row: HashMap<(StateId, RegisterConfiguration, ConcreteInput), usize>,
    by_label: HashMap<(StateId, String, OutputLabel), Vec<usize>>,
}

/// Outcome of adding a Λ row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Added {
    New,
    Duplicate,
    /// A row with the same state, configuration and input but another output.
    Conflict(ConcreteOutput),
}

impl Conjecture {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn find(&self, key: &StateKey) -> Option<StateId> {
        self.keys.iter().position(|k| k == key)
    }

    /// Returns the state for `key`, creating it if needed. `seen` is the
    /// full configuration used to name the state.
    pub fn intern(&mut self, key: StateKey, seen: &RegisterConfiguration) -> (StateId, bool) {
        if let Some(id) = self.find(&key) {
            return (id, false);
        }
        let mut name = String::from("q");
        for labels in key.pi1.values() {
            for l in labels {
                match l {
                    OutputLabel::Refused => name.push('Ω'),
                    OutputLabel::Quiescent => name.push('ω'),
                    OutputLabel::Named(n) => name.push_str(&n[..n.chars().next().map_or(0, char::len_utf8)]),
                }
            }
        }
        name.push_str(&seen.to_string());
        if self.names.contains(&name) {
            name = format!("{name}#{}", self.keys.len());
        }
        self.keys.push(key);
        self.names.push(name);
        (self.keys.len() - 1, true)
    }

    pub fn labels(&self, q: StateId, input: &str) -> Vec<(&OutputLabel, StateId)> {
        self.delta
            .range((q, input.to_string(), OutputLabel::Refused)..)
            .take_while(|((s, i, _), _)| *s == q && i == input)
            .map(|((_, _, l), t)| (l, *t))
            .collect()
    }

    pub fn target(&self, q: StateId, input: &str, label: &OutputLabel) -> Option<StateId> {
        match label {
            OutputLabel::Refused | OutputLabel::Quiescent => {
                if self.delta.contains_key(&(q, input.to_string(), label.clone())) {
                    Some(q)
                } else {
                    None
                }
            }
            OutputLabel::Named(_) => self.delta.get(&(q, input.to_string(), label.clone())).copied(),
        }
    }

    /// Δ* along a path of abstract responses. Ω and ω never move.
    pub fn follow(&self, q: StateId, steps: &[(String, OutputLabel)]) -> Option<StateId> {
        let mut cur = q;
        for (i, l) in steps {
            cur = match l {
                OutputLabel::Refused | OutputLabel::Quiescent => cur,
                _ => self.delta.get(&(cur, i.clone(), l.clone())).copied()?,
            };
        }
        Some(cur)
    }

    pub fn add_sample(&mut self, s: Sample) -> Added {
        let key = (s.state, s.before.clone(), s.input.clone());
        if let Some(&i) = self.by_row.get(&key) {
            let old = &self.samples[i].output;
            return if *old == s.output {
                Added::Duplicate
            } else {
                Added::Conflict(old.clone())
            };
        }
        let i = self.samples.len();
        self.by_row.insert(key, i);
        self.by_label
            .entry((s.state, s.input.name.clone(), s.output.label()))
            .or_default()
            .push(i);
        self.samples.push(s);
        Added::New
    }

    /// The Λ row for this exact state, configuration and input.
    pub fn row(&self, q: StateId, before: &RegisterConfiguration, input: &ConcreteInput) -> Option<&Sample> {
        self.by_row
            .get(&(q, before.clone(), input.clone()))
            .map(|i| &self.samples[*i])
    }

    /// Λ rows at `q` for abstract input `input` that produced `label`.
    pub fn rows_with(&self, q: StateId, input: &str, label: &OutputLabel) -> impl Iterator<Item = &Sample> {
        self.by_label
            .get(&(q, input.to_string(), label.clone()))
            .into_iter()
            .flatten()
            .map(|i| &self.samples[*i])
    }

    pub fn rows<'a>(&'a self, q: StateId, input: &'a ConcreteInput) -> impl Iterator<Item = &'a Sample> {
        self.samples.iter().filter(move |s| s.state == q && &s.input == input)
    }

    /// States reachable from `from` through Δ, in discovery order.
    pub fn reachable(&self, from: StateId) -> Vec<StateId> {
        let mut seen = vec![from];
        let mut i = 0;
        while i < seen.len() {
            let q = seen[i];
            for ((s, _, _), t) in &self.delta {
                if *s == q && !seen.contains(t) {
                    seen.push(*t);
                }
            }
            i += 1;
        }
        seen
    }

    /// Every abstract input of `inputs` has at least one Δ entry at each
    /// state reachable from `from`.
    pub fn component_complete(&self, from: StateId, inputs: &BTreeSet<String>) -> bool {
        self.reachable(from)
            .into_iter()
            .all(|q| inputs.iter().all(|i| !self.labels(q, i).is_empty()))
    }

    /// The sampled machine restricted to states reachable from `from`.
    pub fn to_sampled(&self, signature: &Signature, from: StateId) -> SampledFsm {
        let reach = self.reachable(from);
        let index: BTreeMap<StateId, usize> = reach.iter().enumerate().map(|(i, q)| (*q, i)).collect();
        let delta = self
            .delta
            .iter()
            .filter_map(|((s, i, l), t)| Some(((*index.get(s)?, i.clone(), l.clone()), *index.get(t)?)))
            .collect();
        let samples = self
            .samples
            .iter()
            .filter_map(|s| {
                let state = *index.get(&s.state)?;
                Some(Sample { state, ..s.clone() })
            })
            .collect();
        SampledFsm {
            signature: signature.clone(),
            states: reach.iter().map(|q| self.names[*q].clone()).collect(),
            current: 0,
            delta,
            samples,
        }
    }
}

/// A control machine annotated with concrete samples. `current` is the
/// state the learner believes the system is in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SampledFsm {
    pub signature: Signature,
    pub states: Vec<String>,
    pub current: usize,
    #[serde(serialize_with = "delta_as_list")]
    pub delta: BTreeMap<(usize, String, OutputLabel), usize>,
    pub samples: Vec<Sample>,
}

fn delta_as_list<S: serde::Serializer>(
    d: &BTreeMap<(usize, String, OutputLabel), usize>,
    s: S,
) -> Result<S::Ok, S::Error> {
    s.collect_seq(d.iter().map(|((q, i, l), t)| (q, i, l, t)))
}

impl SampledFsm {
    pub fn labels(&self, q: usize, input: &str) -> Vec<(&OutputLabel, usize)> {
        self.delta
            .iter()
            .filter(|((s, i, _), _)| *s == q && i == input)
            .map(|((_, _, l), t)| (l, *t))
            .collect()
    }

    /// The abstract inputs that label at least one transition.
    pub fn inputs(&self) -> BTreeSet<String> {
        self.delta.keys().map(|(_, i, _)| i.clone()).collect()
    }

    /// Pairs `(a, b)` of samples taken from the same configuration with the
    /// same concrete input but different outputs.
    pub fn conflicts(&self, a: &[usize], b: &[usize]) -> bool {
        let rows = |set: &[usize]| -> BTreeMap<(RegisterConfiguration, ConcreteInput), ConcreteOutput> {
            self.samples
                .iter()
                .filter(|s| set.contains(&s.state))
                .map(|s| ((s.before.clone(), s.input.clone()), s.output.clone()))
                .collect()
        };
        let ra = rows(a);
        rows(b)
            .iter()
            .any(|(k, o)| ra.get(k).is_some_and(|o2| o2 != o))
    }
}
