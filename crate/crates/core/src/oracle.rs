//! Counterexample search by seeded random walks, without reset, plus
//! exhaustive bounded comparison of two machines.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::machine::{ConcreteInput, ConcreteOutput, Domain, Efsm, RegisterConfiguration, Signature};
use crate::sul::{Sul, SulError};
use crate::value::Value;

/// Sampling domain of one input parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamDomain {
    List(Vec<Value>),
    Range { from: i64, to: i64 },
    Weighted { values: Vec<Value>, weights: Vec<f64> },
}

impl ParamDomain {
    pub fn values(&self) -> Vec<Value> {
        match self {
            ParamDomain::List(v) | ParamDomain::Weighted { values: v, .. } => v.clone(),
            ParamDomain::Range { from, to } => (*from..=*to).map(Value::Int).collect(),
        }
    }

    pub fn contains(&self, v: &Value) -> bool {
        match self {
            ParamDomain::List(vs) | ParamDomain::Weighted { values: vs, .. } => vs.contains(v),
            ParamDomain::Range { from, to } => v.as_int().is_some_and(|i| *from <= i && i <= *to),
        }
    }
}

impl From<&Domain> for ParamDomain {
    fn from(d: &Domain) -> Self {
        match d {
            Domain::Values(v) => ParamDomain::List(v.clone()),
            Domain::Range { from, to } => ParamDomain::Range { from: *from, to: *to },
        }
    }
}

fn default_i1_weight() -> f64 {
    0.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub params: BTreeMap<String, ParamDomain>,
    /// Probability of drawing the next walk input from I₁.
    #[serde(default = "default_i1_weight")]
    pub i1_weight: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("no sampling domain for parameter `{0}`")]
    UnknownParameter(String),
    #[error("domain of `{0}` is empty")]
    Empty(String),
    #[error("weights of `{0}` must be positive and match its values")]
    Weights(String),
    #[error("I₁ weight must lie in [0, 1]")]
    I1Weight,
}

impl DomainSpec {
    /// Domains declared by a machine file.
    pub fn from_machine(m: &Efsm) -> Self {
        DomainSpec {
            params: m.domains.iter().map(|(k, d)| (k.clone(), d.into())).collect(),
            i1_weight: default_i1_weight(),
        }
    }

    /// Every input parameter of `sig` has a non-empty domain with valid
    /// weights.
    pub fn validate(&self, sig: &Signature) -> Result<(), DomainError> {
        if !(0.0..=1.0).contains(&self.i1_weight) {
            return Err(DomainError::I1Weight);
        }
        for decl in &sig.inputs {
            for p in &decl.params {
                let d = self
                    .params
                    .get(p)
                    .ok_or_else(|| DomainError::UnknownParameter(p.clone()))?;
                if d.values().is_empty() {
                    return Err(DomainError::Empty(p.clone()));
                }
                if let ParamDomain::Weighted { values, weights } = d {
                    if values.len() != weights.len() || weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
                        return Err(DomainError::Weights(p.clone()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, input: &ConcreteInput, sig: &Signature) -> bool {
        let Some(decl) = sig.input(&input.name) else {
            return false;
        };
        decl.params.len() == input.args.len()
            && decl
                .params
                .iter()
                .zip(&input.args)
                .all(|(p, v)| self.params.get(p).is_some_and(|d| d.contains(v)))
    }

    /// Draws a value for `param`; uniform unless weights are given.
    pub fn sample_value<R: Rng>(&self, param: &str, rng: &mut R) -> Result<Value, DomainError> {
        let d = self
            .params
            .get(param)
            .ok_or_else(|| DomainError::UnknownParameter(param.to_string()))?;
        match d {
            ParamDomain::List(v) => {
                if v.is_empty() {
                    return Err(DomainError::Empty(param.to_string()));
                }
                Ok(v[rng.gen_range(0..v.len())].clone())
            }
            ParamDomain::Range { from, to } => {
                if from > to {
                    return Err(DomainError::Empty(param.to_string()));
                }
                Ok(Value::Int(rng.gen_range(*from..=*to)))
            }
            ParamDomain::Weighted { values, weights } => {
                let dist = WeightedIndex::new(weights).map_err(|_| DomainError::Weights(param.to_string()))?;
                Ok(values[dist.sample(rng)].clone())
            }
        }
    }

    /// With probability `i1_weight` a uniform element of `i1`, otherwise a
    /// uniform abstract input with sampled parameters.
    pub fn sample_input<R: Rng>(
        &self,
        sig: &Signature,
        i1: &[ConcreteInput],
        rng: &mut R,
    ) -> Result<ConcreteInput, DomainError> {
        if !i1.is_empty() && rng.gen_bool(self.i1_weight) {
            return Ok(i1[rng.gen_range(0..i1.len())].clone());
        }
        let decl = &sig.inputs[rng.gen_range(0..sig.inputs.len())];
        let args = decl
            .params
            .iter()
            .map(|p| self.sample_value(p, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ConcreteInput::new(&decl.name, args))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Nfsm,
    Data,
}

/// A divergence found by a walk. `inputs` start at trace position
/// `start + 1`; the last one produced `observed`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub start: usize,
    pub inputs: Vec<ConcreteInput>,
    pub expected: String,
    pub observed: ConcreteOutput,
    pub level: Level,
}

pub enum Verdict<S> {
    Agree(S),
    Differ { expected: String, level: Level },
}

/// A model that can be run alongside the system.
pub trait Hypothesis {
    type State: Clone;

    fn check(
        &self,
        state: &Self::State,
        before: &RegisterConfiguration,
        input: &ConcreteInput,
        observed: &ConcreteOutput,
    ) -> Verdict<Self::State>;
}

impl Hypothesis for Efsm {
    type State = String;

    fn check(
        &self,
        state: &String,
        before: &RegisterConfiguration,
        input: &ConcreteInput,
        observed: &ConcreteOutput,
    ) -> Verdict<String> {
        match self.step(state, before, input) {
            Ok(step) if &step.output == observed => Verdict::Agree(step.state),
            Ok(step) => Verdict::Differ {
                level: if step.output.label() == observed.label() {
                    Level::Data
                } else {
                    Level::Nfsm
                },
                expected: step.output.to_string(),
            },
            Err(e) => Verdict::Differ {
                expected: format!("error: {e}"),
                level: Level::Nfsm,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct WalkStep<S> {
    pub state: S,
    pub before: RegisterConfiguration,
    pub input: ConcreteInput,
    pub output: ConcreteOutput,
}

#[derive(Debug, Clone)]
pub struct Walk<S> {
    /// Every step taken, the diverging one last.
    pub steps: Vec<WalkStep<S>>,
    pub counterexample: Option<Counterexample>,
}

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error(transparent)]
    Sul(#[from] SulError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Walks the system and the hypothesis in lockstep from the current
/// position for at most `budget` steps.
pub fn random_walk<H: Hypothesis, U: Sul + ?Sized, R: Rng>(
    hyp: &H,
    sul: &mut U,
    start: H::State,
    domain: &DomainSpec,
    i1: &[ConcreteInput],
    budget: usize,
    rng: &mut R,
) -> Result<Walk<H::State>, OracleError> {
    let first = sul.steps();
    let mut state = start;
    let mut steps = Vec::new();
    for _ in 0..budget {
        let input = domain.sample_input(sul.signature(), i1, rng)?;
        let before = sul.trace().last_registers(sul.signature());
        let output = sul.apply(&input)?;
        let verdict = hyp.check(&state, &before, &input, &output);
        steps.push(WalkStep {
            state: state.clone(),
            before,
            input,
            output: output.clone(),
        });
        match verdict {
            Verdict::Agree(next) => state = next,
            Verdict::Differ { expected, level } => {
                let ce = Counterexample {
                    start: first,
                    inputs: steps.iter().map(|s| s.input.clone()).collect(),
                    expected,
                    observed: output,
                    level,
                };
                return Ok(Walk {
                    steps,
                    counterexample: Some(ce),
                });
            }
        }
    }
    Ok(Walk {
        steps,
        counterexample: None,
    })
}

/// Concrete-level search against a generalised model.
pub fn data_counterexample<U: Sul + ?Sized, R: Rng>(
    model: &Efsm,
    sul: &mut U,
    start: &str,
    domain: &DomainSpec,
    i1: &[ConcreteInput],
    budget: usize,
    rng: &mut R,
) -> Result<Option<Counterexample>, OracleError> {
    Ok(random_walk(model, sul, start.to_string(), domain, i1, budget, rng)?.counterexample)
}

/// First divergence between two machines run in lockstep from their
/// initial states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub inputs: Vec<ConcreteInput>,
    pub left: String,
    pub right: String,
}

fn outcome(m: &Efsm, state: &str, regs: &RegisterConfiguration, x: &ConcreteInput) -> (String, Option<(String, RegisterConfiguration)>) {
    match m.step(state, regs, x) {
        Ok(s) => (s.output.to_string(), Some((s.state, s.registers))),
        Err(e) => (format!("error: {e}"), None),
    }
}

/// Random lockstep comparison over `steps` inputs drawn from `domain`.
pub fn lockstep_walk<R: Rng>(
    a: &Efsm,
    b: &Efsm,
    domain: &DomainSpec,
    steps: usize,
    rng: &mut R,
) -> Result<Option<Divergence>, DomainError> {
    let mut sa = (a.initial.clone(), RegisterConfiguration::bottom(&a.signature));
    let mut sb = (b.initial.clone(), RegisterConfiguration::bottom(&b.signature));
    let mut inputs = Vec::new();
    for _ in 0..steps {
        let x = domain.sample_input(&a.signature, &[], rng)?;
        inputs.push(x.clone());
        let (oa, na) = outcome(a, &sa.0, &sa.1, &x);
        let (ob, nb) = outcome(b, &sb.0, &sb.1, &x);
        match (na, nb) {
            (Some(na), Some(nb)) if oa == ob => {
                sa = na;
                sb = nb;
            }
            _ => {
                return Ok(Some(Divergence {
                    inputs,
                    left: oa,
                    right: ob,
                }))
            }
        }
    }
    Ok(None)
}

/// Breadth-first comparison over every sequence of `inputs` up to `depth`,
/// merging identical joint configurations. Returns a shortest divergence.
pub fn lockstep_explore(a: &Efsm, b: &Efsm, inputs: &[ConcreteInput], depth: usize) -> Option<Divergence> {
    type Joint = (String, RegisterConfiguration, String, RegisterConfiguration);
    let start: Joint = (
        a.initial.clone(),
        RegisterConfiguration::bottom(&a.signature),
        b.initial.clone(),
        RegisterConfiguration::bottom(&b.signature),
    );
    let mut seen: BTreeSet<Joint> = BTreeSet::new();
    let mut queue: VecDeque<(Joint, Vec<ConcreteInput>)> = VecDeque::new();
    seen.insert(start.clone());
    queue.push_back((start, Vec::new()));
    while let Some(((qa, ra, qb, rb), path)) = queue.pop_front() {
        if path.len() >= depth {
            continue;
        }
        for x in inputs {
            let mut next_path = path.clone();
            next_path.push(x.clone());
            let (oa, na) = outcome(a, &qa, &ra, x);
            let (ob, nb) = outcome(b, &qb, &rb, x);
            match (na, nb) {
                (Some(na), Some(nb)) if oa == ob => {
                    let joint = (na.0, na.1, nb.0, nb.1);
                    if seen.insert(joint.clone()) {
                        queue.push_back((joint, next_path));
                    }
                }
                _ => {
                    return Some(Divergence {
                        inputs: next_path,
                        left: oa,
                        right: ob,
                    })
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled::{drinks, DRINKS};
    use crate::machine::text::parse_machine;
    use crate::sul::SulSession;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec() -> DomainSpec {
        DomainSpec::from_machine(&drinks())
    }

    #[test]
    fn sampling_is_reproducible() {
        let s = spec();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| s.sample_value("c", &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        let single = DomainSpec {
            params: [("c".to_string(), ParamDomain::List(vec![Value::Int(5)]))].into(),
            i1_weight: 0.7,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..50).all(|_| single.sample_value("c", &mut rng).unwrap() == Value::Int(5)));
        assert!(single.sample_value("z", &mut rng).is_err());
    }

    #[test]
    fn weighted_frequencies() {
        let s = DomainSpec {
            params: [(
                "c".to_string(),
                ParamDomain::Weighted {
                    values: vec![Value::Int(1), Value::Int(2)],
                    weights: vec![1.0, 3.0],
                },
            )]
            .into(),
            i1_weight: 0.7,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ones = (0..10_000).filter(|_| s.sample_value("c", &mut rng).unwrap() == Value::Int(1)).count();
        assert!((ones as f64 / 10_000.0 - 0.25).abs() < 0.05, "{ones}");
    }

    #[test]
    fn exact_copy_has_no_counterexample() {
        let m = drinks();
        let mut sul = SulSession::open(m.clone(), None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ce = data_counterexample(&m, &mut sul, "s0", &spec(), &[], 2000, &mut rng).unwrap();
        assert!(ce.is_none());
        assert_eq!(sul.steps(), 2000);
        let ce = data_counterexample(&m, &mut sul, "s0", &spec(), &[], 0, &mut rng).unwrap();
        assert!(ce.is_none());
    }

    #[test]
    fn wrong_display_is_a_data_counterexample() {
        let wrong = parse_machine(&DRINKS.replace("Display(t:=t + c)", "Display(t:=c)")).unwrap();
        let mut sul = SulSession::open(drinks(), None).unwrap();
        let i1: Vec<ConcreteInput> = vec!["select(tea)".parse().unwrap(), "coin(50)".parse().unwrap()];
        let only_i1 = DomainSpec { i1_weight: 1.0, ..spec() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ce = data_counterexample(&wrong, &mut sul, "s0", &only_i1, &i1, 100, &mut rng)
            .unwrap()
            .unwrap();
        assert_eq!(ce.level, Level::Data);
        assert_eq!(ce.observed.to_string(), "Display(100)");
        assert_eq!(ce.expected, "Display(50)");
    }

    #[test]
    fn lockstep_finds_boundary() {
        let a = drinks();
        let b = parse_machine(&DRINKS.replace("[t < p]", "[t < p - 50]").replace("[t >= p]", "[t >= p - 50]")).unwrap();
        let inputs: Vec<ConcreteInput> = ["select(tea)", "coin(50)", "vend()"].iter().map(|s| s.parse().unwrap()).collect();
        assert!(lockstep_explore(&a, &a, &inputs, 8).is_none());
        let d = lockstep_explore(&a, &b, &inputs, 8).unwrap();
        assert_eq!(d.inputs.len(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!(lockstep_walk(&a, &a, &spec(), 5000, &mut rng).unwrap().is_none());
        assert!(lockstep_walk(&a, &b, &spec(), 5000, &mut rng).unwrap().is_some());
    }
}
