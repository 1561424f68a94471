//! Machines, events, registers and the deterministic EFSM interpreter shared
//! by the simulated system and learned models.

mod event;
pub mod export;
pub mod lint;
mod signature;
pub mod text;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::expr::{EvalError, Expr};
use crate::value::{Type, Value};

pub use event::{abstract_pair, ConcreteInput, ConcreteOutput, EventParseError, OutputLabel};
pub use signature::{update_registers, EventDecl, EventEnv, RegisterConfiguration, Signature};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MachineError {
    #[error("signature: {0}")]
    Signature(String),
    #[error("unknown event `{0}`")]
    UnknownEvent(String),
    #[error("`{event}` expects {expected} argument(s), found {found}")]
    Arity {
        event: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("invalid transition {index}: {reason}")]
    Transition { index: usize, reason: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("observability violated: `{state}` has `{input}/{output}` to several targets")]
    ObservabilityViolation {
        state: String,
        input: String,
        output: OutputLabel,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StepError {
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error("several guards hold in `{state}` for `{input}` with registers {registers}")]
    GuardConflict {
        state: String,
        input: Box<ConcreteInput>,
        registers: RegisterConfiguration,
    },
    #[error("evaluation failed in `{state}` for `{input}`: {error}")]
    Eval {
        state: String,
        input: Box<ConcreteInput>,
        error: EvalError,
    },
}

/// Declared finite value set of one parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Domain {
    Values(Vec<Value>),
    Range { from: i64, to: i64 },
}

impl Domain {
    pub fn values(&self) -> Vec<Value> {
        match self {
            Domain::Values(v) => v.clone(),
            Domain::Range { from, to } => (*from..=*to).map(Value::Int).collect(),
        }
    }

    pub fn contains(&self, v: &Value) -> bool {
        match self {
            Domain::Values(vs) => vs.contains(v),
            Domain::Range { from, to } => v.as_int().is_some_and(|i| *from <= i && i <= *to),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Values(vs) => {
                f.write_str("{")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("}")
            }
            Domain::Range { from, to } => write!(f, "{from}..{to}"),
        }
    }
}

/// `source --input[guard]/output(assign...)--> target`. The register update
/// is implicit: last observed value of every parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub source: String,
    pub input: String,
    pub guard: Expr,
    pub output: OutputLabel,
    pub assign: Vec<Expr>,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Efsm {
    pub signature: Signature,
    #[serde(default)]
    pub domains: BTreeMap<String, Domain>,
    pub states: Vec<String>,
    pub initial: String,
    pub transitions: Vec<Transition>,
}

/// Result of firing one concrete input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub state: String,
    pub registers: RegisterConfiguration,
    pub output: ConcreteOutput,
}

/// One trace entry: the event pair and the register configuration after it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub input: ConcreteInput,
    pub output: ConcreteOutput,
    pub registers: RegisterConfiguration,
}

/// An input/output trace with per-step register configurations, starting
/// from the all-⊥ configuration.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub entries: Vec<TraceEntry>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, sig: &Signature, input: ConcreteInput, output: ConcreteOutput) {
        let before = self.last_registers(sig);
        let registers = before.update(sig, &input, &output);
        self.entries.push(TraceEntry {
            input,
            output,
            registers,
        });
    }

    pub fn last_registers(&self, sig: &Signature) -> RegisterConfiguration {
        self.entries
            .last()
            .map_or_else(|| RegisterConfiguration::bottom(sig), |e| e.registers.clone())
    }

    /// Configuration before entry `index` (0-based).
    pub fn registers_before(&self, sig: &Signature, index: usize) -> RegisterConfiguration {
        if index == 0 {
            RegisterConfiguration::bottom(sig)
        } else {
            self.entries[index - 1].registers.clone()
        }
    }

    /// `#n input / output` lines, numbered from `first`.
    pub fn to_log(&self, first: usize) -> String {
        let mut out = String::new();
        for (i, e) in self.entries.iter().enumerate() {
            out.push_str(&format_log_line(first + i, &e.input, &e.output));
            out.push('\n');
        }
        out
    }
}

pub fn format_log_line(n: usize, input: &ConcreteInput, output: &ConcreteOutput) -> String {
    format!("#{n} {input} / {output}")
}

/// Parses a trace-log line back into its step number and events.
pub fn parse_log_line(line: &str) -> Result<(usize, ConcreteInput, ConcreteOutput), EventParseError> {
    let bad = || EventParseError(line.to_string());
    let rest = line.trim().strip_prefix('#').ok_or_else(bad)?;
    let (n, rest) = rest.split_once(' ').ok_or_else(bad)?;
    let n = n.parse().map_err(|_| bad())?;
    let (i, o) = rest.split_once(" / ").ok_or_else(bad)?;
    Ok((n, i.parse()?, o.parse()?))
}

/// The control machine: Δ as a set of `(source, input, output, target)`.
/// Ω self-loops are implicit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlNfsm {
    pub states: Vec<String>,
    pub edges: BTreeSet<(String, String, OutputLabel, String)>,
}

impl ControlNfsm {
    pub fn successors<'a>(&'a self, state: &'a str) -> impl Iterator<Item = &'a str> {
        self.edges
            .iter()
            .filter(move |e| e.0 == state)
            .map(|e| e.3.as_str())
    }

    pub fn is_strongly_connected(&self) -> bool {
        let Some(first) = self.states.first() else {
            return true;
        };
        let reach = |forward: bool| {
            let mut seen: BTreeSet<&str> = BTreeSet::new();
            let mut stack = vec![first.as_str()];
            while let Some(s) = stack.pop() {
                if !seen.insert(s) {
                    continue;
                }
                for e in &self.edges {
                    let (from, to) = if forward { (&e.0, &e.3) } else { (&e.3, &e.0) };
                    if from == s {
                        stack.push(to);
                    }
                }
            }
            seen.len()
        };
        reach(true) == self.states.len() && reach(false) == self.states.len()
    }
}

impl Efsm {
    /// Builds and validates a machine.
    pub fn new(
        signature: Signature,
        domains: BTreeMap<String, Domain>,
        states: Vec<String>,
        initial: String,
        transitions: Vec<Transition>,
    ) -> Result<Self, MachineError> {
        let m = Efsm {
            signature,
            domains,
            states,
            initial,
            transitions,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), MachineError> {
        let has = |s: &str| self.states.iter().any(|x| x == s);
        if !has(&self.initial) {
            return Err(MachineError::UnknownState(self.initial.clone()));
        }
        for (index, t) in self.transitions.iter().enumerate() {
            let bad = |reason: String| MachineError::Transition { index, reason };
            for s in [&t.source, &t.target] {
                if !has(s) {
                    return Err(MachineError::UnknownState(s.clone()));
                }
            }
            if self.signature.input(&t.input).is_none() {
                return Err(MachineError::UnknownEvent(t.input.clone()));
            }
            match &t.output {
                OutputLabel::Refused => return Err(bad("Ω is implicit and cannot label a transition".into())),
                OutputLabel::Quiescent => {
                    if !t.assign.is_empty() {
                        return Err(bad("ω carries no parameters".into()));
                    }
                    if t.source != t.target {
                        return Err(bad("ω transitions must be self-loops".into()));
                    }
                }
                OutputLabel::Named(name) => {
                    let decl = self
                        .signature
                        .output(name)
                        .ok_or_else(|| MachineError::UnknownEvent(name.clone()))?;
                    if decl.params.len() != t.assign.len() {
                        return Err(MachineError::Arity {
                            event: name.clone(),
                            expected: decl.params.len(),
                            found: t.assign.len(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn transitions_from<'a>(&'a self, state: &'a str, input: &'a str) -> impl Iterator<Item = &'a Transition> {
        self.transitions
            .iter()
            .filter(move |t| t.source == state && t.input == input)
    }

    /// Fires one concrete input.
    ///
    /// No transition for the abstract input: Ω, state unchanged. Transitions
    /// exist but no guard holds: ω, state unchanged. In both cases only the
    /// input parameters update registers.
    pub fn step(&self, state: &str, registers: &RegisterConfiguration, input: &ConcreteInput) -> Result<Step, StepError> {
        self.signature.check_input(input)?;
        let env = registers.env(&self.signature, input);
        let eval_err = |error| StepError::Eval {
            state: state.to_string(),
            input: Box::new(input.clone()),
            error,
        };
        let mut fired: Option<&Transition> = None;
        let mut any = false;
        for t in self.transitions_from(state, &input.name) {
            any = true;
            if t.guard.eval_bool(&env).map_err(eval_err)? {
                if fired.is_some() {
                    return Err(StepError::GuardConflict {
                        state: state.to_string(),
                        input: Box::new(input.clone()),
                        registers: registers.clone(),
                    });
                }
                fired = Some(t);
            }
        }
        let Some(t) = fired else {
            let output = if any {
                ConcreteOutput::Quiescent
            } else {
                ConcreteOutput::Refused
            };
            return Ok(Step {
                state: state.to_string(),
                registers: registers.update_input(&self.signature, input),
                output,
            });
        };
        let output = match &t.output {
            OutputLabel::Named(name) => {
                let mut args = Vec::with_capacity(t.assign.len());
                for e in &t.assign {
                    let v = e.eval(&env).map_err(eval_err)?;
                    if v.is_undefined() {
                        return Err(eval_err(EvalError::UndefinedOperand { op: "output" }));
                    }
                    args.push(v);
                }
                ConcreteOutput::Event {
                    name: name.clone(),
                    args,
                }
            }
            _ => ConcreteOutput::Quiescent,
        };
        Ok(Step {
            state: t.target.clone(),
            registers: registers.update(&self.signature, input, &output),
            output,
        })
    }

    /// Runs a sequence of inputs from `state` with all registers ⊥.
    pub fn run_trace(&self, state: &str, inputs: &[ConcreteInput]) -> Result<(Trace, String, RegisterConfiguration), StepError> {
        let mut trace = Trace::default();
        let mut state = state.to_string();
        let mut regs = RegisterConfiguration::bottom(&self.signature);
        for input in inputs {
            let step = self.step(&state, &regs, input)?;
            trace.entries.push(TraceEntry {
                input: input.clone(),
                output: step.output,
                registers: step.registers.clone(),
            });
            state = step.state;
            regs = step.registers;
        }
        Ok((trace, state, regs))
    }

    pub fn control_projection(&self) -> Result<ControlNfsm, MachineError> {
        let mut edges = BTreeSet::new();
        let mut targets: BTreeMap<(&str, &str, &OutputLabel), &str> = BTreeMap::new();
        for t in &self.transitions {
            let key = (t.source.as_str(), t.input.as_str(), &t.output);
            if let Some(prev) = targets.insert(key, &t.target) {
                if prev != t.target {
                    return Err(MachineError::ObservabilityViolation {
                        state: t.source.clone(),
                        input: t.input.clone(),
                        output: t.output.clone(),
                    });
                }
            }
            edges.insert((t.source.clone(), t.input.clone(), t.output.clone(), t.target.clone()));
        }
        Ok(ControlNfsm {
            states: self.states.clone(),
            edges,
        })
    }

    /// Type of every register/parameter, taken from the declared domains.
    pub fn declared_types(&self) -> BTreeMap<String, Type> {
        self.domains
            .iter()
            .filter_map(|(p, d)| d.values().first().and_then(Value::ty).map(|t| (p.clone(), t)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled::drinks;

    fn regs(text: &str) -> RegisterConfiguration {
        RegisterConfiguration(
            text.trim_matches(|c| c == '(' || c == ')')
                .split(',')
                .map(|v| v.parse().unwrap())
                .collect(),
        )
    }

    fn fire(state: &str, r: &str, input: &str) -> (String, String, String) {
        let m = drinks();
        let s = m.step(state, &regs(r), &input.parse().unwrap()).unwrap();
        (s.state, s.registers.to_string(), s.output.to_string())
    }

    #[test]
    fn select_from_idle() {
        assert_eq!(
            fire("s0", "(⊥,⊥,⊥,⊥)", "select(tea)"),
            ("s1".into(), "(tea,⊥,0,100)".into(), "Beverage(tea,0,100)".into())
        );
    }

    #[test]
    fn coin_displays_total() {
        assert_eq!(
            fire("s1", "(tea,⊥,0,100)", "coin(50)"),
            ("s1".into(), "(tea,50,50,100)".into(), "Display(50)".into())
        );
    }

    #[test]
    fn refused_coin_updates_input_register() {
        assert_eq!(
            fire("s0", "(tea,50,0,0)", "coin(100)"),
            ("s0".into(), "(tea,100,0,0)".into(), "Ω".into())
        );
    }

    #[test]
    fn vend_serves_when_paid() {
        assert_eq!(
            fire("s1", "(tea,50,100,100)", "vend()"),
            ("s0".into(), "(tea,50,0,0)".into(), "Serve(tea,0,0)".into())
        );
    }

    #[test]
    fn vend_quiescent_when_unpaid() {
        assert_eq!(
            fire("s1", "(tea,50,50,100)", "vend()"),
            ("s1".into(), "(tea,50,50,100)".into(), "ω".into())
        );
    }

    #[test]
    fn running_example_trace() {
        let m = drinks();
        let inputs: Vec<ConcreteInput> = ["select(tea)", "coin(50)", "vend()", "coin(50)", "coin(50)", "vend()"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let (trace, state, r) = m.run_trace("s0", &inputs).unwrap();
        let outs: Vec<String> = trace.entries.iter().map(|e| e.output.to_string()).collect();
        assert_eq!(
            outs,
            ["Beverage(tea,0,100)", "Display(50)", "ω", "Display(100)", "Reject(50)", "Serve(tea,0,0)"]
        );
        assert_eq!(state, "s0");
        assert_eq!(r.to_string(), "(tea,50,0,0)");
    }

    #[test]
    fn empty_run() {
        let m = drinks();
        let (trace, state, r) = m.run_trace("s0", &[]).unwrap();
        assert!(trace.is_empty());
        assert_eq!(state, "s0");
        assert_eq!(r, RegisterConfiguration::bottom(&m.signature));
    }

    #[test]
    fn projection_of_drinks() {
        let nfsm = drinks().control_projection().unwrap();
        assert_eq!(nfsm.edges.len(), 5);
        assert!(nfsm.is_strongly_connected());
    }

    #[test]
    fn guarded_pair_gives_two_edges() {
        let nfsm = drinks().control_projection().unwrap();
        let coin: Vec<_> = nfsm.edges.iter().filter(|e| e.1 == "coin").collect();
        assert_eq!(coin.len(), 2);
    }

    #[test]
    fn observability_violation_detected() {
        let mut m = drinks();
        let mut t = m.transitions[1].clone();
        t.target = "s0".into();
        m.transitions.push(t);
        assert!(matches!(m.control_projection(), Err(MachineError::ObservabilityViolation { .. })));
    }

    #[test]
    fn guard_conflict_is_an_error() {
        let mut m = drinks();
        m.transitions[2].guard = crate::expr::parse("t + c >= p").unwrap();
        let err = m
            .step("s1", &regs("(tea,50,50,100)"), &"coin(50)".parse().unwrap())
            .unwrap_err();
        assert!(matches!(err, StepError::GuardConflict { .. }));
    }

    #[test]
    fn log_lines_round_trip() {
        let line = format_log_line(3, &"vend()".parse().unwrap(), &ConcreteOutput::Quiescent);
        assert_eq!(line, "#3 vend() / ω");
        let (n, i, o) = parse_log_line(&line).unwrap();
        assert_eq!((n, i.to_string(), o), (3, "vend()".to_string(), ConcreteOutput::Quiescent));
    }
}
