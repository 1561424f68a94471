//! Static and bounded-exhaustive checks on a machine definition.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::Serialize;

use super::{ConcreteInput, Efsm, RegisterConfiguration, StepError};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LintReport {
    pub issues: Vec<Issue>,
    /// Configurations visited by the exhaustive check.
    pub explored: usize,
    /// The exploration stopped at its bound before exhausting the space.
    pub truncated: bool,
}

impl LintReport {
    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(|i| i.severity == Severity::Error)
    }

    fn push(&mut self, severity: Severity, message: String) {
        self.issues.push(Issue { severity, message });
    }
}

impl fmt::Display for LintReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.issues {
            let tag = match i.severity {
                Severity::Warning => "warning",
                Severity::Error => "error",
            };
            writeln!(f, "{tag}: {}", i.message)?;
        }
        write!(f, "{} configuration(s) explored", self.explored)?;
        if self.truncated {
            write!(f, " (bound reached)")?;
        }
        Ok(())
    }
}

/// Every concrete input over the declared domains. Inputs with an
/// undeclared parameter domain are left out.
pub fn concrete_inputs(m: &Efsm) -> Vec<ConcreteInput> {
    let mut out = Vec::new();
    for decl in &m.signature.inputs {
        let mut combos: Vec<Vec<Value>> = vec![Vec::new()];
        let mut complete = true;
        for p in &decl.params {
            let Some(d) = m.domains.get(p) else {
                complete = false;
                break;
            };
            let values = d.values();
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push(v.clone());
                        c
                    })
                })
                .collect();
        }
        if complete {
            out.extend(combos.into_iter().map(|args| ConcreteInput::new(&decl.name, args)));
        }
    }
    out
}

/// Checks observability and strong connectivity of the control machine,
/// declared domains, and explores reachable configurations from the initial
/// state (registers ⊥) breadth-first, up to `max_configs`, reporting guard
/// conflicts and evaluation errors.
pub fn lint(m: &Efsm, max_configs: usize) -> LintReport {
    let mut report = LintReport::default();
    match m.control_projection() {
        Ok(nfsm) => {
            if !nfsm.is_strongly_connected() {
                report.push(Severity::Warning, "control machine is not strongly connected".into());
            }
        }
        Err(e) => report.push(Severity::Error, e.to_string()),
    }
    for decl in &m.signature.inputs {
        for p in &decl.params {
            if !m.domains.contains_key(p) {
                report.push(
                    Severity::Warning,
                    format!("no domain for input parameter `{p}`; `{}` not explored", decl.name),
                );
            }
        }
    }
    let inputs = concrete_inputs(m);
    let start = (m.initial.clone(), RegisterConfiguration::bottom(&m.signature));
    let mut seen: BTreeSet<(String, RegisterConfiguration)> = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(start.clone());
    queue.push_back(start);
    let mut reported: BTreeSet<String> = BTreeSet::new();
    while let Some((state, regs)) = queue.pop_front() {
        report.explored += 1;
        for input in &inputs {
            match m.step(&state, &regs, input) {
                Ok(step) => {
                    let next = (step.state, step.registers);
                    if !seen.contains(&next) {
                        if seen.len() >= max_configs {
                            report.truncated = true;
                            continue;
                        }
                        seen.insert(next.clone());
                        queue.push_back(next);
                    }
                }
                Err(e) => {
                    let key = match &e {
                        StepError::GuardConflict { state, input, .. } => format!("conflict {state} {}", input.name),
                        StepError::Eval { state, input, .. } => format!("eval {state} {}", input.name),
                        StepError::Machine(_) => e.to_string(),
                    };
                    if reported.insert(key) {
                        report.push(Severity::Error, e.to_string());
                    }
                }
            }
        }
    }
    report
}
