//! The system under learning. There is no reset: a session only moves
//! forward, and everything the learner knows comes from the trace.

use std::path::Path;

use crate::machine::lint::lint;
use crate::machine::text::parse_machine;
use crate::machine::{
    export, ConcreteInput, ConcreteOutput, Efsm, MachineError, RegisterConfiguration, Signature, StepError, Trace,
};

pub const DEFAULT_BUDGET: usize = 100_000;

/// Configurations the open-time lint may visit.
const LINT_BOUND: usize = 20_000;

#[derive(Debug, thiserror::Error)]
pub enum SulError {
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error("machine fails lint:\n{0}")]
    Lint(String),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("step budget of {0} exhausted")]
    Budget(usize),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// A black box answering one concrete input at a time.
pub trait Sul {
    fn signature(&self) -> &Signature;

    /// Sends one input; the trace grows by exactly one entry on success.
    fn apply(&mut self, input: &ConcreteInput) -> Result<ConcreteOutput, SulError>;

    /// Every input applied so far with its output.
    fn trace(&self) -> &Trace;

    fn steps(&self) -> usize {
        self.trace().len()
    }
}

/// A simulated system backed by a machine definition.
#[derive(Debug)]
pub struct SulSession {
    machine: Efsm,
    state: String,
    registers: RegisterConfiguration,
    trace: Trace,
    budget: usize,
}

impl SulSession {
    /// Starts at the declared initial state (or `start`) with all registers
    /// ⊥. Machines with lint errors are refused.
    pub fn open(machine: Efsm, start: Option<&str>) -> Result<Self, SulError> {
        let report = lint(&machine, LINT_BOUND);
        if report.has_errors() {
            return Err(SulError::Lint(report.to_string()));
        }
        let state = start.unwrap_or(&machine.initial).to_string();
        if !machine.states.contains(&state) {
            return Err(MachineError::UnknownState(state).into());
        }
        Ok(SulSession {
            registers: RegisterConfiguration::bottom(&machine.signature),
            machine,
            state,
            trace: Trace::default(),
            budget: DEFAULT_BUDGET,
        })
    }

    /// Reads a machine in text or JSON form.
    pub fn open_file(path: &Path, start: Option<&str>) -> Result<Self, SulError> {
        Self::open(load_machine(path)?, start)
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// Step count and a view of the trace.
    pub fn stats(&self) -> (usize, &Trace) {
        (self.trace.len(), &self.trace)
    }
}

impl Sul for SulSession {
    fn signature(&self) -> &Signature {
        &self.machine.signature
    }

    fn apply(&mut self, input: &ConcreteInput) -> Result<ConcreteOutput, SulError> {
        if self.trace.len() >= self.budget {
            return Err(SulError::Budget(self.budget));
        }
        let step = self.machine.step(&self.state, &self.registers, input)?;
        self.state = step.state;
        self.registers = step.registers;
        self.trace.push(&self.machine.signature, input.clone(), step.output.clone());
        Ok(step.output)
    }

    fn trace(&self) -> &Trace {
        &self.trace
    }
}

/// Loads a machine file; JSON when the first non-blank character is `{`.
pub fn load_machine(path: &Path) -> Result<Efsm, SulError> {
    let text = std::fs::read_to_string(path).map_err(|source| SulError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let m = if text.trim_start().starts_with('{') {
        export::from_json(&text)?
    } else {
        parse_machine(&text)?
    };
    Ok(m)
}
