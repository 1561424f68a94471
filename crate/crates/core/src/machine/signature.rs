use std::fmt;

use serde::{Deserialize, Serialize};

use super::event::{ConcreteInput, ConcreteOutput};
use super::MachineError;
use crate::expr::Environment;
use crate::value::Value;

/// An abstract event with its ordered parameter names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventDecl {
    pub name: String,
    pub params: Vec<String>,
}

impl EventDecl {
    pub fn new(name: &str, params: &[&str]) -> Self {
        EventDecl {
            name: name.to_string(),
            params: params.iter().map(|p| p.to_string()).collect(),
        }
    }
}

/// Input and output alphabets. Every parameter name is also a register.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Signature {
    pub inputs: Vec<EventDecl>,
    pub outputs: Vec<EventDecl>,
    #[serde(skip)]
    registers: Vec<String>,
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            inputs: Vec<EventDecl>,
            outputs: Vec<EventDecl>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Signature::new(raw.inputs, raw.outputs).map_err(serde::de::Error::custom)
    }
}

impl Signature {
    /// Registers are ordered by first appearance, inputs before outputs.
    pub fn new(inputs: Vec<EventDecl>, outputs: Vec<EventDecl>) -> Result<Self, MachineError> {
        let mut registers: Vec<String> = Vec::new();
        let mut names: Vec<&str> = Vec::new();
        for decl in inputs.iter().chain(outputs.iter()) {
            if names.contains(&decl.name.as_str()) {
                return Err(MachineError::Signature(format!(
                    "event `{}` declared twice",
                    decl.name
                )));
            }
            names.push(&decl.name);
            for (i, p) in decl.params.iter().enumerate() {
                if decl.params[..i].contains(p) {
                    return Err(MachineError::Signature(format!(
                        "parameter `{p}` repeated in `{}`",
                        decl.name
                    )));
                }
                if !registers.contains(p) {
                    registers.push(p.clone());
                }
            }
        }
        Ok(Signature {
            inputs,
            outputs,
            registers,
        })
    }

    pub fn registers(&self) -> &[String] {
        &self.registers
    }

    pub fn register_index(&self, name: &str) -> Option<usize> {
        self.registers.iter().position(|r| r == name)
    }

    pub fn input(&self, name: &str) -> Option<&EventDecl> {
        self.inputs.iter().find(|d| d.name == name)
    }

    pub fn output(&self, name: &str) -> Option<&EventDecl> {
        self.outputs.iter().find(|d| d.name == name)
    }

    pub fn check_input(&self, input: &ConcreteInput) -> Result<(), MachineError> {
        let decl = self
            .input(&input.name)
            .ok_or_else(|| MachineError::UnknownEvent(input.name.clone()))?;
        if decl.params.len() != input.args.len() {
            return Err(MachineError::Arity {
                event: input.name.clone(),
                expected: decl.params.len(),
                found: input.args.len(),
            });
        }
        if input.args.iter().any(Value::is_undefined) {
            return Err(MachineError::Signature(format!("undefined argument in `{input}`")));
        }
        Ok(())
    }

    pub fn check_output(&self, output: &ConcreteOutput) -> Result<(), MachineError> {
        if let ConcreteOutput::Event { name, args } = output {
            let decl = self
                .output(name)
                .ok_or_else(|| MachineError::UnknownEvent(name.clone()))?;
            if decl.params.len() != args.len() {
                return Err(MachineError::Arity {
                    event: name.clone(),
                    expected: decl.params.len(),
                    found: args.len(),
                });
            }
        }
        Ok(())
    }
}

/// Last observed value of each register, ⊥ when never observed. Indexed by
/// the signature's register order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegisterConfiguration(pub Vec<Value>);

impl RegisterConfiguration {
    pub fn bottom(sig: &Signature) -> Self {
        RegisterConfiguration(vec![Value::Undefined; sig.registers().len()])
    }

    pub fn get(&self, sig: &Signature, name: &str) -> Option<&Value> {
        sig.register_index(name).map(|i| &self.0[i])
    }

    pub fn values(&self) -> &[Value] {
        &self.0
    }

    /// Input parameters are written first, then output parameters; Ω and ω
    /// write nothing on the output side.
    pub fn update(&self, sig: &Signature, input: &ConcreteInput, output: &ConcreteOutput) -> Self {
        let mut next = self.update_input(sig, input);
        if let ConcreteOutput::Event { name, args } = output {
            if let Some(decl) = sig.output(name) {
                for (p, v) in decl.params.iter().zip(args) {
                    if let Some(i) = sig.register_index(p) {
                        next.0[i] = v.clone();
                    }
                }
            }
        }
        next
    }

    pub fn update_input(&self, sig: &Signature, input: &ConcreteInput) -> Self {
        let mut next = self.clone();
        if let Some(decl) = sig.input(&input.name) {
            for (p, v) in decl.params.iter().zip(&input.args) {
                if let Some(i) = sig.register_index(p) {
                    next.0[i] = v.clone();
                }
            }
        }
        next
    }

    /// The guard/output evaluation environment for `input` fired in this
    /// configuration: input parameters shadow same-named registers.
    pub fn env<'a>(&'a self, sig: &'a Signature, input: &'a ConcreteInput) -> EventEnv<'a> {
        EventEnv {
            sig,
            registers: self,
            input,
        }
    }
}

impl fmt::Display for RegisterConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(")")
    }
}

/// Folds [`RegisterConfiguration::update`] over a sequence of events.
pub fn update_registers<'a>(
    sig: &Signature,
    start: &RegisterConfiguration,
    events: impl IntoIterator<Item = (&'a ConcreteInput, &'a ConcreteOutput)>,
) -> RegisterConfiguration {
    events
        .into_iter()
        .fold(start.clone(), |r, (i, o)| r.update(sig, i, o))
}

pub struct EventEnv<'a> {
    sig: &'a Signature,
    registers: &'a RegisterConfiguration,
    input: &'a ConcreteInput,
}

impl Environment for EventEnv<'_> {
    fn lookup(&self, name: &str) -> Option<Value> {
        if let Some(decl) = self.sig.input(&self.input.name) {
            if let Some(i) = decl.params.iter().position(|p| p == name) {
                return self.input.args.get(i).cloned();
            }
        }
        self.registers.get(self.sig, name).cloned()
    }
}
