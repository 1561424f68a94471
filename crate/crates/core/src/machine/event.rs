use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::value::Value;

/// A parametrised input occurrence such as `coin(50)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConcreteInput {
    pub name: String,
    pub args: Vec<Value>,
}

impl ConcreteInput {
    pub fn new(name: &str, args: Vec<Value>) -> Self {
        ConcreteInput {
            name: name.to_string(),
            args,
        }
    }

    /// The abstract input (event type).
    pub fn abstract_name(&self) -> &str {
        &self.name
    }
}

/// An abstract output: an event type, Ω (input refused) or ω (accepted,
/// nothing visible).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutputLabel {
    Refused,
    Quiescent,
    Named(String),
}

impl OutputLabel {
    pub fn is_named(&self) -> bool {
        matches!(self, OutputLabel::Named(_))
    }
}

/// A concrete output occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConcreteOutput {
    Refused,
    Quiescent,
    Event { name: String, args: Vec<Value> },
}

impl ConcreteOutput {
    pub fn event(name: &str, args: Vec<Value>) -> Self {
        ConcreteOutput::Event {
            name: name.to_string(),
            args,
        }
    }

    pub fn label(&self) -> OutputLabel {
        match self {
            ConcreteOutput::Refused => OutputLabel::Refused,
            ConcreteOutput::Quiescent => OutputLabel::Quiescent,
            ConcreteOutput::Event { name, .. } => OutputLabel::Named(name.clone()),
        }
    }

    pub fn args(&self) -> &[Value] {
        match self {
            ConcreteOutput::Event { args, .. } => args,
            _ => &[],
        }
    }
}

/// Strips parameter values from an input/output pair.
pub fn abstract_pair(input: &ConcreteInput, output: &ConcreteOutput) -> (String, OutputLabel) {
    (input.name.clone(), output.label())
}

fn write_call(f: &mut fmt::Formatter<'_>, name: &str, args: &[Value]) -> fmt::Result {
    write!(f, "{name}(")?;
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{a}")?;
    }
    f.write_str(")")
}

impl fmt::Display for ConcreteInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_call(f, &self.name, &self.args)
    }
}

impl fmt::Display for OutputLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputLabel::Refused => f.write_str("Ω"),
            OutputLabel::Quiescent => f.write_str("ω"),
            OutputLabel::Named(n) => f.write_str(n),
        }
    }
}

impl fmt::Display for ConcreteOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConcreteOutput::Refused => f.write_str("Ω"),
            ConcreteOutput::Quiescent => f.write_str("ω"),
            ConcreteOutput::Event { name, args } => write_call(f, name, args),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed event `{0}`")]
pub struct EventParseError(pub String);

fn parse_call(text: &str) -> Result<(String, Vec<Value>), EventParseError> {
    let text = text.trim();
    let bad = || EventParseError(text.to_string());
    let (name, rest) = match text.find('(') {
        Some(i) => (&text[..i], &text[i + 1..]),
        None => (text, ")"),
    };
    let name = name.trim();
    let inner = rest.strip_suffix(')').ok_or_else(bad)?;
    let ident_ok = name
        .chars()
        .next()
        .is_some_and(|c| c.is_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_alphanumeric() || c == '_');
    if !ident_ok {
        return Err(bad());
    }
    let args = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner
            .split(',')
            .map(|a| a.parse::<Value>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok((name.to_string(), args))
}

impl FromStr for ConcreteInput {
    type Err = EventParseError;

    /// `coin(50)`, `vend()` or `vend`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, args) = parse_call(s)?;
        Ok(ConcreteInput { name, args })
    }
}

impl FromStr for OutputLabel {
    type Err = EventParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "Ω" | "Omega" => Ok(OutputLabel::Refused),
            "ω" | "omega" => Ok(OutputLabel::Quiescent),
            other => {
                let (name, args) = parse_call(other)?;
                if args.is_empty() {
                    Ok(OutputLabel::Named(name))
                } else {
                    Err(EventParseError(other.to_string()))
                }
            }
        }
    }
}

impl FromStr for ConcreteOutput {
    type Err = EventParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "Ω" | "Omega" => Ok(ConcreteOutput::Refused),
            "ω" | "omega" => Ok(ConcreteOutput::Quiescent),
            other => {
                let (name, args) = parse_call(other)?;
                Ok(ConcreteOutput::Event { name, args })
            }
        }
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let text = String::deserialize(deserializer)?;
                text.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(ConcreteInput);
string_serde!(ConcreteOutput);
string_serde!(OutputLabel);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abstraction_strips_values() {
        let i: ConcreteInput = "select(tea)".parse().unwrap();
        let o: ConcreteOutput = "Beverage(tea,0,100)".parse().unwrap();
        assert_eq!(abstract_pair(&i, &o), ("select".into(), OutputLabel::Named("Beverage".into())));
        let i: ConcreteInput = "vend()".parse().unwrap();
        assert_eq!(abstract_pair(&i, &ConcreteOutput::Quiescent), ("vend".into(), OutputLabel::Quiescent));
        let i: ConcreteInput = "coin(50)".parse().unwrap();
        let o: ConcreteOutput = "Display(50)".parse().unwrap();
        assert_eq!(abstract_pair(&i, &o).1.to_string(), "Display");
    }

    #[test]
    fn display_round_trip() {
        for text in ["coin(50)", "vend()", "select(coffee)"] {
            assert_eq!(text.parse::<ConcreteInput>().unwrap().to_string(), text);
        }
        for text in ["Ω", "ω", "Beverage(tea,0,100)"] {
            assert_eq!(text.parse::<ConcreteOutput>().unwrap().to_string(), text);
        }
        assert_eq!("vend".parse::<ConcreteInput>().unwrap().to_string(), "vend()");
        assert!("coin(50".parse::<ConcreteInput>().is_err());
        assert!("3x()".parse::<ConcreteInput>().is_err());
    }
}
