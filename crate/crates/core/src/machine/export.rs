//! JSON and Graphviz renderings of a machine.

use std::fmt::Write;

use super::{Efsm, MachineError, OutputLabel};

pub fn to_json(m: &Efsm) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("machines always serialise");
    s.push('\n');
    s
}

/// Parses and validates a JSON machine.
pub fn from_json(text: &str) -> Result<Efsm, MachineError> {
    let m: Efsm = serde_json::from_str(text).map_err(|e| MachineError::Syntax {
        line: e.line(),
        message: e.to_string(),
    })?;
    m.validate()?;
    Ok(m)
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Edge labels read `input(params)[guard]/Output(p:=expr, ...)`; a `true`
/// guard is omitted.
pub fn to_dot(m: &Efsm) -> String {
    let mut out = String::from("digraph efsm {\n  rankdir=LR;\n  node [shape=circle];\n");
    let _ = writeln!(out, "  __start [shape=point];");
    let _ = writeln!(out, "  __start -> \"{}\";", escape(&m.initial));
    for s in &m.states {
        let _ = writeln!(out, "  \"{}\";", escape(s));
    }
    for t in &m.transitions {
        let params = m
            .signature
            .input(&t.input)
            .map(|d| d.params.join(","))
            .unwrap_or_default();
        let mut label = format!("{}({params})", t.input);
        if !t.guard.is_true() {
            let _ = write!(label, "[{}]", t.guard);
        }
        label.push('/');
        match &t.output {
            OutputLabel::Named(name) => {
                let names = m.signature.output(name).map(|d| d.params.clone()).unwrap_or_default();
                let args: Vec<String> = names
                    .iter()
                    .zip(&t.assign)
                    .map(|(p, e)| {
                        if e.to_string() == *p {
                            p.clone()
                        } else {
                            format!("{p}:={e}")
                        }
                    })
                    .collect();
                let _ = write!(label, "{name}({})", args.join(", "));
            }
            other => label.push_str(&other.to_string()),
        }
        let _ = writeln!(
            out,
            "  \"{}\" -> \"{}\" [label=\"{}\"];",
            escape(&t.source),
            escape(&t.target),
            escape(&label)
        );
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled::drinks;

    #[test]
    fn json_round_trip_is_byte_identical() {
        let m = drinks();
        let a = to_json(&m);
        let back = from_json(&a).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_json(&back), a);
    }

    #[test]
    fn json_rejects_invalid_machines() {
        let bad = to_json(&drinks()).replace("\"initial\": \"s0\"", "\"initial\": \"nowhere\"");
        assert!(from_json(&bad).is_err());
        assert!(from_json("{").is_err());
    }

    #[test]
    fn dot_labels() {
        let d = to_dot(&drinks());
        assert!(d.contains("coin(c)[t + c <= p]/Display(t:=t + c)"), "{d}");
        assert!(d.contains("coin(c)[t + c > p]/Reject(c)"));
        assert!(d.contains("select(b)/Beverage(b, t:=0, p:=100)"));
        assert!(d.contains("vend()[t < p]/ω"));
    }
}
