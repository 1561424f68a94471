//! The line-oriented machine definition format.
//!
//! ```text
//! signature
//!   input coin(c)
//!   output Display(t)
//! domains
//!   c in {50, 100, 200}
//!   t in 0..300
//! states s0, s1
//! initial s0
//! transitions
//!   s1 -> s1 : coin(c) [t + c <= p] / Display(t + c)
//!   s1 -> s1 : vend() [t < p] / ω
//! ```
//!
//! `#` starts a comment. Guards are optional (`true` when absent). Output
//! arguments may be written `t:=expr` where `t` is the parameter name.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{Domain, Efsm, EventDecl, MachineError, OutputLabel, Signature, Transition};
use crate::expr::{parse_with_vars, Expr};
use crate::value::Value;

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Signature,
    Domains,
    States,
    Initial,
    Transitions,
}

fn syntax(line: usize, message: impl Into<String>) -> MachineError {
    MachineError::Syntax {
        line,
        message: message.into(),
    }
}

fn split_call(text: &str) -> Option<(&str, &str)> {
    let open = text.find('(')?;
    let close = text.rfind(')')?;
    if close < open || !text[close + 1..].trim().is_empty() {
        return None;
    }
    Some((text[..open].trim(), &text[open + 1..close]))
}

/// Splits on commas that are not nested inside parentheses.
fn split_top_level(text: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&text[start..]);
    parts.into_iter().map(str::trim).filter(|p| !p.is_empty()).collect()
}

fn parse_decl(line: usize, text: &str) -> Result<EventDecl, MachineError> {
    let (name, params) = match split_call(text) {
        Some(x) => x,
        None => (text.trim(), ""),
    };
    if name.is_empty() {
        return Err(syntax(line, "missing event name"));
    }
    Ok(EventDecl {
        name: name.to_string(),
        params: split_top_level(params).iter().map(|p| p.to_string()).collect(),
    })
}

fn parse_domain(line: usize, text: &str) -> Result<(String, Domain), MachineError> {
    let (name, dom) = text
        .split_once(" in ")
        .ok_or_else(|| syntax(line, "expected `param in {..}` or `param in lo..hi`"))?;
    let dom = dom.trim();
    let domain = if let Some(inner) = dom.strip_prefix('{').and_then(|d| d.strip_suffix('}')) {
        let values = split_top_level(inner)
            .iter()
            .map(|v| v.parse::<Value>().map_err(|e| syntax(line, e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err(syntax(line, "empty domain"));
        }
        Domain::Values(values)
    } else if let Some((lo, hi)) = dom.split_once("..") {
        let lo = lo.trim().parse().map_err(|_| syntax(line, "bad range bound"))?;
        let hi = hi.trim().parse().map_err(|_| syntax(line, "bad range bound"))?;
        if lo > hi {
            return Err(syntax(line, "empty range"));
        }
        Domain::Range { from: lo, to: hi }
    } else {
        return Err(syntax(line, "expected `{..}` or `lo..hi`"));
    };
    Ok((name.trim().to_string(), domain))
}

fn parse_transition(line: usize, text: &str, sig: &Signature) -> Result<Transition, MachineError> {
    let vars: BTreeSet<String> = sig.registers().iter().cloned().collect();
    let expr = |t: &str| {
        parse_with_vars(t.trim(), &vars).map_err(|e| syntax(line, format!("in `{}`: {e}", t.trim())))
    };
    let (source, rest) = text
        .split_once("->")
        .ok_or_else(|| syntax(line, "expected `SRC -> DST : ...`"))?;
    let (target, rest) = rest
        .split_once(':')
        .ok_or_else(|| syntax(line, "expected `:` after target state"))?;
    let rest = rest.trim();
    let close = rest.find(')').ok_or_else(|| syntax(line, "expected input `name(params)`"))?;
    let (input, params) = split_call(&rest[..=close]).ok_or_else(|| syntax(line, "bad input"))?;
    let decl = sig
        .input(input)
        .ok_or_else(|| syntax(line, format!("unknown input `{input}`")))?;
    let params: Vec<&str> = split_top_level(params);
    if params.len() != decl.params.len() || params.iter().zip(&decl.params).any(|(a, b)| a != b) {
        return Err(syntax(
            line,
            format!("input `{input}` must be written with parameters ({})", decl.params.join(", ")),
        ));
    }
    let mut rest = rest[close + 1..].trim();
    let mut guard = Expr::Bool(true);
    if let Some(after) = rest.strip_prefix('[') {
        let end = after.find(']').ok_or_else(|| syntax(line, "unterminated guard"))?;
        guard = expr(&after[..end])?;
        rest = after[end + 1..].trim();
    }
    let rest = rest
        .strip_prefix('/')
        .ok_or_else(|| syntax(line, "expected `/ Output(...)`"))?
        .trim();
    let (output, assign) = match rest {
        "ω" | "omega" => (OutputLabel::Quiescent, Vec::new()),
        "Ω" | "Omega" => return Err(syntax(line, "Ω is implicit and cannot label a transition")),
        _ => {
            let (name, args) = split_call(rest).unwrap_or((rest, ""));
            let out_decl = sig
                .output(name)
                .ok_or_else(|| syntax(line, format!("unknown output `{name}`")))?;
            let args = split_top_level(args);
            if args.len() != out_decl.params.len() {
                return Err(syntax(
                    line,
                    format!("`{name}` expects {} argument(s)", out_decl.params.len()),
                ));
            }
            let mut exprs = Vec::new();
            for (a, p) in args.iter().zip(&out_decl.params) {
                let body = match a.split_once(":=") {
                    Some((lhs, rhs)) if lhs.trim() == p => rhs,
                    Some((lhs, _)) => {
                        return Err(syntax(line, format!("`{}` is not parameter `{p}`", lhs.trim())))
                    }
                    None => a,
                };
                exprs.push(expr(body)?);
            }
            (OutputLabel::Named(name.to_string()), exprs)
        }
    };
    Ok(Transition {
        source: source.trim().to_string(),
        input: input.to_string(),
        guard,
        output,
        assign,
        target: target.trim().to_string(),
    })
}

/// Parses a machine definition.
pub fn parse_machine(source: &str) -> Result<Efsm, MachineError> {
    let mut section = Section::None;
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let mut domains = BTreeMap::new();
    let mut states: Vec<String> = Vec::new();
    let mut initial: Option<String> = None;
    let mut pending: Vec<(usize, String)> = Vec::new();

    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let (head, tail) = match text.split_once(char::is_whitespace) {
            Some((h, t)) => (h, t.trim()),
            None => (text, ""),
        };
        let head = head.trim_end_matches(':');
        let keyword = match head {
            "signature" => Some(Section::Signature),
            "domains" => Some(Section::Domains),
            "states" => Some(Section::States),
            "initial" => Some(Section::Initial),
            "transitions" => Some(Section::Transitions),
            _ => None,
        };
        let body = match keyword {
            Some(s) => {
                section = s;
                tail.trim_start_matches(':').trim()
            }
            None => text,
        };
        if body.is_empty() {
            continue;
        }
        match section {
            Section::None => return Err(syntax(line, format!("content outside a section: `{body}`"))),
            Section::Signature => {
                let (kind, decl) = body
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| syntax(line, "expected `input name(params)` or `output name(params)`"))?;
                let decl = parse_decl(line, decl)?;
                match kind {
                    "input" => inputs.push(decl),
                    "output" => outputs.push(decl),
                    other => return Err(syntax(line, format!("unknown declaration `{other}`"))),
                }
            }
            Section::Domains => {
                let (k, v) = parse_domain(line, body)?;
                domains.insert(k, v);
            }
            Section::States => {
                for s in split_top_level(body) {
                    if states.iter().any(|x| x == s) {
                        return Err(syntax(line, format!("state `{s}` declared twice")));
                    }
                    states.push(s.to_string());
                }
            }
            Section::Initial => {
                if initial.is_some() {
                    return Err(syntax(line, "initial state declared twice"));
                }
                initial = Some(body.to_string());
            }
            Section::Transitions => pending.push((line, body.to_string())),
        }
    }
    let signature = Signature::new(inputs, outputs)?;
    let transitions = pending
        .iter()
        .map(|(line, text)| parse_transition(*line, text, &signature))
        .collect::<Result<Vec<_>, _>>()?;
    if states.is_empty() {
        return Err(syntax(0, "no states declared"));
    }
    let initial = initial.unwrap_or_else(|| states[0].clone());
    Efsm::new(signature, domains, states, initial, transitions)
}

impl std::str::FromStr for Efsm {
    type Err = MachineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_machine(s)
    }
}

impl fmt::Display for Efsm {
    /// Writes the machine in the text format accepted by [`parse_machine`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "signature")?;
        for (kind, decls) in [("input", &self.signature.inputs), ("output", &self.signature.outputs)] {
            for d in decls {
                writeln!(f, "  {kind} {}({})", d.name, d.params.join(", "))?;
            }
        }
        if !self.domains.is_empty() {
            writeln!(f, "domains")?;
            for (p, d) in &self.domains {
                writeln!(f, "  {p} in {d}")?;
            }
        }
        writeln!(f, "states {}", self.states.join(", "))?;
        writeln!(f, "initial {}", self.initial)?;
        writeln!(f, "transitions")?;
        for t in &self.transitions {
            let params = self
                .signature
                .input(&t.input)
                .map(|d| d.params.join(", "))
                .unwrap_or_default();
            write!(f, "  {} -> {} : {}({})", t.source, t.target, t.input, params)?;
            if !t.guard.is_true() {
                write!(f, " [{}]", t.guard)?;
            }
            match &t.output {
                OutputLabel::Named(n) => {
                    let args: Vec<String> = t.assign.iter().map(|e| e.to_string()).collect();
                    writeln!(f, " / {n}({})", args.join(", "))?;
                }
                other => writeln!(f, " / {other}")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled::DRINKS;

    #[test]
    fn drinks_parses() {
        let m = parse_machine(DRINKS).unwrap();
        assert_eq!(m.states, ["s0", "s1"]);
        assert_eq!(m.initial, "s0");
        assert_eq!(m.transitions.len(), 5);
        assert_eq!(m.transitions[1].guard.to_string(), "t + c <= p");
    }

    #[test]
    fn text_round_trip() {
        let m = parse_machine(DRINKS).unwrap();
        let again = parse_machine(&m.to_string()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn assignment_syntax() {
        let src = "signature\n input a(x)\n output B(y)\nstates q\ntransitions\n q -> q : a(x) / B(y:=x + 1)\n";
        let m = parse_machine(src).unwrap();
        assert_eq!(m.transitions[0].assign[0].to_string(), "x + 1");
    }

    #[test]
    fn errors_name_the_line() {
        let src = "signature\n input a(x)\nstates q\ntransitions\n q -> q : a(x) [x + ] / ω\n";
        match parse_machine(src) {
            Err(MachineError::Syntax { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
        assert!(parse_machine("garbage here").is_err());
        let src = "signature\n input a(x)\nstates q\ntransitions\n q -> r : a(x) / ω\n";
        assert!(parse_machine(src).is_err());
    }
}
