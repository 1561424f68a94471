//! Turns a sampled control machine into an EFSM: one guard per output
//! class of each (state, input) pair, one expression per output argument.

pub mod search;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::expr::{BinOp, Expr};
use crate::learner::conjecture::{SampledFsm, Sample};
use crate::machine::{ConcreteOutput, Domain, Efsm, MachineError, OutputLabel, Signature, Transition};
use crate::value::{Type, Value};

pub use search::{
    enumerate_fit, evolve, fitness, search_expression, Env, Found, GpConfig, Preference, Provenance, SearchConfig,
    Target,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeneraliseError {
    #[error("`{state}` both refuses and accepts `{input}`")]
    MixedRefusal { state: String, input: String },
    #[error("no consistent {what} for `{input}` in `{state}`: {reason}")]
    SynthesisFailure {
        state: String,
        input: String,
        what: &'static str,
        reason: String,
    },
    #[error(transparent)]
    Machine(#[from] MachineError),
}

/// One synthesised expression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Synthesised {
    pub state: String,
    pub input: String,
    pub output: String,
    /// `"guard"` or the output parameter name.
    pub role: String,
    pub expr: String,
    pub size: usize,
    pub misfits: usize,
    pub provenance: Provenance,
    pub considered: usize,
    pub rows: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SynthesisReport {
    pub entries: Vec<Synthesised>,
}

/// Logical negation with comparisons flipped and double negation removed.
pub fn negate(e: &Expr) -> Expr {
    match e {
        Expr::Bool(b) => Expr::Bool(!b),
        Expr::Not(a) => (**a).clone(),
        Expr::Bin(op, a, b) => {
            let flipped = match op {
                BinOp::Lt => BinOp::Ge,
                BinOp::Le => BinOp::Gt,
                BinOp::Gt => BinOp::Le,
                BinOp::Ge => BinOp::Lt,
                _ => return Expr::not(e.clone()),
            };
            Expr::bin(flipped, (**a).clone(), (**b).clone())
        }
        _ => Expr::not(e.clone()),
    }
}

fn conjoin(a: Expr, b: Expr) -> Expr {
    if a.is_true() {
        b
    } else if b.is_true() {
        a
    } else {
        Expr::bin(BinOp::And, a, b)
    }
}

fn disjoin(a: Option<Expr>, b: Expr) -> Expr {
    match a {
        None => b,
        Some(a) => Expr::bin(BinOp::Or, a, b),
    }
}

/// Everything synthesis needs from the sample table.
struct Context<'a> {
    sig: &'a Signature,
    vars: Vec<(String, Type)>,
    consts: Vec<Value>,
    cfg: &'a SearchConfig,
}

impl Context<'_> {
    fn env(&self, s: &Sample) -> Env {
        let r = s.before.update_input(self.sig, &s.input);
        self.sig.registers().iter().cloned().zip(r.0).collect()
    }

    /// `var = value` conjunction over the variables defined in every row.
    fn row_condition(&self, env: &Env, defined: &[String]) -> Expr {
        defined.iter().fold(Expr::Bool(true), |acc, v| {
            let lit = Expr::from_value(&env[v]).expect("defined value");
            conjoin(acc, Expr::bin(BinOp::Eq, Expr::var(v), lit))
        })
    }
}

/// Variables that have a value in every row.
fn defined_vars(ctx: &Context, envs: &[Env]) -> Vec<String> {
    ctx.vars
        .iter()
        .map(|(n, _)| n.clone())
        .filter(|n| envs.iter().all(|e| e.get(n).is_some_and(|v| !v.is_undefined())))
        .collect()
}

/// Ints and symbols seen anywhere in the samples, plus 0 and 1.
fn constant_pool(samples: &[Sample]) -> Vec<Value> {
    let mut pool: BTreeSet<Value> = [Value::Int(0), Value::Int(1)].into_iter().collect();
    for s in samples {
        let outs = s.output.args().iter();
        for v in s.before.0.iter().chain(&s.input.args).chain(outs) {
            if matches!(v, Value::Int(_) | Value::Symbol(_)) {
                pool.insert(v.clone());
            }
        }
    }
    pool.into_iter().collect()
}

/// Register types, from the samples first and then the declared domains.
fn register_types(sig: &Signature, samples: &[Sample], domains: &BTreeMap<String, Domain>) -> Vec<(String, Type)> {
    sig.registers()
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let observed = samples.iter().find_map(|s| {
                let after = s.before.update_input(sig, &s.input);
                after.0[i].ty().or_else(|| s.after.0[i].ty())
            });
            let declared = || domains.get(r).and_then(|d| d.values().first().and_then(Value::ty));
            observed.or_else(declared).map(|t| (r.clone(), t))
        })
        .collect()
}

struct Built {
    guards: Vec<Expr>,
    outputs: Vec<Vec<Expr>>,
    entries: Vec<Synthesised>,
}

struct Class<'a> {
    label: OutputLabel,
    target: usize,
    rows: Vec<&'a Sample>,
}

fn entry(state: &str, input: &str, label: &OutputLabel, role: &str, f: &Found, rows: usize) -> Synthesised {
    Synthesised {
        state: state.to_string(),
        input: input.to_string(),
        output: label_text(label),
        role: role.to_string(),
        expr: f.expr.to_string(),
        size: f.expr.size(),
        misfits: f.misfits,
        provenance: f.provenance,
        considered: f.considered,
        rows,
    }
}

fn label_text(l: &OutputLabel) -> String {
    match l {
        OutputLabel::Refused => "Ω".into(),
        OutputLabel::Quiescent => "ω".into(),
        OutputLabel::Named(n) => n.clone(),
    }
}

fn fallback_found(expr: Expr) -> Found {
    Found {
        expr,
        misfits: 0,
        provenance: Provenance::FallbackTable,
        considered: 0,
    }
}

fn build(ctx: &Context, state: &str, input: &str, classes: &[Class], fallback: bool) -> Result<Built, GeneraliseError> {
    let fail = |what, reason: String| GeneraliseError::SynthesisFailure {
        state: state.to_string(),
        input: input.to_string(),
        what,
        reason,
    };
    let all_envs: Vec<Env> = classes.iter().flat_map(|c| c.rows.iter().map(|s| ctx.env(s))).collect();
    let defined = defined_vars(ctx, &all_envs);
    let mut entries = Vec::new();

    let mut pieces: Vec<Expr> = Vec::new();
    for (i, class) in classes.iter().enumerate().take(classes.len().saturating_sub(1)) {
        let rest = &classes[i..];
        let envs: Vec<Env> = rest.iter().flat_map(|c| c.rows.iter().map(|s| ctx.env(s))).collect();
        let target = Target::Bool(
            rest.iter()
                .enumerate()
                .flat_map(|(k, c)| std::iter::repeat_n(k == 0, c.rows.len()))
                .collect(),
        );
        let mut found = None;
        if !fallback {
            let f = search_expression(&target, &ctx.vars, &ctx.consts, &envs, &Preference::Guard, ctx.cfg);
            if f.misfits == 0 {
                found = Some(f);
            }
        }
        let f = match found {
            Some(f) => f,
            None => {
                let mut g: Option<Expr> = None;
                let mut seen = BTreeSet::new();
                for s in &class.rows {
                    let c = ctx.row_condition(&ctx.env(s), &defined);
                    if seen.insert(c.clone()) {
                        g = Some(disjoin(g, c));
                    }
                }
                let g = g.unwrap_or(Expr::Bool(false));
                if fitness(&g, &envs, &target).0 != 0 {
                    return Err(fail("guard", "rows of different outputs share their defined values".into()));
                }
                fallback_found(g)
            }
        };
        entries.push(entry(state, input, &class.label, "guard", &f, envs.len()));
        pieces.push(f.expr);
    }
    let mut guards = Vec::new();
    let mut prefix = Expr::Bool(true);
    for (i, _) in classes.iter().enumerate() {
        match pieces.get(i) {
            Some(g) => {
                guards.push(conjoin(prefix.clone(), g.clone()));
                prefix = conjoin(prefix, negate(g));
            }
            None => guards.push(prefix.clone()),
        }
    }

    let mut outputs = Vec::new();
    for class in classes {
        let OutputLabel::Named(name) = &class.label else {
            outputs.push(Vec::new());
            continue;
        };
        let params = ctx
            .sig
            .output(name)
            .map(|d| d.params.clone())
            .ok_or_else(|| MachineError::UnknownEvent(name.clone()))?;
        let inputs: BTreeSet<String> = ctx.sig.input(input).map(|d| d.params.iter().cloned().collect()).unwrap_or_default();
        let pref = Preference::Output { inputs };
        let envs: Vec<Env> = class.rows.iter().map(|s| ctx.env(s)).collect();
        let mut exprs = Vec::new();
        for (j, p) in params.iter().enumerate() {
            let values: Vec<Value> = class.rows.iter().map(|s| s.output.args()[j].clone()).collect();
            let target = Target::Values(values.clone());
            let mut found = None;
            if !fallback {
                let f = search_expression(&target, &ctx.vars, &ctx.consts, &envs, &pref, ctx.cfg);
                if f.misfits == 0 {
                    found = Some(f);
                }
            }
            let f = match found {
                Some(f) => f,
                None => {
                    let mut table: Vec<(Expr, Value)> = Vec::new();
                    for (env, v) in envs.iter().zip(&values) {
                        let c = ctx.row_condition(env, &defined);
                        if !table.iter().any(|(k, _)| *k == c) {
                            table.push((c, v.clone()));
                        }
                    }
                    let (_, last) = table.pop().ok_or_else(|| fail("output", "no rows".into()))?;
                    let leaf = |v: &Value| Expr::from_value(v).expect("observed output value");
                    let e = table.iter().rev().fold(leaf(&last), |acc, (c, v)| Expr::ite(c.clone(), leaf(v), acc));
                    if fitness(&e, &envs, &target).0 != 0 {
                        return Err(fail("output", format!("rows disagree on `{p}`")));
                    }
                    fallback_found(e)
                }
            };
            entries.push(entry(state, input, &class.label, p, &f, envs.len()));
            exprs.push(f.expr);
        }
        outputs.push(exprs);
    }
    Ok(Built { guards, outputs, entries })
}

/// Replays every row of one (state, input) pair through its transitions.
fn replays(sig: &Signature, transitions: &[Transition], classes: &[Class], states: &[String]) -> bool {
    classes.iter().all(|class| {
        class.rows.iter().all(|s| {
            let env = s.before.env(sig, &s.input);
            let fired: Vec<&Transition> = transitions
                .iter()
                .filter(|t| t.guard.eval_bool(&env).unwrap_or(false))
                .collect();
            let [t] = fired.as_slice() else { return false };
            if t.target != states[class.target] {
                return false;
            }
            let produced = match &t.output {
                OutputLabel::Named(n) => {
                    let args: Option<Vec<Value>> = t.assign.iter().map(|e| e.eval(&env).ok()).collect();
                    match args {
                        Some(args) => ConcreteOutput::event(n, args),
                        None => return false,
                    }
                }
                _ => ConcreteOutput::Quiescent,
            };
            produced == s.output
        })
    })
}

/// Builds the EFSM for `fsm`, started in state `initial`.
pub fn generalise(
    fsm: &SampledFsm,
    domains: &BTreeMap<String, Domain>,
    initial: usize,
    cfg: &SearchConfig,
) -> Result<(Efsm, SynthesisReport), GeneraliseError> {
    let sig = &fsm.signature;
    let ctx = Context {
        sig,
        vars: register_types(sig, &fsm.samples, domains),
        consts: constant_pool(&fsm.samples),
        cfg,
    };
    let mut transitions = Vec::new();
    let mut report = SynthesisReport::default();
    let mut pairs: BTreeSet<(usize, String)> = fsm.delta.keys().map(|(q, i, _)| (*q, i.clone())).collect();
    pairs.extend(fsm.samples.iter().map(|s| (s.state, s.input.name.clone())));
    for (q, input) in pairs {
        let state = &fsm.states[q];
        let labels = fsm.labels(q, &input);
        let refused = labels.iter().any(|(l, _)| **l == OutputLabel::Refused)
            || fsm.samples.iter().any(|s| s.state == q && s.input.name == input && s.output == ConcreteOutput::Refused);
        let accepted: Vec<(OutputLabel, usize)> =
            labels.into_iter().filter(|(l, _)| **l != OutputLabel::Refused).map(|(l, t)| (l.clone(), t)).collect();
        if refused {
            if !accepted.is_empty() {
                return Err(GeneraliseError::MixedRefusal {
                    state: state.clone(),
                    input,
                });
            }
            continue;
        }
        let classes: Vec<Class> = accepted
            .into_iter()
            .map(|(label, target)| {
                let target = if label == OutputLabel::Quiescent { q } else { target };
                let rows = fsm
                    .samples
                    .iter()
                    .filter(|s| s.state == q && s.input.name == input && s.output.label() == label)
                    .collect();
                Class { label, target, rows }
            })
            .filter(|c| !c.rows.is_empty())
            .collect();
        if classes.is_empty() {
            continue;
        }
        let make = |built: &Built| -> Vec<Transition> {
            classes
                .iter()
                .zip(&built.guards)
                .zip(&built.outputs)
                .map(|((c, g), o)| Transition {
                    source: state.clone(),
                    input: input.clone(),
                    guard: g.clone(),
                    output: c.label.clone(),
                    assign: o.clone(),
                    target: fsm.states[c.target].clone(),
                })
                .collect()
        };
        let mut built = build(&ctx, state, &input, &classes, false)?;
        let mut ts = make(&built);
        if !replays(sig, &ts, &classes, &fsm.states) {
            built = build(&ctx, state, &input, &classes, true)?;
            ts = make(&built);
            if !replays(sig, &ts, &classes, &fsm.states) {
                return Err(GeneraliseError::SynthesisFailure {
                    state: state.clone(),
                    input,
                    what: "transition",
                    reason: "samples do not replay".into(),
                });
            }
        }
        report.entries.extend(built.entries);
        transitions.extend(ts);
    }
    let efsm = Efsm::new(
        sig.clone(),
        domains.clone(),
        fsm.states.clone(),
        fsm.states[initial].clone(),
        transitions,
    )?;
    Ok((efsm, report))
}
