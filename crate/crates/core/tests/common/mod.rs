//! Shared fixtures: a seeded generator of small register machines and the
//! independent oracles used against the learner.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use efsm_infer::learner::{Learned, LearnerConfig, Sample, SampledFsm};
use efsm_infer::machine::text::parse_machine;
use efsm_infer::machine::{lint, ConcreteInput, Efsm, OutputLabel, RegisterConfiguration, Trace};
use efsm_infer::oracle::DomainSpec;
use efsm_infer::value::Value;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Values of the only input parameter.
pub const X_DOMAIN: [i64; 4] = [0, 1, 2, 3];

const LINT_BOUND: usize = 4000;

/// A generated machine with the learner configuration used to infer it.
#[derive(Debug, Clone)]
pub struct Generated {
    pub seed: u64,
    pub machine: Efsm,
    pub source: String,
    pub config: LearnerConfig,
}

fn leaf(rng: &mut ChaCha8Rng, regs: &[&str]) -> String {
    if rng.gen_bool(0.3) {
        rng.gen_range(0..=3).to_string()
    } else {
        regs.choose(rng).unwrap().to_string()
    }
}

/// Integer term of at most three nodes.
fn term(rng: &mut ChaCha8Rng, regs: &[&str]) -> String {
    if rng.gen_bool(0.5) {
        leaf(rng, regs)
    } else {
        let op = ["+", "-"].choose(rng).unwrap();
        let a = regs.choose(rng).unwrap();
        format!("{a} {op} {}", leaf(rng, regs))
    }
}

/// Comparison of at most five nodes, with its complement.
fn guard(rng: &mut ChaCha8Rng, regs: &[&str]) -> (String, String) {
    let t = term(rng, regs);
    let k: i64 = rng.gen_range(0..=4);
    let (op, neg) = *[("<", ">="), ("<=", ">"), ("=", "!="), (">", "<=")].choose(rng).unwrap();
    let g = format!("{t} {op} {k}");
    let n = if neg == "!=" { format!("not ({t} = {k})") } else { format!("{t} {neg} {k}") };
    (g, n)
}

/// Registers readable in `state`: the input parameter always, outputs
/// registers only away from the start state, where they are still ⊥.
fn readable(state: usize) -> Vec<&'static str> {
    if state == 0 {
        vec!["x"]
    } else {
        vec!["x", "v", "w"]
    }
}

fn output(rng: &mut ChaCha8Rng, regs: &[&str], avoid: Option<&str>) -> String {
    loop {
        let o = match rng.gen_range(0..4) {
            0 => format!("O(v:={})", term(rng, regs)),
            1 => format!("Q(w:={})", term(rng, regs)),
            2 => "P()".to_string(),
            _ => "R(v:=x)".to_string(),
        };
        let label = &o[..1];
        if avoid != Some(label) {
            return o;
        }
    }
}

fn candidate(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..=4);
    let mut lines = Vec::new();
    for s in 0..n {
        let regs = readable(s);
        let next = (s + 1) % n;
        lines.push(format!("  s{s} -> s{next} : b() / P()"));
        if s > 0 && rng.gen_bool(0.2) {
            continue;
        }
        if rng.gen_bool(0.5) {
            let target = rng.gen_range(0..n);
            let o = if rng.gen_bool(0.15) {
                format!("  s{s} -> s{s} : a(x) / ω")
            } else {
                format!("  s{s} -> s{target} : a(x) / {}", output(rng, &regs, None))
            };
            lines.push(o);
        } else {
            let (g, ng) = guard(rng, &regs);
            let o1 = output(rng, &regs, None);
            let o2 = output(rng, &regs, Some(&o1[..1]));
            let t1 = rng.gen_range(0..n);
            let t2 = rng.gen_range(0..n);
            lines.push(format!("  s{s} -> s{t1} : a(x) [{g}] / {o1}"));
            lines.push(format!("  s{s} -> s{t2} : a(x) [{ng}] / {o2}"));
        }
    }
    let states: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let xs: Vec<String> = X_DOMAIN.iter().map(|v| v.to_string()).collect();
    format!(
        "signature\n  input a(x)\n  input b()\n  output O(v)\n  output P()\n  output Q(w)\n  output R(v)\n\
         domains\n  x in {{{}}}\nstates {}\ninitial s0\ntransitions\n{}\n",
        xs.join(", "),
        states.join(", "),
        lines.join("\n")
    )
}

/// Learner configuration for a generated machine.
pub fn learner_config(m: &Efsm, seed: u64) -> LearnerConfig {
    let i1 = vec![ConcreteInput::new("a", vec![Value::Int(1)]), ConcreteInput::new("b", vec![])];
    let mut i_s = i1.clone();
    for v in X_DOMAIN {
        let x = ConcreteInput::new("a", vec![Value::Int(v)]);
        if !i_s.contains(&x) {
            i_s.push(x);
        }
    }
    let mut cfg = LearnerConfig::new(i1, i_s, DomainSpec::from_machine(m));
    cfg.seed = seed;
    cfg
}

/// The first acceptable machine drawn from `seed`: lint-clean, fully
/// explored within the lint bound and strongly connected.
pub fn generate(seed: u64) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let source = candidate(&mut rng);
        let machine = parse_machine(&source).unwrap_or_else(|e| panic!("generator wrote bad text: {e}\n{source}"));
        let report = lint::lint(&machine, LINT_BOUND);
        if report.issues.is_empty() && !report.truncated {
            let config = learner_config(&machine, seed);
            return Generated {
                seed,
                machine,
                source,
                config,
            };
        }
    }
}

/// The fixed suite of random machines.
pub fn suite(n: usize) -> Vec<Generated> {
    (0..n as u64).map(|i| generate(1000 + i)).collect()
}

/// Every concrete input over the declared domains.
pub fn all_inputs(m: &Efsm) -> Vec<ConcreteInput> {
    lint::concrete_inputs(m)
}

/// Checks every Λ row of a learned model: it was observed at its recorded
/// position of `trace`, and stepping the model from the row's state and
/// registers gives the recorded output, registers and successor. Returns
/// the failures.
pub fn replay_failures(l: &Learned, trace: &Trace) -> Vec<String> {
    let sig = &l.model.signature;
    let mut bad = Vec::new();
    for s in &l.sampled.samples {
        let state = &l.sampled.states[s.state];
        let entry = trace.entries.get(s.step - 1);
        let observed = entry.is_some_and(|e| {
            e.input == s.input && e.output == s.output && trace.registers_before(sig, s.step - 1) == s.before
        });
        if !observed {
            bad.push(format!("row at step {} is not in the trace", s.step));
            continue;
        }
        let target = l.sampled.delta.get(&(s.state, s.input.name.clone(), s.output.label()));
        match l.model.step(state, &s.before, &s.input) {
            Ok(step) => {
                let target_ok = target.is_some_and(|t| l.sampled.states[*t] == step.state);
                if step.output != s.output || step.registers != s.after || !target_ok {
                    bad.push(format!(
                        "{state} {} from {:?}: model gives {} into {}, recorded {}",
                        s.input, s.before, step.output, step.state, s.output
                    ));
                }
            }
            Err(e) => bad.push(format!("{state} {}: {e}", s.input)),
        }
    }
    bad
}

/// Abstract transition counts per output label, for diagnostics.
pub fn label_counts(m: &Efsm) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for t in &m.transitions {
        let k = match &t.output {
            OutputLabel::Named(n) => n.clone(),
            other => other.to_string(),
        };
        *out.entry(k).or_insert(0) += 1;
    }
    out
}

/// Random sampled machine with up to six states, built by walking a
/// generated machine whose states are partly duplicated.
pub fn sampled_machine(seed: u64) -> SampledFsm {
    let g = generate(seed);
    let m = g.machine;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = m.states.len();
    let copies = rng.gen_range(0..=(6 - n));
    // Conjecture state = (machine state, copy); copy k exists for the first
    // `copies` machine states only.
    let mut states: Vec<(usize, usize)> = (0..n).map(|i| (i, 0)).collect();
    states.extend((0..copies).map(|i| (i, 1)));
    let index = |s: (usize, usize)| states.iter().position(|x| *x == s).unwrap();
    let inputs = all_inputs(&m);
    let mut delta = BTreeMap::new();
    let mut samples = Vec::new();
    let mut cur = (0usize, 0usize);
    let mut regs = RegisterConfiguration::bottom(&m.signature);
    for step in 1..=300 {
        let x = inputs.choose(&mut rng).unwrap().clone();
        let s = m.step(&m.states[cur.0], &regs, &x).unwrap();
        let next_state = m.states.iter().position(|q| *q == s.state).unwrap();
        let dup = next_state < copies && rng.gen_bool(0.5);
        let key = (index(cur), x.name.clone(), s.output.label());
        let next = *delta.entry(key).or_insert_with(|| index((next_state, usize::from(dup))));
        samples.push(Sample {
            state: index(cur),
            before: regs.clone(),
            input: x,
            output: s.output,
            after: s.registers.clone(),
            step,
        });
        cur = states[next];
        regs = s.registers;
    }
    let mut seen = HashSet::new();
    samples.retain(|s| seen.insert((s.state, s.before.clone(), s.input.clone())));
    SampledFsm {
        signature: m.signature.clone(),
        states: states.iter().map(|(q, k)| format!("s{q}.{k}")).collect(),
        current: index(cur),
        delta,
        samples,
    }
}
