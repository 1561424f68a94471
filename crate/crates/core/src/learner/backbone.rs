//! The no-reset learning loop: homing, characterisation, transfer,
//! sampling and inconsistency handling.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use super::config::{LearnerConfig, ProjectionKind};
use super::conjecture::{Added, Characterisation, Conjecture, Projection, Sample, StateId, StateKey};
use super::log::{Event, EventLog};
use super::LearnError;
use crate::machine::{ConcreteInput, ConcreteOutput, OutputLabel, RegisterConfiguration, Signature};
use crate::sul::{Sul, SulError};
use crate::value::Value;

/// Homing attempts in a row before giving up.
const MAX_HOMING: usize = 200;
/// Failed transfers towards one goal before it is dropped.
const MAX_GOAL_FAILURES: usize = 3;
/// Longest access sequence kept.
const MAX_ACCESS: usize = 64;
/// Longest suffix of recent inputs tried as a new W sequence.
const MAX_SEPARATOR: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
enum HomeEntry {
    Partial(Characterisation),
    Done(StateId),
}

/// A transition whose target is still being characterised.
#[derive(Debug, Clone)]
struct PendingTail {
    before: RegisterConfiguration,
    input: ConcreteInput,
    r1: RegisterConfiguration,
    pi1: Characterisation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Flow {
    Continue,
    Restart,
    Done,
}

type Partial = Vec<Option<Value>>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Goal {
    tier: u8,
    state: StateId,
    input: ConcreteInput,
}

struct Step {
    input: ConcreteInput,
    label: OutputLabel,
    state: StateId,
    config: Partial,
}

struct Plan {
    path: Vec<Step>,
    goal: Goal,
}

/// How an output argument depends on the configuration, per (state,
/// input, label).
#[derive(Debug, Clone)]
enum ArgSource {
    Const(Value),
    Copy(usize),
    Unknown,
}

pub(crate) struct Learner<'a, U: Sul + ?Sized> {
    pub sul: &'a mut U,
    pub sig: Signature,
    pub cfg: &'a LearnerConfig,
    pub i1: Vec<ConcreteInput>,
    pub is: Vec<ConcreteInput>,
    pub h: Vec<ConcreteInput>,
    pub w: Vec<Vec<ConcreteInput>>,
    proj: Projection,
    pub conj: Conjecture,
    homing: BTreeMap<(Vec<OutputLabel>, RegisterConfiguration), HomeEntry>,
    pub pos: Option<StateId>,
    pub regs: RegisterConfiguration,
    recent: Vec<ConcreteInput>,
    since_home: Vec<ConcreteInput>,
    home_response: Vec<OutputLabel>,
    pending: BTreeMap<(StateId, String, OutputLabel), PendingTail>,
    tried: HashSet<(StateId, ConcreteInput)>,
    seen: HashSet<(StateId, ConcreteInput)>,
    sampling: bool,
    failures: HashMap<Goal, usize>,
    pub access: BTreeMap<(Vec<OutputLabel>, StateId, RegisterConfiguration), Vec<ConcreteInput>>,
    pub log: EventLog,
    pub backbone_steps: usize,
    pub oracle_steps: usize,
    pub restarts: usize,
}

fn known(r: &RegisterConfiguration) -> Partial {
    r.0.iter().cloned().map(Some).collect()
}

fn full(p: &Partial) -> Option<RegisterConfiguration> {
    p.iter().cloned().collect::<Option<Vec<_>>>().map(RegisterConfiguration)
}

impl<'a, U: Sul + ?Sized> Learner<'a, U> {
    pub fn new(sul: &'a mut U, cfg: &'a LearnerConfig) -> Self {
        let sig = sul.signature().clone();
        let regs = sul.trace().last_registers(&sig);
        let mut l = Learner {
            proj: Projection::identity(&sig),
            i1: cfg.i1.clone(),
            is: cfg.sampling_inputs(),
            h: cfg.h.clone(),
            w: cfg.w.clone(),
            sul,
            sig,
            cfg,
            conj: Conjecture::default(),
            homing: BTreeMap::new(),
            pos: None,
            regs,
            recent: Vec::new(),
            since_home: Vec::new(),
            home_response: Vec::new(),
            pending: BTreeMap::new(),
            tried: HashSet::new(),
            seen: HashSet::new(),
            sampling: false,
            failures: HashMap::new(),
            access: BTreeMap::new(),
            log: EventLog::default(),
            backbone_steps: 0,
            oracle_steps: 0,
            restarts: 0,
        };
        l.proj = l.projection();
        l
    }

    fn projection(&self) -> Projection {
        match self.cfg.projection {
            ProjectionKind::Characterising => Projection::for_w(&self.sig, &self.w),
            ProjectionKind::Identity => Projection::identity(&self.sig),
        }
    }

    pub fn t(&self) -> usize {
        self.sul.steps()
    }

    pub fn name(&self, q: StateId) -> String {
        self.conj.names[q].clone()
    }

    pub fn non_convergence(&self, reason: impl Into<String>) -> LearnError {
        LearnError::NonConvergence(reason.into())
    }

    fn apply(&mut self, x: &ConcreteInput) -> Result<ConcreteOutput, LearnError> {
        if self.backbone_steps >= self.cfg.max_backbone_steps {
            return Err(self.non_convergence(format!(
                "backbone used its {} steps without settling",
                self.cfg.max_backbone_steps
            )));
        }
        let y = self.sul.apply(x).map_err(|e| match e {
            SulError::Budget(n) => LearnError::Budget(n),
            other => LearnError::Sul(other),
        })?;
        self.backbone_steps += 1;
        self.after_step(x, &y);
        Ok(y)
    }

    /// Bookkeeping shared by backbone and oracle steps.
    pub fn after_step(&mut self, x: &ConcreteInput, y: &ConcreteOutput) {
        self.regs = self.regs.update(&self.sig, x, y);
        self.recent.push(x.clone());
        if self.recent.len() > MAX_SEPARATOR {
            self.recent.remove(0);
        }
        self.since_home.push(x.clone());
    }

    fn identified(&mut self, q: StateId) {
        self.pos = Some(q);
        self.since_home.clear();
        self.update_access();
    }

    fn update_access(&mut self) {
        let Some(q) = self.pos else { return };
        if self.since_home.len() > MAX_ACCESS {
            return;
        }
        let key = (self.home_response.clone(), q, self.regs.clone());
        let shorter = self.access.get(&key).is_none_or(|a| a.len() > self.since_home.len());
        if shorter {
            self.access.insert(key, self.since_home.clone());
        }
    }

    /// Runs until no transition is left to learn or sample in the component
    /// reachable from the current state.
    pub fn backbone(&mut self) -> Result<(), LearnError> {
        loop {
            if self.pos.is_none() && self.home()? == Flow::Restart {
                continue;
            }
            match self.transfer()? {
                Flow::Continue | Flow::Restart => {}
                Flow::Done if !self.sampling => self.sampling = true,
                Flow::Done => return Ok(()),
            }
        }
    }

    fn home(&mut self) -> Result<Flow, LearnError> {
        for _ in 0..MAX_HOMING {
            let mut response = Vec::new();
            for x in self.h.clone() {
                response.push(self.apply(&x)?.label());
            }
            self.home_response = response.clone();
            self.since_home.clear();
            let after_h = self.regs.clone();
            let key = (response.clone(), self.proj.apply(&after_h));
            let entry = self.homing.get(&key).cloned();
            let state = match &entry {
                Some(HomeEntry::Done(q)) => Some(self.name(*q)),
                _ => None,
            };
            self.log.push(Event::Home {
                t: self.t(),
                h: self.h.clone(),
                response: response.iter().map(|l| l.to_string()).collect(),
                config: after_h.to_string(),
                state,
            });
            let mut pi1 = match entry {
                Some(HomeEntry::Done(q)) => {
                    self.identified(q);
                    return Ok(Flow::Continue);
                }
                Some(HomeEntry::Partial(p)) => p,
                None => Characterisation::new(),
            };
            let mut last = Vec::new();
            if let Some(seq) = self.w.iter().find(|s| !pi1.contains_key(*s)).cloned() {
                let labels = self.characterise(&seq, &mut last, "after h".into())?;
                pi1.insert(seq, labels);
            }
            if pi1.len() < self.w.len() {
                self.homing.insert(key, HomeEntry::Partial(pi1));
                continue;
            }
            let pi2 = self.proj.apply(&after_h);
            let (q, _) = self.conj.intern(StateKey { pi1, pi2 }, &after_h);
            self.homing.insert(key, HomeEntry::Done(q));
            if let Some(p) = self.conj.follow(q, &last) {
                self.identified(p);
                return Ok(Flow::Continue);
            }
        }
        Err(self.non_convergence("homing never reached a known state"))
    }

    /// Applies one W sequence, collecting `(input, label)` pairs.
    fn characterise(
        &mut self,
        seq: &[ConcreteInput],
        last: &mut Vec<(String, OutputLabel)>,
        state: String,
    ) -> Result<Vec<OutputLabel>, LearnError> {
        let mut labels = Vec::new();
        for x in seq {
            let l = self.apply(x)?.label();
            last.push((x.name.clone(), l.clone()));
            labels.push(l);
        }
        self.log.push(Event::Characterise {
            t: self.t(),
            state,
            w: seq.to_vec(),
            response: labels.iter().map(|l| l.to_string()).collect(),
        });
        Ok(labels)
    }

    /// Handles `x/y` observed from state `q` with registers `before`;
    /// `self.regs` already holds the configuration after the step.
    pub fn on_observation(
        &mut self,
        q: StateId,
        before: &RegisterConfiguration,
        x: &ConcreteInput,
        y: &ConcreteOutput,
    ) -> Result<Flow, LearnError> {
        let a = x.name.clone();
        let l = y.label();
        let labels = self.conj.labels(q, &a);
        let refused = labels.iter().any(|(k, _)| **k == OutputLabel::Refused);
        let accepted = labels.iter().any(|(k, _)| **k != OutputLabel::Refused);
        let had_labels = !labels.is_empty();
        let known_label = labels.iter().any(|(k, _)| **k == l);
        if (l == OutputLabel::Refused && accepted) || (l != OutputLabel::Refused && refused) {
            let expected = super::track::expected_labels(&self.conj, q, &a);
            return self.wnd(q, x, y, expected);
        }
        let sample = Sample {
            state: q,
            before: before.clone(),
            input: x.clone(),
            output: y.clone(),
            after: self.regs.clone(),
            step: self.t(),
        };
        if let Added::Conflict(old) = self.conj.add_sample(sample) {
            return self.wnd(q, x, y, old.to_string());
        }
        self.seen.insert((q, x.clone()));
        if self.proj.apply(before) == self.conj.keys[q].pi2 {
            self.tried.insert((q, x.clone()));
        }
        if had_labels && !known_label {
            self.log.push(Event::Inconsistency {
                t: self.t(),
                kind: "guard".into(),
                state: self.name(q),
                input: x.clone(),
                observed: l.to_string(),
                expected: super::track::expected_labels(&self.conj, q, &a),
                h: self.h.clone(),
                w: self.w.clone(),
            });
        }
        match &l {
            OutputLabel::Refused | OutputLabel::Quiescent => {
                self.record_edge(q, x, y, q, !known_label);
                self.pos = Some(q);
            }
            OutputLabel::Named(_) => match self.conj.target(q, &a, &l) {
                Some(t) => {
                    self.log.push(Event::Sample {
                        t: self.t(),
                        state: self.name(q),
                        input: x.clone(),
                        output: y.clone(),
                    });
                    self.pos = Some(t);
                }
                None => return self.learn_tail(q, before, x, y),
            },
        }
        self.update_access();
        Ok(Flow::Continue)
    }

    fn record_edge(&mut self, q: StateId, x: &ConcreteInput, y: &ConcreteOutput, target: StateId, new: bool) {
        self.conj.delta.insert((q, x.name.clone(), y.label()), target);
        let event = if new {
            Event::Learn {
                t: self.t(),
                state: self.name(q),
                input: x.clone(),
                output: y.clone(),
                target: self.name(target),
            }
        } else {
            Event::Sample {
                t: self.t(),
                state: self.name(q),
                input: x.clone(),
                output: y.clone(),
            }
        };
        self.log.push(event);
    }

    /// Characterises the unknown target of `x/y` from `q` with the next
    /// unanswered W sequence.
    fn learn_tail(
        &mut self,
        q: StateId,
        before: &RegisterConfiguration,
        x: &ConcreteInput,
        y: &ConcreteOutput,
    ) -> Result<Flow, LearnError> {
        let key = (q, x.name.clone(), y.label());
        let r1 = self.regs.clone();
        let r1p = self.proj.apply(&r1);
        let mut tail = match self.pending.remove(&key) {
            Some(p) if p.r1 == r1p => p,
            _ => PendingTail {
                before: before.clone(),
                input: x.clone(),
                r1: r1p,
                pi1: Characterisation::new(),
            },
        };
        let mut last = Vec::new();
        if let Some(seq) = self.w.iter().find(|s| !tail.pi1.contains_key(*s)).cloned() {
            let labels = self.characterise(&seq, &mut last, format!("{} after {}/{}", self.name(q), x, y.label()))?;
            tail.pi1.insert(seq, labels);
        }
        if tail.pi1.len() < self.w.len() {
            self.pending.insert(key, tail);
            self.pos = None;
            return Ok(Flow::Continue);
        }
        let (t, _) = self.conj.intern(
            StateKey {
                pi1: tail.pi1,
                pi2: tail.r1,
            },
            &r1,
        );
        self.record_edge(q, x, y, t, true);
        self.pos = self.conj.follow(t, &last);
        self.update_access();
        Ok(Flow::Continue)
    }

    /// Two observations from one conjecture state contradict each other:
    /// extend W and h with a separating sequence and start over.
    fn wnd(&mut self, q: StateId, x: &ConcreteInput, y: &ConcreteOutput, expected: String) -> Result<Flow, LearnError> {
        let involves_refusal = y.label() == OutputLabel::Refused
            || self.conj.target(q, &x.name, &OutputLabel::Refused).is_some();
        let first = if involves_refusal {
            self.i1.iter().find(|i| i.name == x.name).cloned()
        } else {
            None
        }
        .unwrap_or_else(|| x.clone());
        // Suffixes of the recent inputs, first with every input replaced by
        // its I₁ representative, so parameter variants of one abstract
        // separator are not added one by one.
        let representative = |i: &ConcreteInput| self.i1.iter().find(|r| r.name == i.name).cloned().unwrap_or_else(|| i.clone());
        let suffixes: Vec<Vec<ConcreteInput>> = (2..=self.recent.len())
            .map(|len| self.recent[self.recent.len() - len..].to_vec())
            .collect();
        let mut candidates = vec![vec![first]];
        candidates.extend(suffixes.iter().map(|s| s.iter().map(representative).collect()));
        candidates.extend(suffixes);
        let Some(sep) = candidates.into_iter().find(|c| !self.w.contains(c)) else {
            return Err(self.non_convergence(format!(
                "no new separating sequence for `{x}` in {}",
                self.name(q)
            )));
        };
        for i in &sep {
            if !self.i1.contains(i) {
                self.i1.push(i.clone());
            }
            if !self.cfg.i_s.contains(i) && !self.is.contains(i) {
                self.is.push(i.clone());
            }
        }
        self.reorder_is();
        self.w.push(sep.clone());
        self.h.extend(sep);
        self.log.push(Event::Inconsistency {
            t: self.t(),
            kind: "WND".into(),
            state: self.name(q),
            input: x.clone(),
            observed: y.label().to_string(),
            expected,
            h: self.h.clone(),
            w: self.w.clone(),
        });
        self.restart()?;
        Ok(Flow::Restart)
    }

    /// Keeps Iₛ ordered as I₁ followed by the remaining sampling inputs.
    pub fn reorder_is(&mut self) {
        let mut out = self.i1.clone();
        for x in &self.is {
            if !out.contains(x) {
                out.push(x.clone());
            }
        }
        self.is = out;
    }

    fn restart(&mut self) -> Result<(), LearnError> {
        self.restarts += 1;
        self.log.push(Event::Restart {
            t: self.t(),
            restarts: self.restarts,
        });
        if self.restarts > self.cfg.max_restarts {
            return Err(self.non_convergence(format!("more than {} restarts", self.cfg.max_restarts)));
        }
        self.proj = self.projection();
        self.conj = Conjecture::default();
        self.homing.clear();
        self.pending.clear();
        self.tried.clear();
        self.seen.clear();
        self.failures.clear();
        self.access.clear();
        self.sampling = false;
        self.pos = None;
        Ok(())
    }

    /// Adds a Λ row observed outside the backbone.
    pub fn add_walk_sample(&mut self, q: StateId, before: &RegisterConfiguration, x: &ConcreteInput, y: &ConcreteOutput, step: usize) {
        let after = before.update(&self.sig, x, y);
        let added = self.conj.add_sample(Sample {
            state: q,
            before: before.clone(),
            input: x.clone(),
            output: y.clone(),
            after,
            step,
        });
        if added == Added::New {
            self.seen.insert((q, x.clone()));
            if self.proj.apply(before) == self.conj.keys[q].pi2 {
                self.tried.insert((q, x.clone()));
            }
        }
    }

    pub fn add_sampling_input(&mut self, x: &ConcreteInput) {
        if !self.is.contains(x) {
            self.is.push(x.clone());
        }
    }

    fn arg_sources(&self, q: StateId, input: &str, label: &OutputLabel) -> Vec<ArgSource> {
        let OutputLabel::Named(name) = label else {
            return Vec::new();
        };
        let arity = self.sig.output(name).map_or(0, |d| d.params.len());
        let rows: Vec<&Sample> = self.conj.rows_with(q, input, label).collect();
        if rows.is_empty() {
            return vec![ArgSource::Unknown; arity];
        }
        let entered: Vec<RegisterConfiguration> = rows.iter().map(|s| s.before.update_input(&self.sig, &s.input)).collect();
        (0..arity)
            .map(|j| {
                let first = &rows[0].output.args()[j];
                if rows.iter().all(|s| &s.output.args()[j] == first) {
                    return ArgSource::Const(first.clone());
                }
                (0..self.sig.registers().len())
                    .find(|r| rows.iter().zip(&entered).all(|(s, e)| s.output.args()[j] == e.0[*r]))
                    .map_or(ArgSource::Unknown, ArgSource::Copy)
            })
            .collect()
    }

    /// Predicted label, target and configuration of `x` from `(q, cfg)`.
    fn predict(
        &self,
        q: StateId,
        cfg: &Partial,
        x: &ConcreteInput,
        cache: &mut HashMap<(StateId, String, OutputLabel), Vec<ArgSource>>,
    ) -> Option<(OutputLabel, StateId, Partial)> {
        if let Some(rc) = full(cfg) {
            if let Some(row) = self.conj.row(q, &rc, x) {
                let l = row.output.label();
                let t = match l {
                    OutputLabel::Named(_) => self.conj.target(q, &x.name, &l)?,
                    _ => q,
                };
                return Some((l, t, known(&row.after)));
            }
        }
        let labels = self.conj.labels(q, &x.name);
        let mut next = cfg.clone();
        if let Some(decl) = self.sig.input(&x.name) {
            for (p, v) in decl.params.iter().zip(&x.args) {
                if let Some(i) = self.sig.register_index(p) {
                    next[i] = Some(v.clone());
                }
            }
        }
        if labels.iter().any(|(l, _)| **l == OutputLabel::Refused) {
            return Some((OutputLabel::Refused, q, next));
        }
        let [(l, t)] = labels.as_slice() else { return None };
        let l = (*l).clone();
        let t = if l == OutputLabel::Quiescent { q } else { *t };
        if let OutputLabel::Named(name) = &l {
            let key = (q, x.name.clone(), l.clone());
            if !cache.contains_key(&key) {
                let sources = self.arg_sources(q, &x.name, &l);
                cache.insert(key.clone(), sources);
            }
            let entered = next.clone();
            let params = self.sig.output(name).map(|d| d.params.clone()).unwrap_or_default();
            for (p, src) in params.iter().zip(&cache[&key]) {
                let v = match src {
                    ArgSource::Const(v) => Some(v.clone()),
                    ArgSource::Copy(r) => entered[*r].clone(),
                    ArgSource::Unknown => None,
                };
                if let Some(i) = self.sig.register_index(p) {
                    next[i] = v;
                }
            }
        }
        Some((l, t, next))
    }

    /// The best goal available at `(q, cfg)`.
    fn goal_at(&self, q: StateId, cfg: &Partial) -> Option<Goal> {
        let blocked = |g: &Goal| self.failures.get(g).is_some_and(|n| *n >= MAX_GOAL_FAILURES);
        let goal = |tier, input: &ConcreteInput| Goal {
            tier,
            state: q,
            input: input.clone(),
        };
        if let Some(rc) = full(cfg) {
            for ((s, _, _), tail) in &self.pending {
                if *s == q && tail.before == rc {
                    let g = goal(1, &tail.input);
                    if !blocked(&g) {
                        return Some(g);
                    }
                }
            }
        }
        if self.proj.apply_partial(cfg).as_ref() == Some(&self.conj.keys[q].pi2) {
            for x in &self.i1 {
                if !self.tried.contains(&(q, x.clone())) && self.conj.target(q, &x.name, &OutputLabel::Refused).is_none() {
                    let g = goal(1, x);
                    if !blocked(&g) {
                        return Some(g);
                    }
                }
            }
        }
        for x in &self.i1 {
            if self.conj.labels(q, &x.name).is_empty() {
                let g = goal(2, x);
                if !blocked(&g) {
                    return Some(g);
                }
            }
        }
        if self.sampling {
            for x in self.is.iter().filter(|x| !self.i1.contains(x)) {
                if !self.seen.contains(&(q, x.clone())) {
                    let g = goal(3, x);
                    if !blocked(&g) {
                        return Some(g);
                    }
                }
            }
        }
        None
    }

    /// Breadth-first search over predicted (state, configuration) pairs.
    fn plan(&self) -> Option<Plan> {
        let start_q = self.pos?;
        struct Node {
            q: StateId,
            cfg: Partial,
            parent: Option<(usize, ConcreteInput, OutputLabel)>,
            depth: usize,
        }
        let inputs = if self.sampling { &self.is } else { &self.i1 };
        let mut cache = HashMap::new();
        let mut nodes = vec![Node {
            q: start_q,
            cfg: known(&self.regs),
            parent: None,
            depth: 0,
        }];
        let mut visited: HashSet<(StateId, Partial)> = HashSet::new();
        visited.insert((start_q, known(&self.regs)));
        let mut queue = VecDeque::from([0usize]);
        let mut best: Option<(Goal, usize)> = None;
        while let Some(n) = queue.pop_front() {
            let depth = nodes[n].depth;
            if depth > self.cfg.k && best.is_some() {
                break;
            }
            if let Some(g) = self.goal_at(nodes[n].q, &nodes[n].cfg) {
                if best.as_ref().is_none_or(|(b, _)| g.tier < b.tier) {
                    let stop = g.tier == 1 || depth > self.cfg.k;
                    best = Some((g, n));
                    if stop {
                        break;
                    }
                }
            }
            if nodes.len() >= self.cfg.transfer_nodes {
                continue;
            }
            for x in inputs {
                let Some((l, t, cfg)) = self.predict(nodes[n].q, &nodes[n].cfg, x, &mut cache) else {
                    continue;
                };
                if self.conj.keys.get(t).is_none() || !visited.insert((t, cfg.clone())) {
                    continue;
                }
                nodes.push(Node {
                    q: t,
                    cfg,
                    parent: Some((n, x.clone(), l)),
                    depth: depth + 1,
                });
                queue.push_back(nodes.len() - 1);
            }
        }
        let (goal, mut n) = best?;
        let mut path = Vec::new();
        while let Some((p, x, l)) = nodes[n].parent.clone() {
            path.push(Step {
                input: x,
                label: l,
                state: nodes[n].q,
                config: nodes[n].cfg.clone(),
            });
            n = p;
        }
        path.reverse();
        Some(Plan { path, goal })
    }

    fn transfer(&mut self) -> Result<Flow, LearnError> {
        let Some(plan) = self.plan() else {
            return Ok(Flow::Done);
        };
        let from = self.pos.map(|q| self.name(q)).unwrap_or_default();
        self.log.push(Event::Transfer {
            t: self.t(),
            from,
            path: plan.path.iter().map(|s| s.input.clone()).collect(),
            goal: format!("{}@{}", plan.goal.input, self.name(plan.goal.state)),
        });
        for step in &plan.path {
            let flow = self.observe(&step.input)?;
            if flow != Flow::Continue {
                return Ok(flow);
            }
            let on_track = self.pos == Some(step.state)
                && self.sul.trace().entries.last().map(|e| e.output.label()) == Some(step.label.clone())
                && step.config.iter().zip(&self.regs.0).all(|(p, v)| p.as_ref().is_none_or(|p| p == v));
            if !on_track {
                *self.failures.entry(plan.goal.clone()).or_default() += 1;
                return Ok(Flow::Continue);
            }
        }
        if self.pos != Some(plan.goal.state) {
            *self.failures.entry(plan.goal).or_default() += 1;
            return Ok(Flow::Continue);
        }
        // Only a pending tail can stay a goal after its input was applied.
        if plan.goal.tier == 1 {
            *self.failures.entry(plan.goal.clone()).or_default() += 1;
        }
        let flow = self.observe(&plan.goal.input)?;
        Ok(flow)
    }

    /// Applies `x` from the known current state and processes the result.
    fn observe(&mut self, x: &ConcreteInput) -> Result<Flow, LearnError> {
        let q = self.pos.expect("transfer starts from a known state");
        let before = self.regs.clone();
        let y = self.apply(x)?;
        self.on_observation(q, &before, x, &y)
    }
}
