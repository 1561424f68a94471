//! Inference of an EFSM from a system without reset: learn the control
//! structure with homing and characterising sequences, reduce it, then
//! generalise the samples into guards and output functions.

mod backbone;
pub mod config;
pub mod conjecture;
pub mod log;
pub mod reduce;
pub mod track;

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::generalise::{generalise, GeneraliseError, SynthesisReport};
use crate::machine::{ConcreteInput, ConcreteOutput, Domain, Efsm, RegisterConfiguration, Trace};
use crate::oracle::{random_walk, Counterexample, Level, OracleError, ParamDomain, Walk};
use crate::sul::{Sul, SulError};
use backbone::Learner;
pub use config::{ConfigError, LearnerConfig, ProjectionKind};
pub use conjecture::{Sample, SampledFsm, StateId};
use log::{Event, EventLog};
pub use reduce::reduce_fsm;
use track::{ConjectureView, ModelView};

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("SUL step budget of {0} exhausted")]
    Budget(usize),
    #[error(transparent)]
    Sul(SulError),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error(transparent)]
    Synthesis(#[from] GeneraliseError),
}

impl From<OracleError> for LearnError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Sul(SulError::Budget(n)) => LearnError::Budget(n),
            OracleError::Sul(e) => LearnError::Sul(e),
            OracleError::Domain(d) => LearnError::Config(ConfigError::Domain(d)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Stats {
    /// SUL inputs spent by homing, characterisation, transfer and learning.
    pub backbone_steps: usize,
    /// SUL inputs spent by counterexample walks.
    pub oracle_steps: usize,
    pub counterexamples: usize,
    pub nfsm_counterexamples: usize,
    pub data_counterexamples: usize,
    pub restarts: usize,
    /// Conjecture states before reduction.
    pub conjecture_states: usize,
    pub states: usize,
    pub samples: usize,
}

/// A successful inference.
#[derive(Debug, Clone)]
pub struct Learned {
    pub model: Efsm,
    /// The reduced sampled machine the model was generalised from.
    pub sampled: SampledFsm,
    pub report: SynthesisReport,
    pub log: EventLog,
    pub stats: Stats,
    pub counterexamples: Vec<Counterexample>,
}

/// Model, reduced sampled machine, conjecture-to-model state map and
/// synthesis report.
type Generalised = (Efsm, SampledFsm, Vec<Option<usize>>, SynthesisReport);

/// A failed inference with whatever was learned so far.
#[derive(Debug)]
pub struct Failure {
    pub error: LearnError,
    pub log: EventLog,
    pub stats: Stats,
    pub conjecture: Option<Box<SampledFsm>>,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (after {} backbone and {} oracle steps, {} restarts",
            self.error, self.stats.backbone_steps, self.stats.oracle_steps, self.stats.restarts
        )?;
        if let Some(c) = &self.conjecture {
            write!(f, "; last conjecture: {} states, {} samples", c.states.len(), c.samples.len())?;
        }
        f.write_str(")")
    }
}

impl std::error::Error for Failure {}

/// Model domains from the sampling domains.
fn model_domains(cfg: &LearnerConfig) -> std::collections::BTreeMap<String, Domain> {
    cfg.domains
        .params
        .iter()
        .map(|(k, d)| {
            let d = match d {
                ParamDomain::Range { from, to } => Domain::Range { from: *from, to: *to },
                other => Domain::Values(other.values()),
            };
            (k.clone(), d)
        })
        .collect()
}

/// The state of `model` that best explains `trace` from all-⊥ registers:
/// longest matching prefix, first state on ties.
pub fn initial_by_replay(model: &Efsm, trace: &Trace) -> String {
    let mut best: Option<(usize, &String)> = None;
    for s in &model.states {
        let mut state = s.clone();
        let mut regs = crate::machine::RegisterConfiguration::bottom(&model.signature);
        let mut n = 0;
        for e in &trace.entries {
            match model.step(&state, &regs, &e.input) {
                Ok(step) if step.output == e.output => {
                    state = step.state;
                    regs = step.registers;
                    n += 1;
                }
                _ => break,
            }
        }
        if best.is_none_or(|(b, _)| n > b) {
            best = Some((n, s));
        }
    }
    best.map_or_else(|| model.initial.clone(), |(_, s)| s.clone())
}

/// Adds the trace steps before the earliest Λ row of `fsm` as rows. The
/// prefix is replayed through Δ from every state; the replays must end
/// where that row starts and agree with Λ. A step is kept when every such
/// replay puts it in the same state. Returns the number of rows added.
pub fn backfill_prefix(fsm: &mut SampledFsm, trace: &Trace) -> usize {
    let Some(first) = fsm.samples.iter().min_by_key(|s| s.step) else {
        return 0;
    };
    let (end, k) = (first.state, first.step - 1);
    let sig = &fsm.signature;
    let befores: Vec<RegisterConfiguration> = (0..k).map(|i| trace.registers_before(sig, i)).collect();
    let mut rows: HashMap<(usize, &RegisterConfiguration, &ConcreteInput), &ConcreteOutput> = HashMap::new();
    for s in &fsm.samples {
        rows.insert((s.state, &s.before, &s.input), &s.output);
    }
    let replay = |start: usize| -> Option<Vec<usize>> {
        let mut rows = rows.clone();
        let mut path = vec![start];
        for (i, e) in trace.entries[..k].iter().enumerate() {
            let q = *path.last().expect("non-empty");
            if rows.insert((q, &befores[i], &e.input), &e.output).is_some_and(|o| *o != e.output) {
                return None;
            }
            path.push(*fsm.delta.get(&(q, e.input.name.clone(), e.output.label()))?);
        }
        (path.last() == Some(&end)).then_some(path)
    };
    let paths: Vec<Vec<usize>> = (0..fsm.states.len()).filter_map(replay).collect();
    let Some(path) = paths.first() else {
        return 0;
    };
    let before = fsm.samples.len();
    let mut known: HashSet<(usize, RegisterConfiguration, ConcreteInput)> =
        fsm.samples.iter().map(|s| (s.state, s.before.clone(), s.input.clone())).collect();
    for (i, e) in trace.entries[..k].iter().enumerate() {
        if paths.iter().all(|p| p[i] == path[i]) && known.insert((path[i], befores[i].clone(), e.input.clone())) {
            fsm.samples.push(Sample {
                state: path[i],
                before: befores[i].clone(),
                input: e.input.clone(),
                output: e.output.clone(),
                after: e.registers.clone(),
                step: i + 1,
            });
        }
    }
    fsm.samples.len() - before
}

struct Run<'a, U: Sul + ?Sized> {
    l: Learner<'a, U>,
    rng: ChaCha8Rng,
    stats: Stats,
    ces: Vec<Counterexample>,
    last: Option<SampledFsm>,
}

impl<U: Sul + ?Sized> Run<'_, U> {
    fn sync_stats(&mut self) {
        self.stats.backbone_steps = self.l.backbone_steps;
        self.stats.oracle_steps = self.l.oracle_steps;
        self.stats.restarts = self.l.restarts;
        self.stats.counterexamples = self.ces.len();
    }

    /// Records the agreeing steps of a walk as samples and returns the
    /// diverging one, if any.
    fn absorb<S: Clone>(&mut self, walk: &Walk<S>, state_of: impl Fn(&S) -> StateId) -> Option<crate::oracle::WalkStep<S>> {
        let first = self.l.t() - walk.steps.len();
        self.l.oracle_steps += walk.steps.len();
        let diverged = walk.counterexample.is_some();
        let agreeing = if diverged { walk.steps.len() - 1 } else { walk.steps.len() };
        for (k, s) in walk.steps.iter().enumerate() {
            self.l.after_step(&s.input, &s.output);
            if k < agreeing {
                self.l.add_walk_sample(state_of(&s.state), &s.before, &s.input, &s.output, first + k + 1);
            }
        }
        diverged.then(|| walk.steps.last().cloned()).flatten()
    }

    fn log_ce(&mut self, ce: &Counterexample) {
        self.l.log.push(Event::Counterexample {
            t: self.l.t(),
            level: ce.level,
            inputs: ce.inputs.clone(),
            expected: ce.expected.clone(),
            observed: ce.observed.clone(),
        });
        self.ces.push(ce.clone());
        match ce.level {
            Level::Nfsm => self.stats.nfsm_counterexamples += 1,
            Level::Data => self.stats.data_counterexamples += 1,
        }
    }

    /// Control-level phase: backbone until a random walk finds nothing.
    fn learn_control(&mut self) -> Result<(), LearnError> {
        loop {
            if self.ces.len() > self.l.cfg.max_rounds {
                return Err(LearnError::NonConvergence(format!(
                    "more than {} counterexamples",
                    self.l.cfg.max_rounds
                )));
            }
            self.l.backbone()?;
            let start = self.l.pos.expect("backbone ends at a known state");
            let walk = {
                let view = ConjectureView::new(&self.l.conj);
                random_walk(
                    &view,
                    &mut *self.l.sul,
                    start,
                    &self.l.cfg.domains,
                    &self.l.i1,
                    self.l.cfg.nfsm_budget,
                    &mut self.rng,
                )?
            };
            let Some(step) = self.absorb(&walk, |q| *q) else {
                self.l.pos = Some(self.final_state(&walk, start));
                return Ok(());
            };
            let ce = walk.counterexample.clone().expect("divergence");
            self.log_ce(&ce);
            self.l.add_sampling_input(&step.input);
            self.l.reorder_is();
            self.l.on_observation(step.state, &step.before, &step.input, &step.output)?;
        }
    }

    /// Where the conjecture is after an agreeing walk.
    fn final_state(&self, walk: &Walk<StateId>, start: StateId) -> StateId {
        let mut q = start;
        for s in &walk.steps {
            let view = ConjectureView::new(&self.l.conj);
            if let crate::oracle::Verdict::Agree(t) = crate::oracle::Hypothesis::check(&view, &s.state, &s.before, &s.input, &s.output) {
                q = t;
            }
        }
        q
    }

    fn reduce_and_generalise(&mut self) -> Result<Generalised, LearnError> {
        let pos = self.l.pos.expect("known position");
        let reach = self.l.conj.reachable(pos);
        let sampled = self.l.conj.to_sampled(&self.l.sig, pos);
        let (mut reduced, block) = reduce_fsm(&sampled);
        backfill_prefix(&mut reduced, self.l.sul.trace());
        self.last = Some(reduced.clone());
        let mut map = vec![None; self.l.conj.len()];
        for (i, q) in reach.iter().enumerate() {
            map[*q] = Some(block[i]);
        }
        self.l.log.push(Event::Reduce {
            t: self.l.t(),
            before: sampled.states.len(),
            after: reduced.states.len(),
        });
        self.stats.conjecture_states = self.l.conj.len();
        self.stats.states = reduced.states.len();
        self.stats.samples = reduced.samples.len();
        let (model, report) = generalise(&reduced, &model_domains(self.l.cfg), reduced.current, &self.l.cfg.search)?;
        self.l.log.push(Event::Generalise {
            t: self.l.t(),
            transitions: model.transitions.len(),
        });
        Ok((model, reduced, map, report))
    }

    fn run(&mut self) -> Result<Learned, LearnError> {
        loop {
            self.learn_control()?;
            loop {
                let (model, sampled, map, report) = self.reduce_and_generalise()?;
                let q = self.l.pos.expect("known position");
                let start = (q, model.states[map[q].expect("current state is reachable")].clone());
                if self.ces.len() > self.l.cfg.max_rounds {
                    return Err(LearnError::NonConvergence(format!(
                        "more than {} counterexamples",
                        self.l.cfg.max_rounds
                    )));
                }
                let walk = {
                    let view = ModelView {
                        conj: ConjectureView::new(&self.l.conj),
                        model: &model,
                    };
                    random_walk(
                        &view,
                        &mut *self.l.sul,
                        start.clone(),
                        &self.l.cfg.domains,
                        &self.l.i1,
                        self.l.cfg.data_budget,
                        &mut self.rng,
                    )?
                };
                let diverging = self.absorb(&walk, |(q, _)| *q);
                let Some(step) = diverging else {
                    self.l.pos = Some(walk.steps.last().map_or(q, |last| {
                        let view = ConjectureView::new(&self.l.conj);
                        match crate::oracle::Hypothesis::check(&view, &last.state.0, &last.before, &last.input, &last.output) {
                            crate::oracle::Verdict::Agree(t) => t,
                            _ => last.state.0,
                        }
                    }));
                    let mut model = model;
                    model.initial = initial_by_replay(&model, self.l.sul.trace());
                    self.sync_stats();
                    self.l.log.push(Event::Done {
                        t: self.l.t(),
                        backbone_steps: self.stats.backbone_steps,
                        oracle_steps: self.stats.oracle_steps,
                        counterexamples: self.stats.counterexamples,
                    });
                    return Ok(Learned {
                        model,
                        sampled,
                        report,
                        log: std::mem::take(&mut self.l.log),
                        stats: self.stats.clone(),
                        counterexamples: std::mem::take(&mut self.ces),
                    });
                };
                let ce = walk.counterexample.clone().expect("divergence");
                self.log_ce(&ce);
                self.l.add_sampling_input(&step.input);
                self.l.reorder_is();
                let (q, _) = step.state;
                match ce.level {
                    Level::Data => {
                        self.l.add_walk_sample(q, &step.before, &step.input, &step.output, self.l.t());
                        let view = ConjectureView::new(&self.l.conj);
                        let next = match crate::oracle::Hypothesis::check(&view, &q, &step.before, &step.input, &step.output) {
                            crate::oracle::Verdict::Agree(t) => t,
                            _ => q,
                        };
                        self.l.pos = Some(next);
                    }
                    Level::Nfsm => {
                        self.l.on_observation(q, &step.before, &step.input, &step.output)?;
                        break;
                    }
                }
            }
        }
    }
}

/// Learns an EFSM from `sul` without resetting it.
#[allow(clippy::result_large_err)]
pub fn ehw_infer<U: Sul + ?Sized>(sul: &mut U, cfg: &LearnerConfig) -> Result<Learned, Failure> {
    if let Err(e) = cfg.validate(sul.signature()) {
        return Err(Failure {
            error: e.into(),
            log: EventLog::default(),
            stats: Stats::default(),
            conjecture: None,
        });
    }
    let mut run = Run {
        l: Learner::new(sul, cfg),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        stats: Stats::default(),
        ces: Vec::new(),
        last: None,
    };
    match run.run() {
        Ok(learned) => Ok(learned),
        Err(error) => {
            run.sync_stats();
            let conjecture = run.last.take().or_else(|| run.l.pos.map(|q| run.l.conj.to_sampled(&run.l.sig, q)));
            Err(Failure {
                error,
                log: std::mem::take(&mut run.l.log),
                stats: run.stats,
                conjecture: conjecture.map(Box::new),
            })
        }
    }
}
