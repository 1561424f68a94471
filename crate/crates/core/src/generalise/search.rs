//! Expression search: size-ordered enumeration with observational
//! equivalence pruning, then genetic programming.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expr::{canonical_cmp, BinOp, Expr};
use crate::value::{Type, Value};

/// Evaluation environment of one sample row.
pub type Env = BTreeMap<String, Value>;

/// What an expression must produce on each row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Bool(Vec<bool>),
    Values(Vec<Value>),
}

impl Target {
    pub fn len(&self) -> usize {
        match self {
            Target::Bool(v) => v.len(),
            Target::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn hits(&self, i: usize, v: Option<&Value>) -> bool {
        match (self, v) {
            (Target::Bool(t), Some(Value::Bool(b))) => t[i] == *b,
            (Target::Values(t), Some(v)) => t[i] == *v,
            _ => false,
        }
    }

    fn misfits(&self, vec: &[Option<Value>]) -> usize {
        (0..self.len()).filter(|i| !self.hits(*i, vec[*i].as_ref())).count()
    }

    fn ty(&self) -> Option<Type> {
        match self {
            Target::Bool(_) => Some(Type::Bool),
            Target::Values(v) => v.first().and_then(Value::ty),
        }
    }
}

/// Tie-break among expressions of equal size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Preference {
    /// Fewer constants first.
    Guard,
    /// Fewer reads of registers outside `inputs` first.
    Output { inputs: BTreeSet<String> },
}

impl Preference {
    fn rank(&self, e: &Expr) -> usize {
        match self {
            Preference::Guard => e.const_count(),
            Preference::Output { inputs } => {
                e.count_leaves(&|l| matches!(l, Expr::Var(v) if !inputs.contains(v)))
            }
        }
    }

    /// Total order used to pick one expression among equals.
    pub fn key(&self, e: &Expr) -> (usize, usize, Expr) {
        (e.size(), self.rank(e), e.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Enumerated,
    Evolved,
    FallbackTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament: usize,
    pub crossover: f64,
    pub mutation: f64,
    /// Offspring larger than this are discarded.
    pub max_size: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            population: 200,
            generations: 100,
            tournament: 4,
            crossover: 0.8,
            mutation: 0.2,
            max_size: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Largest expression size enumerated exhaustively.
    pub max_nodes: usize,
    /// Candidates generated per size before enumeration gives up on it.
    pub level_cap: usize,
    pub gp: GpConfig,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_nodes: 7,
            level_cap: 200_000,
            gp: GpConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Found {
    pub expr: Expr,
    pub misfits: usize,
    pub provenance: Provenance,
    /// Distinct behaviours enumerated plus GP evaluations.
    pub considered: usize,
}

/// `(misfits, size)` of `e` against `target`; evaluation errors are misfits.
pub fn fitness(e: &Expr, envs: &[Env], target: &Target) -> (usize, usize) {
    let misfits = envs
        .iter()
        .enumerate()
        .filter(|(i, env)| !target.hits(*i, e.eval(*env).ok().as_ref()))
        .count();
    (misfits, e.size())
}

type Vector = Vec<Option<Value>>;

struct Cand {
    expr: Expr,
    ty: Type,
    vec: Vector,
}

fn bin_vec(op: BinOp, a: &Vector, b: &Vector) -> Vector {
    a.iter()
        .zip(b)
        .map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => op.apply(x, y).ok(),
            _ => None,
        })
        .collect()
}

fn not_vec(a: &Vector) -> Vector {
    a.iter()
        .map(|x| match x {
            Some(Value::Bool(b)) => Some(Value::Bool(!b)),
            _ => None,
        })
        .collect()
}

fn ite_vec(c: &Vector, a: &Vector, b: &Vector) -> Vector {
    c.iter()
        .enumerate()
        .map(|(i, x)| match x {
            Some(Value::Bool(true)) => a[i].clone(),
            Some(Value::Bool(false)) => b[i].clone(),
            _ => None,
        })
        .collect()
}

/// Bottom-up enumeration keeping one expression per observed behaviour.
struct Enumeration<'a> {
    pref: &'a Preference,
    levels: Vec<Vec<Cand>>,
    seen: HashSet<(Type, Vector)>,
    considered: usize,
    cap: usize,
}

impl<'a> Enumeration<'a> {
    fn new(vars: &[(String, Type)], consts: &[Value], envs: &'a [Env], pref: &'a Preference, cap: usize) -> Self {
        let mut e = Enumeration {
            pref,
            levels: vec![Vec::new()],
            seen: HashSet::new(),
            considered: 0,
            cap,
        };
        let mut leaves = Vec::new();
        for (name, ty) in vars {
            let vec = envs.iter().map(|env| env.get(name).cloned()).collect();
            leaves.push(Cand {
                expr: Expr::var(name),
                ty: *ty,
                vec,
            });
        }
        for c in consts {
            if let (Some(expr), Some(ty)) = (Expr::from_value(c), c.ty()) {
                leaves.push(Cand {
                    expr,
                    ty,
                    vec: vec![Some(c.clone()); envs.len()],
                });
            }
        }
        let level = e.dedupe(leaves);
        e.levels.push(level);
        e
    }

    fn dedupe(&mut self, cands: Vec<Cand>) -> Vec<Cand> {
        let mut best: HashMap<(Type, Vector), Cand> = HashMap::new();
        for c in cands {
            self.considered += 1;
            let sig = (c.ty, c.vec.clone());
            if self.seen.contains(&sig) {
                continue;
            }
            match best.get(&sig) {
                Some(prev) if self.pref.key(&prev.expr) <= self.pref.key(&c.expr) => {}
                _ => {
                    best.insert(sig, c);
                }
            }
        }
        let mut out: Vec<Cand> = best.into_values().collect();
        out.sort_by_key(|a| self.pref.key(&a.expr));
        for c in &out {
            self.seen.insert((c.ty, c.vec.clone()));
        }
        out
    }

    fn grow(&mut self) {
        let size = self.levels.len();
        let mut out: Vec<Cand> = Vec::new();
        let full = |out: &Vec<Cand>| out.len() >= self.cap;
        if size >= 2 {
            for a in &self.levels[size - 1] {
                if a.ty == Type::Bool && !a.expr.is_const() {
                    out.push(Cand {
                        expr: Expr::not(a.expr.clone()),
                        ty: Type::Bool,
                        vec: not_vec(&a.vec),
                    });
                }
            }
        }
        if size >= 3 {
            'bin: for left in 1..size - 1 {
                let right = size - 1 - left;
                for a in &self.levels[left] {
                    for b in &self.levels[right] {
                        if a.ty != b.ty || (a.expr.is_const() && b.expr.is_const()) {
                            continue;
                        }
                        for op in BinOp::ALL {
                            let Some(ty) = op.result_type(a.ty) else { continue };
                            if op.is_commutative() && canonical_cmp(&a.expr, &b.expr) == std::cmp::Ordering::Greater {
                                continue;
                            }
                            out.push(Cand {
                                expr: Expr::bin(op, a.expr.clone(), b.expr.clone()),
                                ty,
                                vec: bin_vec(op, &a.vec, &b.vec),
                            });
                        }
                        if full(&out) {
                            break 'bin;
                        }
                    }
                }
            }
        }
        if size >= 4 && !full(&out) {
            'ite: for cs in 1..size - 2 {
                for c in &self.levels[cs] {
                    if c.ty != Type::Bool || c.expr.is_const() {
                        continue;
                    }
                    for asz in 1..size - 1 - cs {
                        let bsz = size - 1 - cs - asz;
                        for a in &self.levels[asz] {
                            for b in &self.levels[bsz] {
                                if a.ty == b.ty {
                                    out.push(Cand {
                                        expr: Expr::ite(c.expr.clone(), a.expr.clone(), b.expr.clone()),
                                        ty: a.ty,
                                        vec: ite_vec(&c.vec, &a.vec, &b.vec),
                                    });
                                }
                            }
                            if full(&out) {
                                break 'ite;
                            }
                        }
                    }
                }
            }
        }
        let level = self.dedupe(out);
        self.levels.push(level);
    }
}

/// The smallest perfect fit up to `max_nodes` by enumeration, with the
/// best-effort candidate when none fits.
pub fn enumerate_fit(
    target: &Target,
    vars: &[(String, Type)],
    consts: &[Value],
    envs: &[Env],
    pref: &Preference,
    max_nodes: usize,
    cap: usize,
) -> (Option<Expr>, Option<(usize, Expr)>, usize) {
    let want = target.ty();
    let mut en = Enumeration::new(vars, consts, envs, pref, cap);
    let mut best: Option<(usize, Expr)> = None;
    for size in 1..=max_nodes {
        if size > 1 {
            en.grow();
        }
        let mut fit: Option<&Cand> = None;
        for c in &en.levels[size] {
            if Some(c.ty) != want && !(want.is_none() && target.is_empty()) {
                continue;
            }
            let m = target.misfits(&c.vec);
            if m == 0 {
                if fit.is_none_or(|f| pref.key(&c.expr) < pref.key(&f.expr)) {
                    fit = Some(c);
                }
            } else if best.as_ref().is_none_or(|(bm, _)| m < *bm) {
                best = Some((m, c.expr.clone()));
            }
        }
        if let Some(f) = fit {
            return (Some(f.expr.clone()), best, en.considered);
        }
    }
    (None, best, en.considered)
}

/// Typed random expressions and the genetic operators over them.
struct Grammar {
    vars: Vec<(String, Type)>,
    consts: Vec<Value>,
}

impl Grammar {
    fn var_type(&self, name: &str) -> Option<Type> {
        self.vars.iter().find(|(n, _)| n == name).map(|(_, t)| *t)
    }

    fn leaf<R: Rng>(&self, ty: Type, rng: &mut R) -> Option<Expr> {
        let mut options: Vec<Expr> = self
            .vars
            .iter()
            .filter(|(_, t)| *t == ty)
            .map(|(n, _)| Expr::var(n))
            .collect();
        options.extend(
            self.consts
                .iter()
                .filter(|c| c.ty() == Some(ty))
                .filter_map(Expr::from_value),
        );
        if ty == Type::Bool {
            options.push(Expr::Bool(true));
        }
        options.choose(rng).cloned()
    }

    fn random<R: Rng>(&self, ty: Type, depth: usize, rng: &mut R) -> Option<Expr> {
        if depth == 0 || rng.gen_bool(0.3) {
            if let Some(l) = self.leaf(ty, rng) {
                return Some(l);
            }
            if depth == 0 {
                return None;
            }
        }
        for _ in 0..4 {
            let e = match (ty, rng.gen_range(0..4)) {
                (Type::Int, 0..=2) => {
                    let op = *[BinOp::Add, BinOp::Sub, BinOp::Mul].choose(rng).unwrap();
                    self.random(Type::Int, depth - 1, rng)
                        .zip(self.random(Type::Int, depth - 1, rng))
                        .map(|(a, b)| Expr::bin(op, a, b))
                }
                (Type::Bool, 0 | 1) => {
                    let op = *[BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge, BinOp::Eq].choose(rng).unwrap();
                    let operand = if op == BinOp::Eq && rng.gen_bool(0.3) { Type::Symbol } else { Type::Int };
                    self.random(operand, depth - 1, rng)
                        .zip(self.random(operand, depth - 1, rng))
                        .map(|(a, b)| Expr::bin(op, a, b))
                }
                (Type::Bool, 2) => {
                    let op = *[BinOp::And, BinOp::Or].choose(rng).unwrap();
                    self.random(Type::Bool, depth - 1, rng)
                        .zip(self.random(Type::Bool, depth - 1, rng))
                        .map(|(a, b)| Expr::bin(op, a, b))
                }
                (Type::Bool, _) => self.random(Type::Bool, depth - 1, rng).map(Expr::not),
                _ => {
                    let c = self.random(Type::Bool, depth - 1, rng);
                    let a = self.random(ty, depth - 1, rng);
                    let b = self.random(ty, depth - 1, rng);
                    match (c, a, b) {
                        (Some(c), Some(a), Some(b)) => Some(Expr::ite(c, a, b)),
                        _ => None,
                    }
                }
            };
            if e.is_some() {
                return e;
            }
        }
        self.leaf(ty, rng)
    }

    /// Pre-order subterms with their types.
    fn subterms(&self, e: &Expr) -> Vec<(Expr, Type)> {
        let mut out = Vec::new();
        self.collect(e, &mut out);
        out
    }

    fn collect(&self, e: &Expr, out: &mut Vec<(Expr, Type)>) {
        if let Ok(t) = e.type_of(&|n| self.var_type(n)) {
            out.push((e.clone(), t));
        }
        match e {
            Expr::Bin(_, a, b) => {
                self.collect(a, out);
                self.collect(b, out);
            }
            Expr::Not(a) => self.collect(a, out),
            Expr::Ite(c, a, b) => {
                self.collect(c, out);
                self.collect(a, out);
                self.collect(b, out);
            }
            _ => {}
        }
    }
}

/// Replaces the `n`th pre-order node (counting only well-typed ones the
/// same way as [`Grammar::subterms`]).
fn replace_nth(e: &Expr, n: &mut usize, with: &Expr, g: &Grammar) -> Expr {
    if e.type_of(&|v| g.var_type(v)).is_ok() {
        if *n == 0 {
            *n = usize::MAX;
            return with.clone();
        }
        if *n != usize::MAX {
            *n -= 1;
        }
    }
    match e {
        Expr::Bin(op, a, b) => {
            let a = replace_nth(a, n, with, g);
            let b = replace_nth(b, n, with, g);
            Expr::bin(*op, a, b)
        }
        Expr::Not(a) => Expr::not(replace_nth(a, n, with, g)),
        Expr::Ite(c, a, b) => {
            let c = replace_nth(c, n, with, g);
            let a = replace_nth(a, n, with, g);
            let b = replace_nth(b, n, with, g);
            Expr::ite(c, a, b)
        }
        leaf => leaf.clone(),
    }
}

/// Genetic programming over typed trees. Fitness is `(misfits, size)`,
/// lower is better.
pub fn evolve(
    target: &Target,
    vars: &[(String, Type)],
    consts: &[Value],
    envs: &[Env],
    seeds: &[Expr],
    cfg: &GpConfig,
    seed: u64,
) -> (Expr, usize, usize) {
    let ty = target.ty().unwrap_or(Type::Int);
    let g = Grammar {
        vars: vars.to_vec(),
        consts: consts.to_vec(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evaluations = 0;
    let mut score = |e: &Expr| {
        evaluations += 1;
        fitness(e, envs, target)
    };
    let mut pop: Vec<(Expr, (usize, usize))> = Vec::with_capacity(cfg.population);
    for s in seeds {
        let f = score(s);
        pop.push((s.clone(), f));
    }
    while pop.len() < cfg.population.max(1) {
        let depth = rng.gen_range(1..=4);
        if let Some(e) = g.random(ty, depth, &mut rng) {
            let f = score(&e);
            pop.push((e, f));
        } else {
            break;
        }
    }
    if pop.is_empty() {
        return (Expr::Bool(false), target.len(), evaluations);
    }
    let best_of = |pop: &[(Expr, (usize, usize))]| {
        pop.iter()
            .min_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)))
            .cloned()
            .unwrap()
    };
    let mut best = best_of(&pop);
    for _ in 0..cfg.generations {
        if best.1 .0 == 0 {
            break;
        }
        let mut next = vec![best.clone()];
        while next.len() < pop.len() {
            let pick = |rng: &mut ChaCha8Rng| {
                (0..cfg.tournament.max(1))
                    .map(|_| &pop[rng.gen_range(0..pop.len())])
                    .min_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)))
                    .unwrap()
                    .0
                    .clone()
            };
            let mut child = pick(&mut rng);
            if rng.gen_bool(cfg.crossover) {
                let donor = pick(&mut rng);
                let spots = g.subterms(&child);
                let n = rng.gen_range(0..spots.len());
                let t = spots[n].1;
                let donors: Vec<Expr> = g
                    .subterms(&donor)
                    .into_iter()
                    .filter(|(_, dt)| *dt == t)
                    .map(|(e, _)| e)
                    .collect();
                if let Some(d) = donors.choose(&mut rng) {
                    child = replace_nth(&child, &mut n.clone(), d, &g);
                }
            }
            if rng.gen_bool(cfg.mutation) {
                let spots = g.subterms(&child);
                let n = rng.gen_range(0..spots.len());
                if let Some(fresh) = g.random(spots[n].1, 2, &mut rng) {
                    child = replace_nth(&child, &mut n.clone(), &fresh, &g);
                }
            }
            if child.size() > cfg.max_size || child.type_of(&|v| g.var_type(v)) != Ok(ty) {
                continue;
            }
            let f = score(&child);
            next.push((child, f));
        }
        pop = next;
        best = best_of(&pop);
    }
    (best.0.canonical(), best.1 .0, evaluations)
}

/// Enumeration first, then GP seeded with the best enumerated candidate.
/// Returns the best expression found, perfect or not.
pub fn search_expression(
    target: &Target,
    vars: &[(String, Type)],
    consts: &[Value],
    envs: &[Env],
    pref: &Preference,
    cfg: &SearchConfig,
) -> Found {
    let (fit, best, considered) = enumerate_fit(target, vars, consts, envs, pref, cfg.max_nodes, cfg.level_cap);
    if let Some(expr) = fit {
        return Found {
            expr,
            misfits: 0,
            provenance: Provenance::Enumerated,
            considered,
        };
    }
    let seeds: Vec<Expr> = best.iter().map(|(_, e)| e.clone()).collect();
    let (expr, _, evals) = evolve(target, vars, consts, envs, &seeds, &cfg.gp, cfg.seed);
    let misfits = fitness(&expr, envs, target).0;
    Found {
        expr,
        misfits,
        provenance: Provenance::Evolved,
        considered: considered + evals,
    }
}
