//! Property tests over expressions, machines and the learner's building
//! blocks.

mod common;

use std::collections::BTreeMap;

use efsm_infer::expr::{parse, BinOp, Expr};
use efsm_infer::generalise::{search_expression, Env, Preference, SearchConfig, Target};
use efsm_infer::learner::reduce_fsm;
use efsm_infer::machine::export::{from_json, to_json};
use efsm_infer::machine::text::parse_machine;
use efsm_infer::oracle::{lockstep_walk, DomainSpec};
use efsm_infer::sul::{Sul, SulSession};
use efsm_infer::value::{Type, Value};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const VARS: [&str; 2] = ["x", "y"];

fn int_expr(depth: u32) -> BoxedStrategy<Expr> {
    let leaf = prop_oneof![
        prop::sample::select(VARS.to_vec()).prop_map(Expr::var),
        (0i64..10).prop_map(Expr::Int),
    ];
    if depth == 0 {
        return leaf.boxed();
    }
    let sub = int_expr(depth - 1);
    prop_oneof![
        2 => leaf,
        2 => (prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul]), sub.clone(), sub.clone())
            .prop_map(|(op, a, b)| Expr::bin(op, a, b)),
        1 => (bool_expr(depth - 1), sub.clone(), sub).prop_map(|(c, a, b)| Expr::ite(c, a, b)),
    ]
    .boxed()
}

fn bool_expr(depth: u32) -> BoxedStrategy<Expr> {
    let cmp = prop::sample::select(vec![BinOp::Lt, BinOp::Le, BinOp::Eq, BinOp::Gt, BinOp::Ge]);
    let atom = (cmp, int_expr(depth.saturating_sub(1)), int_expr(depth.saturating_sub(1)))
        .prop_map(|(op, a, b)| Expr::bin(op, a, b));
    if depth == 0 {
        return prop_oneof![any::<bool>().prop_map(Expr::Bool), atom].boxed();
    }
    let sub = bool_expr(depth - 1);
    prop_oneof![
        3 => atom,
        1 => any::<bool>().prop_map(Expr::Bool),
        1 => sub.clone().prop_map(Expr::not),
        2 => (prop::sample::select(vec![BinOp::And, BinOp::Or, BinOp::Eq]), sub.clone(), sub)
            .prop_map(|(op, a, b)| Expr::bin(op, a, b)),
    ]
    .boxed()
}

fn any_expr() -> BoxedStrategy<Expr> {
    prop_oneof![int_expr(3), bool_expr(3)].boxed()
}

fn env(x: i64, y: i64) -> Env {
    BTreeMap::from([("x".to_string(), Value::Int(x)), ("y".to_string(), Value::Int(y))])
}

fn int_type(name: &str) -> Option<Type> {
    VARS.contains(&name).then_some(Type::Int)
}

/// True when no operator applies to constants alone; the search never
/// builds such terms since a single constant does the same.
fn unfolded(e: &Expr) -> bool {
    let kids: Vec<&Expr> = match e {
        Expr::Bin(_, a, b) => vec![a, b],
        Expr::Not(a) => vec![a],
        Expr::Ite(c, a, b) => vec![c, a, b],
        _ => return true,
    };
    !e.vars().is_empty() && kids.into_iter().all(unfolded)
}

/// Expressions of at most five nodes whose constants lie in 0..=3.
fn small_expr() -> impl Strategy<Value = Expr> {
    prop_oneof![int_expr(2), bool_expr(1)].prop_filter("at most five nodes, small constants", |e| {
        let large = e.count_leaves(&|l| matches!(l, Expr::Int(i) if *i > 3));
        e.size() <= 5 && large == 0 && unfolded(e)
    })
}

fn constants(e: &Expr) -> Vec<Value> {
    let mut out = Vec::new();
    fn walk(e: &Expr, out: &mut Vec<Value>) {
        match e {
            Expr::Int(_) | Expr::Bool(_) => {
                let v = match e {
                    Expr::Int(i) => Value::Int(*i),
                    _ => Value::Bool(e.is_true()),
                };
                if !out.contains(&v) {
                    out.push(v)
                }
            }
            Expr::Bin(_, a, b) => {
                walk(a, out);
                walk(b, out);
            }
            Expr::Not(a) => walk(a, out),
            Expr::Ite(c, a, b) => {
                walk(c, out);
                walk(a, out);
                walk(b, out);
            }
            _ => {}
        }
    }
    walk(e, &mut out);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printed_expressions_parse_back(e in any_expr()) {
        let text = e.to_string();
        prop_assert_eq!(parse(&text).map_err(|err| err.to_string()), Ok(e), "{}", text);
    }

    #[test]
    fn well_typed_expressions_evaluate(e in any_expr(), x in -20i64..20, y in -20i64..20) {
        let ty = e.type_of(&int_type).unwrap();
        let v = e.eval(&env(x, y)).unwrap();
        prop_assert_eq!(v.ty(), Some(ty));
    }

    #[test]
    fn canonical_form_keeps_meaning(e in any_expr(), x in -5i64..5, y in -5i64..5) {
        let c = e.canonical();
        prop_assert_eq!(c.eval(&env(x, y)), e.eval(&env(x, y)));
        prop_assert_eq!(c.canonical(), c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn search_recovers_small_hidden_expressions(hidden in small_expr()) {
        let envs: Vec<Env> = (0..4).flat_map(|x| (0..4).map(move |y| env(x, y))).collect();
        let values: Vec<Value> = envs.iter().map(|e| hidden.eval(e).unwrap()).collect();
        let (target, pref) = match values[0] {
            Value::Bool(_) => (
                Target::Bool(values.iter().map(|v| *v == Value::Bool(true)).collect()),
                Preference::Guard,
            ),
            _ => (Target::Values(values), Preference::Guard),
        };
        let vars: Vec<(String, Type)> = VARS.iter().map(|v| (v.to_string(), Type::Int)).collect();
        let found = search_expression(&target, &vars, &constants(&hidden), &envs, &pref, &SearchConfig::default());
        prop_assert_eq!(found.misfits, 0, "hidden {} found {}", hidden, found.expr);
        prop_assert!(found.expr.size() <= hidden.size(), "hidden {} found {}", hidden, found.expr);
        for e in &envs {
            prop_assert_eq!(found.expr.eval(e), hidden.eval(e));
        }
    }

    #[test]
    fn machine_text_and_json_roundtrip(seed in 0u64..5000) {
        let g = common::generate(seed);
        let text = g.machine.to_string();
        let back = parse_machine(&text).map_err(|e| e.to_string());
        prop_assert_eq!(back.as_ref(), Ok(&g.machine), "{}", text);
        let json = to_json(&g.machine);
        prop_assert_eq!(from_json(&json).map_err(|e| e.to_string()), Ok(g.machine));
    }

    #[test]
    fn sul_steps_match_trace(seed in 0u64..5000, picks in prop::collection::vec(0usize..64, 0..60)) {
        let g = common::generate(seed);
        let inputs = common::all_inputs(&g.machine);
        let mut sul = SulSession::open(g.machine.clone(), None).unwrap();
        let mut ok = 0;
        for p in picks {
            match sul.apply(&inputs[p % inputs.len()]) {
                Ok(_) => ok += 1,
                Err(_) => break,
            }
            prop_assert_eq!(sul.steps(), ok);
        }
        prop_assert_eq!(sul.trace().len(), ok);
        let replay: Vec<_> = sul.trace().entries.iter().map(|e| e.input.clone()).collect();
        let (trace, _, _) = g.machine.run_trace(&g.machine.initial, &replay).unwrap();
        prop_assert_eq!(&trace, sul.trace());
    }

    #[test]
    fn reduction_is_idempotent(seed in 0u64..5000) {
        let sampled = common::sampled_machine(seed);
        let (once, block) = reduce_fsm(&sampled);
        prop_assert_eq!(block.len(), sampled.states.len());
        let (twice, again) = reduce_fsm(&once);
        prop_assert_eq!(twice.states.len(), once.states.len());
        prop_assert_eq!(&twice.delta, &once.delta);
        prop_assert_eq!(twice.samples.len(), once.samples.len());
        prop_assert_eq!(again, (0..once.states.len()).collect::<Vec<_>>());
    }

    #[test]
    fn machine_never_diverges_from_itself(seed in 0u64..5000, walk in any::<u64>()) {
        let g = common::generate(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(walk);
        let d = lockstep_walk(&g.machine, &g.machine, &DomainSpec::from_machine(&g.machine), 300, &mut rng).unwrap();
        prop_assert!(d.is_none());
    }
}
