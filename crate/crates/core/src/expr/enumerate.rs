use std::cmp::Ordering;

use super::{canonical_cmp, BinOp, Expr};
use crate::value::{Type, Value};

/// Size-ordered generator of canonical, well-typed expressions.
///
/// Canonical means: operands of commutative operators are ordered by
/// [`canonical_cmp`], and no operator is applied to constants only (such a
/// subtree would fold to a single constant). Within one node count,
/// expressions come out in printed-text order.
pub struct Enumerator {
    leaves: Vec<(Expr, Type)>,
    levels: Vec<Vec<(Expr, Type)>>,
}

impl Enumerator {
    pub fn new(vars: &[(String, Type)], consts: &[Value]) -> Self {
        let mut leaves: Vec<(Expr, Type)> = vars
            .iter()
            .map(|(n, t)| (Expr::Var(n.clone()), *t))
            .collect();
        for c in consts {
            if let (Some(e), Some(t)) = (Expr::from_value(c), c.ty()) {
                if !leaves.iter().any(|(x, _)| *x == e) {
                    leaves.push((e, t));
                }
            }
        }
        Enumerator {
            leaves,
            levels: vec![Vec::new()],
        }
    }

    /// All canonical expressions with exactly `size` nodes, in order.
    pub fn level(&mut self, size: usize) -> &[(Expr, Type)] {
        while self.levels.len() <= size {
            let next = self.build(self.levels.len());
            self.levels.push(next);
        }
        &self.levels[size]
    }

    fn build(&self, size: usize) -> Vec<(Expr, Type)> {
        let mut out: Vec<(Expr, Type)> = Vec::new();
        if size == 1 {
            out.extend(self.leaves.iter().cloned());
        }
        if size >= 2 {
            for (a, ta) in &self.levels[size - 1] {
                if *ta == Type::Bool && !a.is_const() {
                    out.push((Expr::not(a.clone()), Type::Bool));
                }
            }
        }
        if size >= 3 {
            for left in 1..size - 1 {
                let right = size - 1 - left;
                for (a, ta) in &self.levels[left] {
                    for (b, tb) in &self.levels[right] {
                        if ta != tb || (a.is_const() && b.is_const()) {
                            continue;
                        }
                        for op in BinOp::ALL {
                            let Some(t) = op.result_type(*ta) else { continue };
                            if op.is_commutative() && canonical_cmp(a, b) == Ordering::Greater {
                                continue;
                            }
                            out.push((Expr::bin(op, a.clone(), b.clone()), t));
                        }
                    }
                }
            }
        }
        if size >= 4 {
            for cs in 1..size - 2 {
                for (c, tc) in &self.levels[cs] {
                    if *tc != Type::Bool || c.is_const() {
                        continue;
                    }
                    for asz in 1..size - 1 - cs {
                        let bsz = size - 1 - cs - asz;
                        for (a, ta) in &self.levels[asz] {
                            for (b, tb) in &self.levels[bsz] {
                                if ta == tb {
                                    out.push((
                                        Expr::ite(c.clone(), a.clone(), b.clone()),
                                        *ta,
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
        let mut keyed: Vec<(String, Expr, Type)> =
            out.into_iter().map(|(e, t)| (e.to_string(), e, t)).collect();
        keyed.sort_by(|x, y| x.0.cmp(&y.0));
        keyed.into_iter().map(|(_, e, t)| (e, t)).collect()
    }
}

/// Every canonical well-typed expression with at most `max_nodes` nodes,
/// ordered by (node count, printed text).
pub fn enumerate(vars: &[(String, Type)], consts: &[Value], max_nodes: usize) -> Vec<Expr> {
    let mut en = Enumerator::new(vars, consts);
    let mut out = Vec::new();
    for size in 1..=max_nodes {
        out.extend(en.level(size).iter().map(|(e, _)| e.clone()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ints(names: &[&str]) -> Vec<(String, Type)> {
        names.iter().map(|n| (n.to_string(), Type::Int)).collect()
    }

    #[test]
    fn contains_sum() {
        let all = enumerate(&ints(&["t", "c"]), &[], 3);
        assert!(all.contains(&Expr::bin(BinOp::Add, Expr::var("c"), Expr::var("t"))));
    }

    #[test]
    fn single_constant() {
        assert_eq!(enumerate(&[], &[Value::Int(0)], 1), vec![Expr::Int(0)]);
    }

    #[test]
    fn ordered_and_unique() {
        let all = enumerate(&ints(&["t", "c", "p"]), &[Value::Int(0), Value::Int(1)], 5);
        let mut seen = HashSet::new();
        for w in all.windows(2) {
            assert!(canonical_cmp(&w[0], &w[1]) == Ordering::Less, "{} {}", w[0], w[1]);
        }
        for e in &all {
            assert!(seen.insert(e.clone()));
            assert_eq!(&e.canonical(), e);
        }
    }

    #[test]
    fn prefix_stable() {
        let vars = ints(&["t", "c"]);
        let consts = [Value::Int(0)];
        let small = enumerate(&vars, &consts, 4);
        let big = enumerate(&vars, &consts, 6);
        assert_eq!(&big[..small.len()], &small[..]);
    }
}
