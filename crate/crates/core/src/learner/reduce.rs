//! State reduction of a sampled control machine: merge states that are
//! bisimilar as control machines and whose samples never disagree.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::conjecture::{Sample, SampledFsm};
use crate::machine::{ConcreteInput, ConcreteOutput, OutputLabel, RegisterConfiguration};

type Rows = HashMap<(RegisterConfiguration, ConcreteInput), ConcreteOutput>;

/// Numbers blocks by first occurrence so results do not depend on hashing.
fn renumber<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut ids: BTreeMap<K, usize> = BTreeMap::new();
    let mut order = Vec::with_capacity(keys.len());
    for k in keys {
        let next = ids.len();
        order.push(*ids.entry(k.clone()).or_insert(next));
    }
    order
}

/// Sorted `(output, target block)` pairs of one input.
type Row = Vec<(OutputLabel, usize)>;

/// Coarsest partition stable under the transition relation, refining
/// `block`. A missing input is a distinct symbol.
fn refine(fsm: &SampledFsm, inputs: &BTreeSet<String>, mut block: Vec<usize>) -> Vec<usize> {
    loop {
        let signatures: Vec<(usize, Vec<Row>)> = (0..fsm.states.len())
            .map(|q| {
                let per_input = inputs
                    .iter()
                    .map(|i| {
                        let mut row: Row =
                            fsm.labels(q, i).into_iter().map(|(l, t)| (l.clone(), block[t])).collect();
                        row.sort();
                        row
                    })
                    .collect();
                (block[q], per_input)
            })
            .collect();
        let next = renumber(&signatures);
        let count = |b: &[usize]| b.iter().collect::<BTreeSet<_>>().len();
        if count(&next) == count(&block) {
            return next;
        }
        block = next;
    }
}

/// Splits each block greedily so that no two members hold conflicting
/// samples. Returns whether anything changed.
fn split_conflicts(block: &mut [usize], rows: &[Rows]) -> bool {
    let blocks: BTreeSet<usize> = block.iter().copied().collect();
    let mut keys: Vec<(usize, usize)> = vec![(0, 0); block.len()];
    let mut changed = false;
    for b in blocks {
        let members: Vec<usize> = (0..block.len()).filter(|q| block[*q] == b).collect();
        let mut groups: Vec<Rows> = Vec::new();
        for q in members {
            let fits = |g: &Rows| rows[q].iter().all(|(k, o)| g.get(k).is_none_or(|o2| o2 == o));
            let gi = match groups.iter().position(fits) {
                Some(gi) => gi,
                None => {
                    groups.push(Rows::new());
                    groups.len() - 1
                }
            };
            groups[gi].extend(rows[q].iter().map(|(k, o)| (k.clone(), o.clone())));
            keys[q] = (b, gi);
        }
        changed |= groups.len() > 1;
    }
    let renum = renumber(&keys);
    block.copy_from_slice(&renum);
    changed
}

/// Merges equivalent states. Returns the reduced machine and, for each
/// original state, its index in the result.
pub fn reduce_fsm(fsm: &SampledFsm) -> (SampledFsm, Vec<usize>) {
    let n = fsm.states.len();
    let inputs = fsm.inputs();
    let mut rows: Vec<Rows> = vec![Rows::new(); n];
    for s in &fsm.samples {
        rows[s.state].insert((s.before.clone(), s.input.clone()), s.output.clone());
    }
    let mut block = vec![0; n];
    loop {
        block = refine(fsm, &inputs, block);
        if !split_conflicts(&mut block, &rows) {
            break;
        }
    }
    let count = block.iter().max().map_or(0, |m| m + 1);
    let mut states = vec![String::new(); count];
    for q in (0..n).rev() {
        states[block[q]] = fsm.states[q].clone();
    }
    let delta = fsm
        .delta
        .iter()
        .map(|((s, i, l), t)| ((block[*s], i.clone(), l.clone()), block[*t]))
        .collect();
    let mut seen = BTreeSet::new();
    let samples = fsm
        .samples
        .iter()
        .filter_map(|s| {
            let state = block[s.state];
            seen.insert((state, s.before.clone(), s.input.clone()))
                .then(|| Sample { state, ..s.clone() })
        })
        .collect();
    let reduced = SampledFsm {
        signature: fsm.signature.clone(),
        states,
        current: block.get(fsm.current).copied().unwrap_or(0),
        delta,
        samples,
    };
    (reduced, block)
}
