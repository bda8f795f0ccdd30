//! Exhaustive enumeration of vertex-disjoint cycle packings, used as an
//! independent reference for the solver on small instances.

use std::collections::BTreeSet;

use super::{Cycle, Solution, WeightedCycle};
use crate::compatibility::PairId;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest number of distinct pairs an instance may touch.
pub const BRUTE_FORCE_PAIR_LIMIT: usize = 18;

struct Enumerator<'a, S> {
    vertices: Vec<PairId>,
    by_vertex: Vec<Vec<usize>>,
    cycles: &'a [WeightedCycle<S>],
    members: Vec<Vec<usize>>,
}

impl<'a, S: Scalar> Enumerator<'a, S> {
    fn new(cycles: &'a [WeightedCycle<S>]) -> Result<Self> {
        let vertices: Vec<PairId> = cycles
            .iter()
            .flat_map(|c| c.cycle.members().iter().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if vertices.len() > BRUTE_FORCE_PAIR_LIMIT {
            return Err(Error::TooLarge { limit: BRUTE_FORCE_PAIR_LIMIT, actual: vertices.len() });
        }
        let members: Vec<Vec<usize>> = cycles
            .iter()
            .map(|c| c.cycle.members().iter().map(|v| vertices.binary_search(v).unwrap()).collect())
            .collect();
        let mut by_vertex = vec![Vec::new(); vertices.len()];
        for (j, m) in members.iter().enumerate() {
            let low = *m.iter().min().unwrap();
            by_vertex[low].push(j);
        }
        Ok(Enumerator { vertices, by_vertex, cycles, members })
    }

    /// Calls `visit` with every packing. Each packing is produced once:
    /// the lowest undecided vertex is either left out or covered by one of
    /// the cycles whose lowest member it is.
    fn each(&self, visit: &mut dyn FnMut(&[usize])) {
        let mut used = vec![false; self.vertices.len()];
        let mut chosen = Vec::new();
        self.rec(0, &mut used, &mut chosen, visit);
    }

    fn rec(&self, from: usize, used: &mut [bool], chosen: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        let Some(u) = (from..used.len()).find(|&v| !used[v]) else {
            visit(chosen);
            return;
        };
        used[u] = true;
        self.rec(u + 1, used, chosen, visit);
        for &j in &self.by_vertex[u] {
            if self.members[j].iter().all(|&v| v == u || !used[v]) {
                for &v in &self.members[j] {
                    used[v] = true;
                }
                chosen.push(j);
                self.rec(u + 1, used, chosen, visit);
                chosen.pop();
                for &v in &self.members[j] {
                    if v != u {
                        used[v] = false;
                    }
                }
            }
        }
        used[u] = false;
    }

    fn best_by<K: PartialOrd>(&self, key: impl Fn(&[usize]) -> K) -> Solution<S>
    where
        K: Clone,
    {
        let mut best: Option<(K, S, Vec<Cycle>, Vec<usize>)> = None;
        self.each(&mut |chosen| {
            let k = key(chosen);
            let value = chosen.iter().fold(S::zero(), |acc, &j| acc + self.cycles[j].weight.clone());
            let mut keys: Vec<Cycle> = chosen.iter().map(|&j| self.cycles[j].cycle.clone()).collect();
            keys.sort();
            let better = match &best {
                None => true,
                Some((bk, _, bkeys, _)) => {
                    if k > *bk {
                        true
                    } else if k < *bk {
                        false
                    } else {
                        keys < *bkeys
                    }
                }
            };
            if better {
                best = Some((k, value, keys, chosen.to_vec()));
            }
        });
        let (_, _, _, chosen) = best.expect("the empty packing is always visited");
        Solution::from_cycles(chosen.into_iter().map(|j| self.cycles[j].clone()).collect())
    }
}

/// Value used to compare packings while enumerating. Floats are compared
/// with the same tolerance the solver uses.
#[derive(Clone, PartialEq)]
struct Value<S>(S);

impl<S: Scalar> PartialOrd for Value<S> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        use std::cmp::Ordering::*;
        Some(if self.0.same_value(&other.0) {
            Equal
        } else if self.0 > other.0 {
            Greater
        } else {
            Less
        })
    }
}

/// Maximum-weight packing by exhaustive enumeration, ties broken towards
/// the lexicographically smallest sorted key list. Cycles of non-positive
/// weight are ignored. Fails when more than [`BRUTE_FORCE_PAIR_LIMIT`]
/// pairs are involved.
pub fn brute_force_packing<S: Scalar>(cycles: &[WeightedCycle<S>]) -> Result<Solution<S>> {
    let positive: Vec<WeightedCycle<S>> = cycles.iter().filter(|c| c.weight > S::zero()).cloned().collect();
    let e = Enumerator::new(&positive)?;
    Ok(e.best_by(|chosen| Value(chosen.iter().fold(S::zero(), |acc, &j| acc + positive[j].weight.clone()))))
}

/// Packing with the most transplants by exhaustive enumeration, ties broken
/// towards the lexicographically smallest sorted key list.
pub fn max_cardinality_packing<S: Scalar>(cycles: &[WeightedCycle<S>]) -> Result<Solution<S>> {
    let e = Enumerator::new(cycles)?;
    Ok(e.best_by(|chosen| chosen.iter().map(|&j| cycles[j].cycle.len()).sum::<usize>()))
}
