use std::collections::HashSet;

use rayon::prelude::*;

use super::Cycle;
use crate::compatibility::{CompatibilityGraph, PairId};

/// All simple directed cycles of length 2..=`max_len` (at most 3) in the
/// subgraph induced by `active`, each once in canonical rotation, sorted.
pub fn enumerate_cycles(graph: &CompatibilityGraph, active: &[PairId], max_len: usize) -> Vec<Cycle> {
    assert!((2..=3).contains(&max_len), "cycle length cap must be 2 or 3");
    let active_set: HashSet<PairId> = active.iter().copied().filter(|id| graph.contains(*id)).collect();
    let mut starts: Vec<PairId> = active_set.iter().copied().collect();
    starts.sort();

    let mut cycles: Vec<Cycle> = starts
        .par_iter()
        .flat_map_iter(|&u| {
            let mut found = Vec::new();
            for a in graph.successors(u) {
                let v = a.to;
                if v <= u || !active_set.contains(&v) {
                    continue;
                }
                if graph.has_arc(v, u) {
                    found.push(Cycle(vec![u, v]));
                }
                if max_len == 3 {
                    for b in graph.successors(v) {
                        let w = b.to;
                        if w > u && w != v && active_set.contains(&w) && graph.has_arc(w, u) {
                            found.push(Cycle(vec![u, v, w]));
                        }
                    }
                }
            }
            found
        })
        .collect();
    cycles.sort();
    cycles
}
