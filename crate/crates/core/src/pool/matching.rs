//! Maximum-cardinality bipartite matching (Hopcroft-Karp).

use std::collections::VecDeque;

const FREE: usize = usize::MAX;

/// Maximum matching of a bipartite graph with `left.len()` left vertices and
/// `right` right vertices; `left[u]` lists the right neighbours of `u`.
/// Returns `mate[u]` for every left vertex.
pub fn hopcroft_karp(left: &[Vec<usize>], right: usize) -> Vec<Option<usize>> {
    let n = left.len();
    let mut mate_l = vec![FREE; n];
    let mut mate_r = vec![FREE; right];
    let mut dist = vec![0usize; n];
    loop {
        // layer free left vertices by alternating-path distance
        let mut queue = VecDeque::new();
        for u in 0..n {
            if mate_l[u] == FREE {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &left[u] {
                match mate_r[v] {
                    FREE => found = true,
                    w if dist[w] == usize::MAX => {
                        dist[w] = dist[u] + 1;
                        queue.push_back(w);
                    }
                    _ => {}
                }
            }
        }
        if !found {
            break;
        }
        let mut next = vec![0usize; n];
        for u in 0..n {
            if mate_l[u] == FREE {
                augment(u, left, &mut mate_l, &mut mate_r, &mut dist, &mut next);
            }
        }
    }
    mate_l.into_iter().map(|v| (v != FREE).then_some(v)).collect()
}

/// Iterative depth-first augmentation along the layered graph.
fn augment(
    root: usize,
    left: &[Vec<usize>],
    mate_l: &mut [usize],
    mate_r: &mut [usize],
    dist: &mut [usize],
    next: &mut [usize],
) -> bool {
    let mut stack = vec![root];
    while let Some(&u) = stack.last() {
        if next[u] == left[u].len() {
            dist[u] = usize::MAX;
            stack.pop();
            continue;
        }
        let v = left[u][next[u]];
        let w = mate_r[v];
        if w == FREE {
            // flip the path held on the stack
            let mut v = v;
            while let Some(u) = stack.pop() {
                let prev = mate_l[u];
                mate_l[u] = v;
                mate_r[v] = u;
                v = prev;
            }
            return true;
        }
        if dist[w] != usize::MAX && dist[w] == dist[u] + 1 {
            stack.push(w);
        } else {
            next[u] += 1;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_empty() {
        let g = vec![vec![0, 1], vec![0], vec![2]];
        let m = hopcroft_karp(&g, 3);
        assert_eq!(m, vec![Some(1), Some(0), Some(2)]);
        assert_eq!(hopcroft_karp(&[vec![], vec![]], 2), vec![None, None]);
    }

    #[test]
    fn needs_augmenting_path() {
        // greedy 0->0 blocks 1; augmenting path reassigns
        let g = vec![vec![0, 1], vec![0]];
        let m = hopcroft_karp(&g, 2);
        assert_eq!(m.iter().flatten().count(), 2);
    }
}
