//! Exact solver for the time-instant problem: a maximum-weight set of
//! vertex-disjoint cycles, ties broken towards the lexicographically
//! smallest sorted list of cycle keys.
//!
//! The cycle conflict structure splits into connected components that are
//! solved independently. Per component, a branch and bound over the packing
//! relaxation finds the optimal value, then a depth-first search over cycles
//! in key order (include before exclude) returns the first packing reaching
//! that value, which is the lexicographically smallest optimum.

use std::collections::{HashMap, HashSet};

use super::lp::{solve_packing_lp, LpSolution};
use super::{Instance, Solution, WeightedCycle};
use crate::compatibility::PairId;
use crate::scalar::Scalar;

const INTEGRAL_TOL: f64 = 1e-7;

/// Solves one time-instant problem. Cycles with non-positive weight are
/// never selected.
pub fn solve_instant_kep<S: Scalar>(instance: &Instance<S>) -> Solution<S> {
    let mut cycles: Vec<&WeightedCycle<S>> = instance.cycles.iter().filter(|c| c.weight > S::zero()).collect();
    cycles.sort_by(|a, b| a.cycle.cmp(&b.cycle));
    cycles.dedup_by(|a, b| a.cycle == b.cycle);

    let mut chosen = Vec::new();
    for component in components(&cycles) {
        let part: Vec<&WeightedCycle<S>> = component.iter().map(|&i| cycles[i]).collect();
        let picked = Component::new(&part).solve();
        chosen.extend(picked.into_iter().map(|i| part[i].clone()));
    }
    Solution::from_cycles(chosen)
}

/// Groups cycle indices by connected component of the shared-vertex relation,
/// keeping key order inside every group.
fn components<S>(cycles: &[&WeightedCycle<S>]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..cycles.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut owner: HashMap<PairId, usize> = HashMap::new();
    for (i, c) in cycles.iter().enumerate() {
        for &v in c.cycle.members() {
            if let Some(&j) = owner.get(&v) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            } else {
                owner.insert(v, i);
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..cycles.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}

/// Odd-set inequality: cycles with two or more members in the odd vertex
/// set `set` can be selected at most `|set| / 2` times in total.
struct Cut {
    rhs: usize,
}

const MAX_CUT_SET: usize = 9;
const CUTS_PER_ROUND: usize = 60;
const ROOT_ROUNDS: usize = 40;
const NODE_ROUNDS: usize = 3;
const MAX_CUTS: usize = 3000;

struct Component<'a, S> {
    cycles: &'a [&'a WeightedCycle<S>],
    members: Vec<Vec<usize>>,
    costs: Vec<f64>,
    vertices: usize,
    cuts: Vec<Cut>,
    cut_sets: HashSet<Vec<usize>>,
    /// Cuts containing each cycle.
    cuts_of: Vec<Vec<usize>>,
}

struct Node {
    covered: Vec<bool>,
    excluded: Vec<bool>,
    fixed: Vec<usize>,
}

impl Node {
    fn available(&self, members: &[usize], j: usize) -> bool {
        !self.excluded[j] && members.iter().all(|&v| !self.covered[v])
    }
}

impl<'a, S: Scalar> Component<'a, S> {
    fn new(cycles: &'a [&'a WeightedCycle<S>]) -> Self {
        let mut index: HashMap<PairId, usize> = HashMap::new();
        let members = cycles
            .iter()
            .map(|c| {
                c.cycle
                    .members()
                    .iter()
                    .map(|v| {
                        let n = index.len();
                        *index.entry(*v).or_insert(n)
                    })
                    .collect()
            })
            .collect();
        let costs = cycles.iter().map(|c| c.weight.as_f64()).collect();
        Component {
            cycles,
            members,
            costs,
            vertices: index.len(),
            cuts: Vec::new(),
            cut_sets: HashSet::new(),
            cuts_of: vec![Vec::new(); cycles.len()],
        }
    }

    fn root(&self) -> Node {
        Node { covered: vec![false; self.vertices], excluded: vec![false; self.cycles.len()], fixed: Vec::new() }
    }

    fn value(&self, picked: &[usize]) -> S {
        picked.iter().fold(S::zero(), |acc, &j| acc + self.cycles[j].weight.clone())
    }

    fn tolerance(&self, v: f64) -> f64 {
        1e-9 * v.abs().max(1.0)
    }

    /// Cycle indices usable at `node` from `start` on, honouring cuts that
    /// the fixed cycles already saturate.
    fn columns(&self, node: &Node, start: usize) -> (Vec<usize>, Vec<usize>) {
        let mut used = vec![0usize; self.cuts.len()];
        for &j in &node.fixed {
            for &c in &self.cuts_of[j] {
                used[c] += 1;
            }
        }
        let cols = (start..self.cycles.len())
            .filter(|&j| node.available(&self.members[j], j))
            .filter(|&j| self.cuts_of[j].iter().all(|&c| used[c] < self.cuts[c].rhs))
            .collect();
        (cols, used)
    }

    /// Relaxation over the cycles available at `node` with index `>= start`.
    /// Returned `x` is indexed by component cycle and `duals` by vertex then
    /// cut.
    fn relax(&self, node: &Node, start: usize) -> LpSolution {
        let (cols, used) = self.columns(node, start);
        let mut vertex_row = vec![usize::MAX; self.vertices];
        let mut cut_row = vec![usize::MAX; self.cuts.len()];
        let mut cut_count = vec![0usize; self.cuts.len()];
        for &j in &cols {
            for &c in &self.cuts_of[j] {
                cut_count[c] += 1;
            }
        }
        let mut rhs = Vec::new();
        let local: Vec<Vec<usize>> = cols
            .iter()
            .map(|&j| {
                let mut rows: Vec<usize> = self.members[j]
                    .iter()
                    .map(|&v| {
                        if vertex_row[v] == usize::MAX {
                            vertex_row[v] = rhs.len();
                            rhs.push(1.0);
                        }
                        vertex_row[v]
                    })
                    .collect();
                for &c in &self.cuts_of[j] {
                    if cut_count[c] >= 2 {
                        if cut_row[c] == usize::MAX {
                            cut_row[c] = rhs.len();
                            rhs.push((self.cuts[c].rhs - used[c]) as f64);
                        }
                        rows.push(cut_row[c]);
                    }
                }
                rows
            })
            .collect();
        let costs: Vec<f64> = cols.iter().map(|&j| self.costs[j]).collect();
        let lp = solve_packing_lp(&rhs, &local, &costs);
        let mut x = vec![0.0; self.cycles.len()];
        for (k, &j) in cols.iter().enumerate() {
            x[j] = lp.x[k];
        }
        let mut duals = vec![0.0; self.vertices + self.cuts.len()];
        for (v, &r) in vertex_row.iter().enumerate() {
            if r != usize::MAX {
                duals[v] = lp.duals[r];
            }
        }
        for (c, &r) in cut_row.iter().enumerate() {
            if r != usize::MAX {
                duals[self.vertices + c] = lp.duals[r];
            }
        }
        LpSolution { x, duals, ..lp }
    }

    /// Relaxation strengthened by rounds of odd-set cut separation.
    fn relax_with_cuts(&mut self, node: &Node, start: usize, rounds: usize) -> LpSolution {
        let mut lp = self.relax(node, start);
        for _ in 0..rounds {
            if lp.is_integral() || self.cuts.len() >= MAX_CUTS || self.separate(&lp.x) == 0 {
                break;
            }
            lp = self.relax(node, start);
        }
        lp
    }

    fn reduced_cost(&self, lp: &LpSolution, j: usize) -> f64 {
        let vertex: f64 = self.members[j].iter().map(|&v| lp.duals[v]).sum();
        let cut: f64 = self.cuts_of[j].iter().map(|&c| lp.duals.get(self.vertices + c).copied().unwrap_or(0.0)).sum();
        self.costs[j] - vertex - cut
    }

    /// Greedy search for violated odd-set inequalities grown from the
    /// fractional cycles of `x`. Returns the number of cuts added.
    fn separate(&mut self, x: &[f64]) -> usize {
        let support: Vec<usize> = (0..self.cycles.len()).filter(|&j| x[j] > 1e-7).collect();
        let mut touching: Vec<Vec<usize>> = vec![Vec::new(); self.vertices];
        for &j in &support {
            for &v in &self.members[j] {
                touching[v].push(j);
            }
        }
        let load = |set: &[usize]| -> f64 {
            let mut seen: Vec<usize> = set.iter().flat_map(|&v| touching[v].iter().copied()).collect();
            seen.sort_unstable();
            seen.dedup();
            seen.iter()
                .filter(|&&j| self.members[j].iter().filter(|v| set.binary_search(v).is_ok()).count() >= 2)
                .map(|&j| x[j])
                .sum()
        };
        let mut found: Vec<(f64, Vec<usize>)> = Vec::new();
        let mut seen_sets: HashSet<Vec<usize>> = HashSet::new();
        for &seed in &support {
            if x[seed] > 1.0 - 1e-7 {
                continue;
            }
            let mut set = self.members[seed].clone();
            set.sort_unstable();
            loop {
                if set.len() % 2 == 1 {
                    let violation = load(&set) - (set.len() / 2) as f64;
                    if violation > 1e-6 && !self.cut_sets.contains(&set) && seen_sets.insert(set.clone()) {
                        found.push((violation, set.clone()));
                    }
                }
                if set.len() >= MAX_CUT_SET {
                    break;
                }
                let mut best: Option<(f64, Vec<usize>)> = None;
                let mut candidates: Vec<usize> = set.iter().flat_map(|&v| touching[v].iter().copied()).collect();
                candidates.sort_unstable();
                candidates.dedup();
                for k in candidates {
                    let mut grown = set.clone();
                    grown.extend(self.members[k].iter().copied());
                    grown.sort_unstable();
                    grown.dedup();
                    if grown.len() == set.len() || grown.len() > MAX_CUT_SET {
                        continue;
                    }
                    let slack = grown.len() as f64 / 2.0 - load(&grown);
                    if best.as_ref().is_none_or(|(s, g)| slack < *s - 1e-12 || (slack <= *s + 1e-12 && grown < *g)) {
                        best = Some((slack, grown));
                    }
                }
                match best {
                    Some((slack, grown)) if slack < 1.0 => set = grown,
                    _ => break,
                }
            }
        }
        found.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        found.truncate(CUTS_PER_ROUND);
        let added = found.len();
        for (_, set) in found {
            self.add_cut(set);
        }
        added
    }

    fn add_cut(&mut self, set: Vec<usize>) {
        let id = self.cuts.len();
        for j in 0..self.cycles.len() {
            if self.members[j].iter().filter(|v| set.binary_search(v).is_ok()).count() >= 2 {
                self.cuts_of[j].push(id);
            }
        }
        self.cuts.push(Cut { rhs: set.len() / 2 });
        self.cut_sets.insert(set);
    }

    fn solve(&mut self) -> Vec<usize> {
        if self.cycles.len() == 1 {
            return vec![0];
        }
        let mut best = self.greedy(&self.root(), &vec![0.0; self.cycles.len()]);
        let mut best_value = self.value(&best);
        let mut root = self.root();
        let dived = self.dive(&root);
        let dived_value = self.value(&dived);
        if dived_value.clearly_greater(&best_value) {
            best = dived;
            best_value = dived_value;
        }
        self.relax_with_cuts(&root, 0, ROOT_ROUNDS);
        self.branch(&mut root, &mut best, &mut best_value);
        let target = best_value.as_f64();

        let mut node = self.root();
        let mut value = S::zero();
        if self.lex_search(&mut node, 0, &mut value, &best_value, target) {
            node.fixed
        } else {
            best.sort();
            best
        }
    }

    /// Fixes the most used fractional cycle and resolves until the
    /// relaxation turns integral.
    fn dive(&self, node: &Node) -> Vec<usize> {
        let mut node =
            Node { covered: node.covered.clone(), excluded: node.excluded.clone(), fixed: node.fixed.clone() };
        loop {
            let lp = self.relax(&node, 0);
            let pick = (0..self.cycles.len())
                .filter(|&j| lp.x[j] > INTEGRAL_TOL && lp.x[j] < 1.0 - INTEGRAL_TOL)
                .max_by(|&a, &b| lp.x[a].total_cmp(&lp.x[b]).then(b.cmp(&a)));
            match pick {
                Some(j) => {
                    for k in 0..self.cycles.len() {
                        if lp.x[k] > 1.0 - INTEGRAL_TOL && node.available(&self.members[k], k) {
                            self.take(&mut node, k);
                        }
                    }
                    if node.available(&self.members[j], j) {
                        self.take(&mut node, j);
                    }
                }
                None => return self.greedy(&node, &lp.x),
            }
        }
    }

    /// Completes `node` greedily, preferring cycles the relaxation uses.
    fn greedy(&self, node: &Node, x: &[f64]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.cycles.len()).filter(|&j| node.available(&self.members[j], j)).collect();
        order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(self.costs[b].total_cmp(&self.costs[a])).then(a.cmp(&b)));
        let mut covered = node.covered.clone();
        let mut picked = node.fixed.clone();
        for j in order {
            if self.members[j].iter().all(|&v| !covered[v]) {
                for &v in &self.members[j] {
                    covered[v] = true;
                }
                picked.push(j);
            }
        }
        picked
    }

    fn take(&self, node: &mut Node, j: usize) {
        for &v in &self.members[j] {
            node.covered[v] = true;
        }
        node.fixed.push(j);
    }

    fn untake(&self, node: &mut Node, j: usize) {
        for &v in &self.members[j] {
            node.covered[v] = false;
        }
        node.fixed.pop();
    }

    /// Value-only branch and bound; improves `best` in place.
    fn branch(&mut self, node: &mut Node, best: &mut Vec<usize>, best_value: &mut S) {
        let fixed = self.value(&node.fixed).as_f64();
        let incumbent = best_value.as_f64();
        let lp = self.relax_with_cuts(node, 0, NODE_ROUNDS);
        if fixed + lp.bound <= incumbent + self.tolerance(incumbent) {
            return;
        }
        let candidate = self.greedy(node, &lp.x);
        let candidate_value = self.value(&candidate);
        if candidate_value.clearly_greater(best_value) {
            *best = candidate;
            *best_value = candidate_value;
        }
        if lp.is_integral() {
            return;
        }
        let incumbent = best_value.as_f64();
        let saved = node.excluded.clone();
        for j in 0..self.cycles.len() {
            if lp.x[j] < INTEGRAL_TOL
                && node.available(&self.members[j], j)
                && fixed + lp.objective + self.reduced_cost(&lp, j) <= incumbent + self.tolerance(incumbent)
            {
                node.excluded[j] = true;
            }
        }
        let pick = (0..self.cycles.len())
            .filter(|&j| lp.x[j] > INTEGRAL_TOL && lp.x[j] < 1.0 - INTEGRAL_TOL)
            .min_by(|&a, &b| (lp.x[a] - 0.5).abs().total_cmp(&(lp.x[b] - 0.5).abs()).then(a.cmp(&b)));
        if let Some(j) = pick {
            self.take(node, j);
            self.branch(node, best, best_value);
            self.untake(node, j);
            node.excluded[j] = true;
            self.branch(node, best, best_value);
        }
        node.excluded = saved;
    }

    /// Depth-first search over cycles in key order, including before
    /// excluding; stops at the first packing worth `target_value`.
    fn lex_search(&mut self, node: &mut Node, mut start: usize, value: &mut S, target_value: &S, target: f64) -> bool {
        let saved = node.excluded.clone();
        let fixed = value.as_f64();
        let tol = self.tolerance(target);
        let mut lp = self.relax_with_cuts(node, start, NODE_ROUNDS);
        let found = loop {
            if fixed + lp.bound < target - tol {
                break false;
            }
            for j in start..self.cycles.len() {
                if lp.x[j] < INTEGRAL_TOL
                    && node.available(&self.members[j], j)
                    && fixed + lp.objective + self.reduced_cost(&lp, j) < target - tol
                {
                    node.excluded[j] = true;
                }
            }
            let (cols, _) = self.columns(node, start);
            let Some(&i) = cols.first() else {
                break value.same_value(target_value) || value.clearly_greater(target_value);
            };
            self.take(node, i);
            let before = value.clone();
            *value = value.clone() + self.cycles[i].weight.clone();
            if self.lex_search(node, i + 1, value, target_value, target) {
                return true;
            }
            *value = before;
            self.untake(node, i);
            node.excluded[i] = true;
            start = i + 1;
            if lp.x[i] > INTEGRAL_TOL {
                lp = self.relax_with_cuts(node, start, NODE_ROUNDS);
            }
        };
        node.excluded = saved;
        found
    }
}
