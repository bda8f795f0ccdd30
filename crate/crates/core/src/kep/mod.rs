//! Time-instant matching: cycle enumeration, cycle weights and an exact
//! weighted set-packing solver over cycles.

mod brute;
mod enumerate;
mod lp;
mod solver;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::compatibility::{CompatibilityGraph, PairId};
use crate::error::{Error, Result};
use crate::hla::{LociSet, Paradigm};
use crate::scalar::Scalar;

pub use brute::{brute_force_packing, max_cardinality_packing, BRUTE_FORCE_PAIR_LIMIT};
pub use enumerate::enumerate_cycles;
pub use lp::{solve_packing_lp, LpSolution};
pub use solver::solve_instant_kep;

/// Subpopulation label of each pair's recipient.
pub type Subpopulations = HashMap<PairId, String>;

/// A directed exchange cycle in canonical rotation (smallest id first).
/// Ordering is lexicographic on the member list.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cycle(Vec<PairId>);

impl Cycle {
    /// Rotates `members` so the smallest id comes first. Members must be
    /// distinct and non-empty.
    pub fn new(mut members: Vec<PairId>) -> Self {
        assert!(!members.is_empty(), "empty cycle");
        let start = members.iter().enumerate().min_by_key(|(_, id)| **id).map(|(i, _)| i).unwrap();
        members.rotate_left(start);
        Cycle(members)
    }

    pub fn members(&self) -> &[PairId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Donor-to-recipient transplants `(from, to)`, including the closing arc.
    pub fn transplants(&self) -> impl Iterator<Item = (PairId, PairId)> + '_ {
        let n = self.0.len();
        (0..n).map(move |k| (self.0[k], self.0[(k + 1) % n]))
    }

    pub fn contains(&self, id: PairId) -> bool {
        self.0.contains(&id)
    }

    pub fn is_valid_in(&self, graph: &CompatibilityGraph) -> bool {
        let mut seen = self.0.clone();
        seen.sort();
        seen.dedup();
        seen.len() == self.0.len() && self.transplants().all(|(u, v)| graph.has_arc(u, v))
    }
}

impl fmt::Display for Cycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.0.iter().map(|id| id.to_string()).collect();
        write!(f, "({})", ids.join(" "))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedCycle<S> {
    pub cycle: Cycle,
    pub weight: S,
}

/// Subpopulation weights `v_s`. Labels absent from the map take the
/// fallback, if any.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquityWeights {
    #[serde(default)]
    pub default: Option<f64>,
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
}

impl Default for EquityWeights {
    fn default() -> Self {
        Self::unit()
    }
}

impl EquityWeights {
    /// Every subpopulation weighted 1.
    pub fn unit() -> Self {
        EquityWeights { default: Some(1.0), weights: BTreeMap::new() }
    }

    /// Explicit weights only; unknown labels are an error.
    pub fn explicit(weights: BTreeMap<String, f64>) -> Self {
        EquityWeights { default: None, weights }
    }

    pub fn get(&self, group: &str) -> Result<f64> {
        self.weights.get(group).copied().or(self.default).ok_or_else(|| Error::MissingWeight(group.to_string()))
    }

    pub fn set(&mut self, group: &str, weight: f64) {
        self.weights.insert(group.to_string(), weight);
    }

    pub fn scaled(&self, factor: f64) -> Self {
        EquityWeights {
            default: self.default.map(|d| d * factor),
            weights: self.weights.iter().map(|(k, v)| (k.clone(), v * factor)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (group, w) in
            self.weights.iter().map(|(k, v)| (k.as_str(), *v)).chain(self.default.map(|d| ("<default>", d)))
        {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig(format!("equity weight of {group} must be positive, got {w}")));
            }
        }
        Ok(())
    }
}

/// Objective of a time-instant problem: paradigm scored, its maximum `z`,
/// the population scale `m`, and the equity weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub paradigm: Paradigm,
    pub z: u32,
    pub m: u32,
    #[serde(default)]
    pub weights: EquityWeights,
}

impl ObjectiveConfig {
    pub fn new(paradigm: Paradigm, loci: &LociSet, m: u32) -> Result<Self> {
        let cfg = ObjectiveConfig { paradigm, z: paradigm.max_score(loci)?, m, weights: EquityWeights::unit() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_weights(mut self, weights: EquityWeights) -> Self {
        self.weights = weights;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::InvalidConfig("population scale m must be at least 1".into()));
        }
        if self.z < 1 {
            return Err(Error::InvalidConfig("maximum score z must be at least 1".into()));
        }
        self.weights.validate()
    }
}

fn arc_score(graph: &CompatibilityGraph, from: PairId, to: PairId, paradigm: Paradigm) -> Result<u32> {
    let arc = graph
        .arc(from, to)
        .ok_or_else(|| Error::InvalidConfig(format!("no arc {from} -> {to} in compatibility graph")))?;
    arc.scores.get(paradigm).ok_or_else(|| match paradigm {
        Paradigm::Eplet => Error::EpletsUndefined(graph.loci().clone()),
        _ => Error::ResolutionTooLow(graph.loci().loci()[0]),
    })
}

/// Normalized compatibility of a cycle: sum of arc scores over `z`.
pub fn cycle_hla<S: Scalar>(cycle: &Cycle, graph: &CompatibilityGraph, cfg: &ObjectiveConfig) -> Result<S> {
    let mut total = S::zero();
    for (u, v) in cycle.transplants() {
        total = total + S::from_ratio(arc_score(graph, u, v, cfg.paradigm)? as i64, cfg.z as i64);
    }
    Ok(total)
}

/// Equity-weighted cycle value: every transplant into recipient `r`
/// contributes `v(s(r)) * (1 + score / (m z))`. With unit weights this
/// equals `|C| + HLA(C)/m`.
pub fn cycle_weight<S: Scalar>(
    cycle: &Cycle,
    graph: &CompatibilityGraph,
    groups: &Subpopulations,
    cfg: &ObjectiveConfig,
) -> Result<S> {
    let mz = cfg.m as i64 * cfg.z as i64;
    let mut total = S::zero();
    for (u, v) in cycle.transplants() {
        let group = groups.get(&v).ok_or_else(|| Error::MissingWeight(format!("<no subpopulation for pair {v}>")))?;
        let weight = S::from_decimal(cfg.weights.get(group)?);
        let score = arc_score(graph, u, v, cfg.paradigm)? as i64;
        total = total + weight * (S::one() + S::from_ratio(score, mz));
    }
    Ok(total)
}

/// One time-instant problem: the active pairs and their weighted cycles.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance<S> {
    pub active: Vec<PairId>,
    pub cycles: Vec<WeightedCycle<S>>,
}

impl<S: Scalar> Instance<S> {
    /// Enumerates cycles among `active` and weighs them.
    pub fn build(
        graph: &CompatibilityGraph,
        active: &[PairId],
        groups: &Subpopulations,
        cfg: &ObjectiveConfig,
        max_len: usize,
    ) -> Result<Self> {
        let cycles = enumerate_cycles(graph, active, max_len)
            .into_iter()
            .map(|cycle| Ok(WeightedCycle { weight: cycle_weight(&cycle, graph, groups, cfg)?, cycle }))
            .collect::<Result<Vec<_>>>()?;
        let mut active = active.to_vec();
        active.sort();
        Ok(Instance { active, cycles })
    }

    pub fn dump(&self) -> InstanceDump {
        InstanceDump {
            active: self.active.clone(),
            cycles: self
                .cycles
                .iter()
                .map(|c| CycleDump { members: c.cycle.clone(), weight: c.weight.to_string() })
                .collect(),
        }
    }

    pub fn restore(dump: &InstanceDump) -> Result<Self> {
        let cycles = dump
            .cycles
            .iter()
            .map(|c| {
                let weight = c
                    .weight
                    .parse::<S>()
                    .map_err(|_| Error::InvalidConfig(format!("bad cycle weight {:?}", c.weight)))?;
                Ok(WeightedCycle { cycle: Cycle::new(c.members.members().to_vec()), weight })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Instance { active: dump.active.clone(), cycles })
    }
}

/// JSON form of an [`Instance`]; weights are written as decimal or
/// `num/den` strings so rationals survive exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceDump {
    pub active: Vec<PairId>,
    pub cycles: Vec<CycleDump>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleDump {
    pub members: Cycle,
    pub weight: String,
}

/// Selected vertex-disjoint cycles, sorted by canonical key.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution<S> {
    pub cycles: Vec<WeightedCycle<S>>,
    pub value: S,
    /// Time of the match run that produced the solution, when known.
    pub time: Option<f64>,
}

impl<S: Scalar> Solution<S> {
    pub fn empty() -> Self {
        Solution { cycles: Vec::new(), value: S::zero(), time: None }
    }

    pub(crate) fn from_cycles(mut cycles: Vec<WeightedCycle<S>>) -> Self {
        cycles.sort_by(|a, b| a.cycle.cmp(&b.cycle));
        let value = cycles.iter().fold(S::zero(), |acc, c| acc + c.weight.clone());
        Solution { cycles, value, time: None }
    }

    /// Number of transplants.
    pub fn transplants(&self) -> usize {
        self.cycles.iter().map(|c| c.cycle.len()).sum()
    }

    pub fn keys(&self) -> Vec<&Cycle> {
        self.cycles.iter().map(|c| &c.cycle).collect()
    }

    pub fn is_vertex_disjoint(&self) -> bool {
        let mut ids: Vec<PairId> = self.cycles.iter().flat_map(|c| c.cycle.members().iter().copied()).collect();
        let n = ids.len();
        ids.sort();
        ids.dedup();
        ids.len() == n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compatibility::Arc;
    use crate::hla::ArcScores;
    use crate::Exact;

    fn graph(arcs: &[(u32, u32, u32)], nodes: u32) -> CompatibilityGraph {
        CompatibilityGraph::from_parts(
            Paradigm::Antigen,
            LociSet::full(),
            0,
            (0..nodes).map(PairId).collect(),
            arcs.iter()
                .map(|&(f, t, s)| Arc {
                    from: PairId(f),
                    to: PairId(t),
                    scores: ArcScores { antigen: Some(s), allele: None, eplet: None },
                })
                .collect(),
        )
    }

    fn cycle(ids: &[u32]) -> Cycle {
        Cycle::new(ids.iter().map(|&i| PairId(i)).collect())
    }

    fn groups(n: u32, label: &str) -> Subpopulations {
        (0..n).map(|i| (PairId(i), label.to_string())).collect()
    }

    #[test]
    fn canonical_rotation() {
        assert_eq!(cycle(&[5, 2, 9]).members(), &[PairId(2), PairId(9), PairId(5)]);
        assert_eq!(cycle(&[2, 9, 5]), cycle(&[9, 5, 2]));
        assert_ne!(cycle(&[2, 9, 5]), cycle(&[2, 5, 9]));
        assert!(cycle(&[0, 1]) < cycle(&[1, 2, 0]));
        assert!(cycle(&[0, 2]) > cycle(&[0, 1, 2]));
    }

    #[test]
    fn cycle_hla_examples() {
        let cfg = ObjectiveConfig::new(Paradigm::Antigen, &LociSet::full(), 990).unwrap();
        let g = graph(&[(0, 1, 10), (1, 0, 10)], 2);
        assert_eq!(cycle_hla::<Exact>(&cycle(&[0, 1]), &g, &cfg).unwrap(), Exact::from_integer(2));

        // scores 4, 6, 5 over z = 10
        let g = graph(&[(0, 1, 4), (1, 2, 6), (2, 0, 5)], 3);
        assert_eq!(cycle_hla::<Exact>(&cycle(&[0, 1, 2]), &g, &cfg).unwrap(), Exact::new(3, 2));
        assert_eq!(cycle_hla::<f64>(&cycle(&[0, 1, 2]), &g, &cfg).unwrap(), 1.5);

        let g = graph(&[(0, 1, 0), (1, 0, 0)], 2);
        assert_eq!(cycle_hla::<Exact>(&cycle(&[0, 1]), &g, &cfg).unwrap(), Exact::from_integer(0));
    }

    #[test]
    fn eplet_hla_on_split_loci_is_undefined() {
        let g = CompatibilityGraph::from_parts(
            Paradigm::Antigen,
            LociSet::b_dr_dq(),
            0,
            vec![PairId(0), PairId(1)],
            vec![
                Arc {
                    from: PairId(0),
                    to: PairId(1),
                    scores: ArcScores { antigen: Some(3), allele: None, eplet: None },
                },
                Arc {
                    from: PairId(1),
                    to: PairId(0),
                    scores: ArcScores { antigen: Some(3), allele: None, eplet: None },
                },
            ],
        );
        let cfg = ObjectiveConfig { paradigm: Paradigm::Eplet, z: 138, m: 10, weights: EquityWeights::unit() };
        assert!(matches!(cycle_hla::<f64>(&cycle(&[0, 1]), &g, &cfg), Err(Error::EpletsUndefined(_))));
    }

    #[test]
    fn unit_weight_equals_normalized_objective_numerator() {
        let cfg = ObjectiveConfig::new(Paradigm::Antigen, &LociSet::full(), 990).unwrap();
        let g = graph(&[(0, 1, 4), (1, 2, 6), (2, 0, 5)], 3);
        let c = cycle(&[0, 1, 2]);
        let w: Exact = cycle_weight(&c, &g, &groups(3, "x"), &cfg).unwrap();
        let hla: Exact = cycle_hla(&c, &g, &cfg).unwrap();
        assert_eq!(w, Exact::from_integer(3) + hla / Exact::from_integer(990));
        assert_eq!(w, Exact::new(3 * 9900 + 15, 9900));
    }

    #[test]
    fn equity_weight_raises_cycle_value() {
        let base = ObjectiveConfig::new(Paradigm::Antigen, &LociSet::full(), 990).unwrap();
        let g = graph(&[(0, 1, 7), (1, 0, 2)], 2);
        let mut groups = groups(2, "a");
        groups.insert(PairId(1), "b".into());
        let c = cycle(&[0, 1]);
        let unit: Exact = cycle_weight(&c, &g, &groups, &base).unwrap();
        let mut w = EquityWeights::unit();
        w.set("b", 1.003);
        let raised: Exact = cycle_weight(&c, &g, &groups, &base.clone().with_weights(w)).unwrap();
        assert!(raised > unit);
        // b's recipient receives on arc 0 -> 1 with score 7
        let expected = Exact::new(1003, 1000) * (Exact::from_integer(1) + Exact::new(7, 9900))
            + (Exact::from_integer(1) + Exact::new(2, 9900));
        assert_eq!(raised, expected);

        let strict = base.with_weights(EquityWeights::explicit(BTreeMap::from([("a".to_string(), 1.0)])));
        assert!(matches!(cycle_weight::<f64>(&c, &g, &groups, &strict), Err(Error::MissingWeight(s)) if s == "b"));
    }

    #[test]
    fn objective_validation() {
        let mut cfg = ObjectiveConfig::new(Paradigm::Antigen, &LociSet::full(), 10).unwrap();
        assert_eq!(cfg.z, 10);
        cfg.weights.set("x", 0.0);
        assert!(cfg.validate().is_err());
        assert!(ObjectiveConfig::new(Paradigm::Eplet, &LociSet::b_dr_dq(), 10).is_err());
        assert!(ObjectiveConfig::new(Paradigm::Antigen, &LociSet::full(), 0).is_err());
    }

    #[test]
    fn instance_dump_round_trip() {
        let cfg = ObjectiveConfig::new(Paradigm::Antigen, &LociSet::full(), 7).unwrap();
        let g = graph(&[(0, 1, 4), (1, 2, 6), (2, 0, 5), (1, 0, 3)], 3);
        let active = [PairId(2), PairId(0), PairId(1)];
        let inst: Instance<Exact> = Instance::build(&g, &active, &groups(3, "x"), &cfg, 3).unwrap();
        assert_eq!(inst.cycles.len(), 2);
        let json = serde_json::to_string(&inst.dump()).unwrap();
        let back: InstanceDump = serde_json::from_str(&json).unwrap();
        assert_eq!(Instance::<Exact>::restore(&back).unwrap(), inst);
    }
}
