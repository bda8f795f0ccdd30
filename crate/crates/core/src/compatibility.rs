//! Pairwise compatibility (ABO, donor-specific antibodies, score threshold)
//! and the per-paradigm compatibility graph.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hla::{
    Allele, AlleleToAntigenMap, ArcScores, EpletRegistry, HlaTyping, LociSet, Paradigm, Scorer, ScoringProfile,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairId(pub u32);

impl fmt::Display for PairId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BloodType {
    O,
    A,
    B,
    AB,
}

impl BloodType {
    pub const ALL: [BloodType; 4] = [BloodType::O, BloodType::A, BloodType::B, BloodType::AB];
}

impl FromStr for BloodType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "O" => Ok(BloodType::O),
            "A" => Ok(BloodType::A),
            "B" => Ok(BloodType::B),
            "AB" => Ok(BloodType::AB),
            other => Err(Error::InvalidConfig(format!("unknown blood type {other:?}"))),
        }
    }
}

impl fmt::Display for BloodType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BloodType::O => "O",
            BloodType::A => "A",
            BloodType::B => "B",
            BloodType::AB => "AB",
        };
        f.write_str(s)
    }
}

/// O donates to everyone, AB receives from everyone.
pub fn abo_compatible(donor: BloodType, recipient: BloodType) -> bool {
    use BloodType::*;
    matches!((donor, recipient), (O, _) | (_, AB) | (A, A) | (B, B))
}

/// A recipient antibody against one HLA value; antigen-level when the
/// allele carries no subtype.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DsaEntry(pub Allele);

impl FromStr for DsaEntry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse().map(DsaEntry)
    }
}

/// A recipient with their incompatible donor, the quadruple
/// (recipient, donor, arrival, departure) plus matching attributes.
/// Times are in days.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub id: PairId,
    pub recipient_typing: HlaTyping,
    pub donor_typing: HlaTyping,
    pub recipient_blood: BloodType,
    pub donor_blood: BloodType,
    pub ethnicity: String,
    #[serde(default)]
    pub dsa: Vec<DsaEntry>,
    pub arrival: f64,
    pub departure: f64,
}

impl Pair {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvariantViolation { pair: self.id, reason });
        if !self.arrival.is_finite() || !self.departure.is_finite() {
            return bad("arrival and departure must be finite".into());
        }
        if self.arrival >= self.departure {
            return bad(format!("arrival {} is not before departure {}", self.arrival, self.departure));
        }
        if self.ethnicity.is_empty() {
            return bad("empty ethnicity".into());
        }
        Ok(())
    }
}

/// Lookup tables shared by all scoring.
#[derive(Clone, Debug, Default)]
pub struct Registries {
    pub map: AlleleToAntigenMap,
    pub eplets: Option<EpletRegistry>,
}

impl Registries {
    pub fn new(map: AlleleToAntigenMap, eplets: Option<EpletRegistry>) -> Self {
        Registries { map, eplets }
    }

    pub fn scorer<'a>(&'a self, loci: &'a LociSet) -> Scorer<'a> {
        Scorer::new(loci, &self.map, self.eplets.as_ref())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub paradigm: Paradigm,
    pub loci: LociSet,
    pub min_score: u32,
}

impl ThresholdConfig {
    /// Validated constructor.
    pub fn new(paradigm: Paradigm, loci: LociSet, min_score: u32) -> Result<Self> {
        let cfg = ThresholdConfig { paradigm, loci, min_score };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default thresholds: full set (3, 2, 82), B/DR/DQ (2, 1, -),
    /// DR/DQ (2, 1, 45). Other sets default to 0.
    pub fn default_for(paradigm: Paradigm, loci: LociSet) -> Result<Self> {
        let min_score = match (loci.name().as_str(), paradigm) {
            ("full", Paradigm::Antigen) => 3,
            ("full", Paradigm::Allele) => 2,
            ("full", Paradigm::Eplet) => 82,
            ("bdrdq" | "drdq", Paradigm::Antigen) => 2,
            ("bdrdq" | "drdq", Paradigm::Allele) => 1,
            ("drdq", Paradigm::Eplet) => 45,
            _ => 0,
        };
        Self::new(paradigm, loci, min_score)
    }

    pub fn max_score(&self) -> Result<u32> {
        self.paradigm.max_score(&self.loci)
    }

    pub fn validate(&self) -> Result<()> {
        let z = self.max_score()?;
        if self.min_score > z {
            return Err(Error::InvalidConfig(format!(
                "threshold {} exceeds maximum {} {} score",
                self.min_score, z, self.paradigm
            )));
        }
        Ok(())
    }
}

fn dsa_hits(dsa: &Allele, slot: &Allele, map: &AlleleToAntigenMap) -> Result<bool> {
    if dsa.locus != slot.locus {
        return Ok(false);
    }
    Ok(match (dsa.is_allele_level(), slot.is_allele_level()) {
        // exact allele hit; a different subtype of the same family is fine
        (true, true) => dsa.subtype == slot.subtype,
        (false, false) => dsa.family == slot.family,
        (true, false) => map.antigen_of(dsa)?.family == slot.family,
        (false, true) => dsa.family == map.antigen_of(slot)?.family,
    })
}

/// Conservative antibody screen against the donor's original typing.
pub fn dsa_incompatible(dsa: &[DsaEntry], donor: &HlaTyping, map: &AlleleToAntigenMap) -> Result<bool> {
    for DsaEntry(entry) in dsa {
        if let Some(slots) = donor.get(entry.locus) {
            for slot in slots {
                if dsa_hits(entry, slot, map)? {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

fn paradigm_score(
    donor: &HlaTyping,
    recipient: &HlaTyping,
    cfg: &ThresholdConfig,
    registries: &Registries,
) -> Result<u32> {
    use crate::hla::{allele_match_score, antigen_match_score, eplet_match_score};
    match cfg.paradigm {
        Paradigm::Antigen => antigen_match_score(donor, recipient, &cfg.loci, &registries.map),
        Paradigm::Allele => allele_match_score(donor, recipient, &cfg.loci),
        Paradigm::Eplet => {
            let reg = registries.eplets.as_ref().ok_or(Error::RegistryUnavailable)?;
            eplet_match_score(donor, recipient, reg, &cfg.loci)
        }
    }
}

/// Whether donor `i` can give to recipient `j`. Time overlap is handled by
/// the simulation's active set, not here.
pub fn pair_compatible(i: &Pair, j: &Pair, cfg: &ThresholdConfig, registries: &Registries) -> Result<bool> {
    donor_recipient_compatible(
        &i.donor_typing,
        i.donor_blood,
        &j.recipient_typing,
        j.recipient_blood,
        &j.dsa,
        cfg,
        registries,
    )
}

/// The compatibility test on a bare donor and recipient.
pub fn donor_recipient_compatible(
    donor: &HlaTyping,
    donor_blood: BloodType,
    recipient: &HlaTyping,
    recipient_blood: BloodType,
    dsa: &[DsaEntry],
    cfg: &ThresholdConfig,
    registries: &Registries,
) -> Result<bool> {
    if !abo_compatible(donor_blood, recipient_blood) {
        return Ok(false);
    }
    if dsa_incompatible(dsa, donor, &registries.map)? {
        return Ok(false);
    }
    Ok(paradigm_score(donor, recipient, cfg, registries)? >= cfg.min_score)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arc {
    pub from: PairId,
    pub to: PairId,
    #[serde(flatten)]
    pub scores: ArcScores,
}

/// Directed arcs `i -> j` meaning donor of `i` is compatible with the
/// recipient of `j`, each carrying every computable paradigm score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "GraphData", into = "GraphData")]
pub struct CompatibilityGraph {
    paradigm: Paradigm,
    loci: LociSet,
    min_score: u32,
    nodes: Vec<PairId>,
    arcs: Vec<Arc>,
    index: HashMap<PairId, usize>,
    /// Per node, arc indices sorted by head.
    out: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GraphData {
    paradigm: Paradigm,
    loci: LociSet,
    min_score: u32,
    nodes: Vec<PairId>,
    arcs: Vec<Arc>,
}

impl From<GraphData> for CompatibilityGraph {
    fn from(d: GraphData) -> Self {
        CompatibilityGraph::from_parts(d.paradigm, d.loci, d.min_score, d.nodes, d.arcs)
    }
}

impl From<CompatibilityGraph> for GraphData {
    fn from(g: CompatibilityGraph) -> Self {
        GraphData { paradigm: g.paradigm, loci: g.loci, min_score: g.min_score, nodes: g.nodes, arcs: g.arcs }
    }
}

impl CompatibilityGraph {
    /// Assembles a graph from explicit arcs. Arcs whose endpoints are not
    /// nodes, and self-loops, are dropped.
    pub fn from_parts(
        paradigm: Paradigm,
        loci: LociSet,
        min_score: u32,
        mut nodes: Vec<PairId>,
        mut arcs: Vec<Arc>,
    ) -> Self {
        nodes.sort();
        nodes.dedup();
        let index: HashMap<PairId, usize> = nodes.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        arcs.retain(|a| a.from != a.to && index.contains_key(&a.from) && index.contains_key(&a.to));
        arcs.sort_by_key(|a| (a.from, a.to));
        arcs.dedup_by_key(|a| (a.from, a.to));
        let mut out = vec![Vec::new(); nodes.len()];
        for (k, a) in arcs.iter().enumerate() {
            out[index[&a.from]].push(k);
        }
        CompatibilityGraph { paradigm, loci, min_score, nodes, arcs, index, out }
    }

    pub fn paradigm(&self) -> Paradigm {
        self.paradigm
    }

    pub fn loci(&self) -> &LociSet {
        &self.loci
    }

    pub fn min_score(&self) -> u32 {
        self.min_score
    }

    pub fn nodes(&self) -> &[PairId] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn contains(&self, id: PairId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn successors(&self, id: PairId) -> impl Iterator<Item = &Arc> + '_ {
        self.index.get(&id).into_iter().flat_map(move |&i| self.out[i].iter().map(move |&k| &self.arcs[k]))
    }

    pub fn arc(&self, from: PairId, to: PairId) -> Option<&Arc> {
        let &i = self.index.get(&from)?;
        let out = &self.out[i];
        out.binary_search_by_key(&to, |&k| self.arcs[k].to).ok().map(|pos| &self.arcs[out[pos]])
    }

    pub fn has_arc(&self, from: PairId, to: PairId) -> bool {
        self.arc(from, to).is_some()
    }
}

fn collect_failures<T>(results: Vec<(PairId, Result<T>)>) -> Result<Vec<T>> {
    let mut ok = Vec::with_capacity(results.len());
    let mut failures: Vec<(PairId, Error)> = Vec::new();
    for (id, r) in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => failures.push((id, e)),
        }
    }
    match failures.len() {
        0 => Ok(ok),
        count => {
            let (pair, source) = failures.into_iter().next().unwrap();
            Err(Error::Scoring { pair, count, source: Box::new(source) })
        }
    }
}

/// Builds the compatibility graph over all ordered pairs `i != j`.
pub fn build_graph(pairs: &[Pair], cfg: &ThresholdConfig, registries: &Registries) -> Result<CompatibilityGraph> {
    cfg.validate()?;
    let scorer = registries.scorer(&cfg.loci);
    let profiles: Vec<(PairId, Result<(ScoringProfile, ScoringProfile)>)> = pairs
        .par_iter()
        .map(|p| {
            let r = scorer
                .profile(&p.donor_typing, cfg.paradigm)
                .and_then(|d| Ok((d, scorer.profile(&p.recipient_typing, cfg.paradigm)?)));
            (p.id, r)
        })
        .collect();
    let profiles = collect_failures(profiles)?;

    let rows: Vec<(PairId, Result<Vec<Arc>>)> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, donor_pair)| {
            let row = (|| {
                let mut arcs = Vec::new();
                for (j, recipient_pair) in pairs.iter().enumerate() {
                    if i == j || !abo_compatible(donor_pair.donor_blood, recipient_pair.recipient_blood) {
                        continue;
                    }
                    if dsa_incompatible(&recipient_pair.dsa, &donor_pair.donor_typing, &registries.map)? {
                        continue;
                    }
                    let scores = scorer.scores(&profiles[i].0, &profiles[j].1);
                    let score = scores.get(cfg.paradigm).expect("required paradigm profiled");
                    if score >= cfg.min_score {
                        arcs.push(Arc { from: donor_pair.id, to: recipient_pair.id, scores });
                    }
                }
                Ok(arcs)
            })();
            (donor_pair.id, row)
        })
        .collect();
    let arcs = collect_failures(rows)?.into_iter().flatten().collect();
    let nodes = pairs.iter().map(|p| p.id).collect();
    Ok(CompatibilityGraph::from_parts(cfg.paradigm, cfg.loci.clone(), cfg.min_score, nodes, arcs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hla::Locus;

    fn allele(s: &str) -> Allele {
        s.parse().unwrap()
    }

    fn b07_map() -> AlleleToAntigenMap {
        let mut map = AlleleToAntigenMap::new();
        map.insert(Locus::B, "07:01", "B07");
        map.insert(Locus::B, "07:02", "B07");
        map
    }

    fn donor(slot: &str) -> HlaTyping {
        HlaTyping::new().with(allele(slot), allele(slot)).unwrap()
    }

    #[test]
    fn abo_rules() {
        use BloodType::*;
        assert!(abo_compatible(O, A));
        assert!(!abo_compatible(A, B));
        assert!(abo_compatible(AB, AB));
        assert!(!abo_compatible(AB, O));
        assert!(abo_compatible(B, AB));
        for d in BloodType::ALL {
            assert!(abo_compatible(d, AB));
            assert!(abo_compatible(O, d));
        }
    }

    #[test]
    fn dsa_rule_table() {
        let map = b07_map();
        let cases = [
            ("B07", "B*07:01", true),
            ("B07", "B07", true),
            ("B*07:01", "B07", true),
            ("B*07:01", "B*07:01", true),
            ("B*07:01", "B*07:02", false),
        ];
        for (d, dsa, expected) in cases {
            let got = dsa_incompatible(&[DsaEntry(allele(dsa))], &donor(d), &map).unwrap();
            assert_eq!(got, expected, "donor {d}, DSA {dsa}");
        }
    }

    #[test]
    fn dsa_needs_map_only_across_resolutions() {
        let empty = AlleleToAntigenMap::new();
        assert!(!dsa_incompatible(&[DsaEntry(allele("B*07:01"))], &donor("B*07:02"), &empty).unwrap());
        assert!(dsa_incompatible(&[DsaEntry(allele("B07"))], &donor("B07"), &empty).unwrap());
        assert!(matches!(
            dsa_incompatible(&[DsaEntry(allele("B*07:01"))], &donor("B07"), &empty),
            Err(Error::MissingMapEntry { .. })
        ));
        // other loci never interact
        assert!(!dsa_incompatible(&[DsaEntry(allele("A07"))], &donor("B07"), &empty).unwrap());
    }

    fn pair(id: u32, donor: &str, recipient: &str, dsa: &[&str]) -> Pair {
        Pair {
            id: PairId(id),
            recipient_typing: HlaTyping::parse(recipient).unwrap(),
            donor_typing: HlaTyping::parse(donor).unwrap(),
            recipient_blood: BloodType::AB,
            donor_blood: BloodType::O,
            ethnicity: "X".into(),
            dsa: dsa.iter().map(|d| d.parse().unwrap()).collect(),
            arrival: 0.0,
            departure: 1.0,
        }
    }

    #[test]
    fn pair_compatibility_threshold_and_dsa() {
        let regs = Registries::new(b07_map(), None);
        let loci = LociSet::new([Locus::B]);
        let t = "B07/B08";
        let a = pair(1, t, t, &[]);
        let b = pair(2, t, t, &[]);
        let cfg = ThresholdConfig::new(Paradigm::Antigen, loci.clone(), 2).unwrap();
        assert!(pair_compatible(&a, &b, &cfg, &regs).unwrap());
        let with_dsa = pair(3, t, t, &["B07"]);
        assert!(!pair_compatible(&a, &with_dsa, &cfg, &regs).unwrap());

        // score 2 against threshold 3 on a 2-locus set
        let two_loci = LociSet::new([Locus::A, Locus::B]);
        let c = pair(4, "A01/A02 B07/B08", "A01/A02 B44/B45", &[]);
        let d = pair(5, "A01/A02 B07/B08", "A01/A02 B44/B45", &[]);
        let strict = ThresholdConfig::new(Paradigm::Antigen, two_loci.clone(), 3).unwrap();
        assert!(!pair_compatible(&c, &d, &strict, &regs).unwrap());
        let loose = ThresholdConfig::new(Paradigm::Antigen, two_loci, 2).unwrap();
        assert!(pair_compatible(&c, &d, &loose, &regs).unwrap());
    }

    #[test]
    fn thresholds_default_and_validate() {
        let t = |p, l: &str| ThresholdConfig::default_for(p, l.parse().unwrap()).map(|c| c.min_score);
        assert_eq!(t(Paradigm::Antigen, "full").unwrap(), 3);
        assert_eq!(t(Paradigm::Allele, "full").unwrap(), 2);
        assert_eq!(t(Paradigm::Eplet, "full").unwrap(), 82);
        assert_eq!(t(Paradigm::Antigen, "bdrdq").unwrap(), 2);
        assert_eq!(t(Paradigm::Allele, "bdrdq").unwrap(), 1);
        assert!(matches!(t(Paradigm::Eplet, "bdrdq"), Err(Error::EpletsUndefined(_))));
        assert_eq!(t(Paradigm::Antigen, "drdq").unwrap(), 2);
        assert_eq!(t(Paradigm::Allele, "drdq").unwrap(), 1);
        assert_eq!(t(Paradigm::Eplet, "drdq").unwrap(), 45);
        assert!(ThresholdConfig::new(Paradigm::Antigen, LociSet::full(), 11).is_err());
    }

    #[test]
    fn graph_on_small_inputs() {
        let regs = Registries::new(b07_map(), None);
        let cfg = ThresholdConfig::new(Paradigm::Antigen, LociSet::new([Locus::B]), 0).unwrap();
        let empty = build_graph(&[], &cfg, &regs).unwrap();
        assert_eq!(empty.arc_count(), 0);
        let t = "B07/B08";
        let pairs: Vec<Pair> = (0..3).map(|i| pair(i, t, t, &[])).collect();
        let g = build_graph(&pairs, &cfg, &regs).unwrap();
        assert_eq!(g.arc_count(), 6);
        assert!(g.has_arc(PairId(2), PairId(0)));
        assert!(!g.has_arc(PairId(1), PairId(1)));
        assert_eq!(g.arc(PairId(0), PairId(1)).unwrap().scores.antigen, Some(2));
        assert_eq!(g.successors(PairId(1)).count(), 2);

        let json = serde_json::to_string(&g).unwrap();
        let back: CompatibilityGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn graph_reports_scoring_failures_with_pair_ids() {
        let regs = Registries::new(AlleleToAntigenMap::new(), None);
        let cfg = ThresholdConfig::new(Paradigm::Antigen, LociSet::new([Locus::B]), 0).unwrap();
        let pairs = vec![pair(7, "B07/B08", "B07/B08", &[]), pair(8, "B*07:01/B08", "B07/B08", &[])];
        match build_graph(&pairs, &cfg, &regs) {
            Err(Error::Scoring { pair, count, .. }) => {
                assert_eq!(pair, PairId(8));
                assert_eq!(count, 1);
            }
            other => panic!("{other:?}"),
        }
    }
}
