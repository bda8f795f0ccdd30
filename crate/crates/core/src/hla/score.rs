//! Match scores: maximum score minus mismatch load, per paradigm.
//!
//! Slot rule: each of the two donor slots at a locus is checked against the
//! recipient's slots at that locus taken as a set, so an unmatched
//! homozygous donor locus counts two mismatches.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Allele, AlleleToAntigenMap, ClassGroup, EpletRegistry, EpletSet, HlaTyping, LociSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    Antigen,
    Allele,
    Eplet,
}

impl Paradigm {
    pub const ALL: [Paradigm; 3] = [Paradigm::Antigen, Paradigm::Allele, Paradigm::Eplet];

    pub fn name(self) -> &'static str {
        match self {
            Paradigm::Antigen => "antigen",
            Paradigm::Allele => "allele",
            Paradigm::Eplet => "eplet",
        }
    }

    /// Maximum attainable score `Z` on `loci`.
    pub fn max_score(self, loci: &LociSet) -> Result<u32> {
        match self {
            Paradigm::Antigen => Ok(loci.z_antigen()),
            Paradigm::Allele => Ok(loci.z_allele()),
            Paradigm::Eplet => loci.z_eplet(),
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Paradigm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "antigen" => Ok(Paradigm::Antigen),
            "allele" => Ok(Paradigm::Allele),
            "eplet" => Ok(Paradigm::Eplet),
            other => Err(Error::InvalidConfig(format!("unknown paradigm {other:?}"))),
        }
    }
}

/// Raw match scores of one donor/recipient combination. A paradigm is
/// `None` when the data cannot support it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArcScores {
    pub antigen: Option<u32>,
    pub allele: Option<u32>,
    pub eplet: Option<u32>,
}

impl ArcScores {
    pub fn get(&self, paradigm: Paradigm) -> Option<u32> {
        match paradigm {
            Paradigm::Antigen => self.antigen,
            Paradigm::Allele => self.allele,
            Paradigm::Eplet => self.eplet,
        }
    }
}

/// Reduces every allele-level slot to its antigen family.
pub fn derive_antigen_typing(typing: &HlaTyping, map: &AlleleToAntigenMap) -> Result<HlaTyping> {
    let mut out = HlaTyping::new();
    for (_, [a, b]) in typing.slots() {
        out.set(map.antigen_of(a)?, map.antigen_of(b)?)?;
    }
    Ok(out)
}

fn slot_mismatches<T: PartialEq>(donor: [&T; 2], recipient: [&T; 2]) -> u32 {
    donor.iter().filter(|d| !recipient.contains(d)).count() as u32
}

pub fn antigen_match_score(
    donor: &HlaTyping,
    recipient: &HlaTyping,
    loci: &LociSet,
    map: &AlleleToAntigenMap,
) -> Result<u32> {
    let mut mismatches = 0;
    for &locus in loci.loci() {
        let [d0, d1] = donor.require(locus)?;
        let [r0, r1] = recipient.require(locus)?;
        let d = [map.antigen_of(d0)?, map.antigen_of(d1)?];
        let r = [map.antigen_of(r0)?, map.antigen_of(r1)?];
        mismatches += slot_mismatches([&d[0].family, &d[1].family], [&r[0].family, &r[1].family]);
    }
    Ok(loci.z_antigen() - mismatches)
}

fn require_allele_level(typing: &HlaTyping, locus: super::Locus) -> Result<&[Allele; 2]> {
    let slots = typing.require(locus)?;
    if slots.iter().all(Allele::is_allele_level) {
        Ok(slots)
    } else {
        Err(Error::ResolutionTooLow(locus))
    }
}

pub fn allele_match_score(donor: &HlaTyping, recipient: &HlaTyping, loci: &LociSet) -> Result<u32> {
    let mut mismatches = 0;
    for &locus in loci.loci() {
        let [d0, d1] = require_allele_level(donor, locus)?;
        let [r0, r1] = require_allele_level(recipient, locus)?;
        mismatches += slot_mismatches([d0, d1], [r0, r1]);
    }
    Ok(loci.z_allele() - mismatches)
}

/// Union of registry eplets over all slots of the loci of `group` that are
/// in `loci`.
pub fn eplet_set(typing: &HlaTyping, registry: &EpletRegistry, group: ClassGroup, loci: &LociSet) -> Result<EpletSet> {
    let mut set = EpletSet::default();
    for &locus in group.loci().iter().filter(|l| loci.contains(**l)) {
        for allele in require_allele_level(typing, locus)? {
            set = set.union(registry.eplets_of(allele)?);
        }
    }
    Ok(set)
}

pub fn eplet_match_score(
    donor: &HlaTyping,
    recipient: &HlaTyping,
    registry: &EpletRegistry,
    loci: &LociSet,
) -> Result<u32> {
    let z = loci.z_eplet()?;
    let mut load = 0usize;
    for group in loci.groups() {
        let d = eplet_set(donor, registry, group, loci)?;
        let r = eplet_set(recipient, registry, group, loci)?;
        load += d.difference_len(&r);
    }
    Ok(z.saturating_sub(load as u32))
}

/// Per-person data precomputed once so that scoring an arc is a handful of
/// comparisons.
#[derive(Clone, Debug, Default)]
pub struct ScoringProfile {
    antigen: Option<Vec<[String; 2]>>,
    allele: Option<Vec<[Allele; 2]>>,
    eplets: Option<Vec<EpletSet>>,
}

impl ScoringProfile {
    pub fn supports(&self, paradigm: Paradigm) -> bool {
        match paradigm {
            Paradigm::Antigen => self.antigen.is_some(),
            Paradigm::Allele => self.allele.is_some(),
            Paradigm::Eplet => self.eplets.is_some(),
        }
    }
}

/// Scores arcs on one loci set with the given tables.
#[derive(Clone, Copy, Debug)]
pub struct Scorer<'a> {
    pub loci: &'a LociSet,
    pub map: &'a AlleleToAntigenMap,
    pub registry: Option<&'a EpletRegistry>,
}

impl<'a> Scorer<'a> {
    pub fn new(loci: &'a LociSet, map: &'a AlleleToAntigenMap, registry: Option<&'a EpletRegistry>) -> Self {
        Scorer { loci, map, registry }
    }

    /// Builds a profile. Failure to support `required` is an error; other
    /// paradigms are silently left unsupported.
    pub fn profile(&self, typing: &HlaTyping, required: Paradigm) -> Result<ScoringProfile> {
        for &locus in self.loci.loci() {
            typing.require(locus)?;
        }
        let antigen = self
            .loci
            .loci()
            .iter()
            .map(|&l| {
                let [a, b] = typing.require(l)?;
                Ok([self.map.antigen_of(a)?.family, self.map.antigen_of(b)?.family])
            })
            .collect::<Result<Vec<_>>>();
        let allele =
            self.loci.loci().iter().map(|&l| require_allele_level(typing, l).cloned()).collect::<Result<Vec<_>>>();
        let eplets = match (self.registry, self.loci.supports_eplets()) {
            (Some(reg), true) => {
                self.loci.groups().into_iter().map(|g| eplet_set(typing, reg, g, self.loci)).collect::<Result<Vec<_>>>()
            }
            (None, true) => Err(Error::RegistryUnavailable),
            (_, false) => Err(Error::EpletsUndefined(self.loci.clone())),
        };
        fn pick<T>(paradigm: Paradigm, required: Paradigm, r: Result<T>) -> Result<Option<T>> {
            match r {
                Ok(v) => Ok(Some(v)),
                Err(e) if paradigm == required => Err(e),
                Err(_) => Ok(None),
            }
        }
        Ok(ScoringProfile {
            antigen: pick(Paradigm::Antigen, required, antigen)?,
            allele: pick(Paradigm::Allele, required, allele)?,
            eplets: pick(Paradigm::Eplet, required, eplets)?,
        })
    }

    pub fn scores(&self, donor: &ScoringProfile, recipient: &ScoringProfile) -> ArcScores {
        let antigen = donor.antigen.as_ref().zip(recipient.antigen.as_ref()).map(|(d, r)| {
            let mm: u32 = d.iter().zip(r).map(|(d, r)| slot_mismatches([&d[0], &d[1]], [&r[0], &r[1]])).sum();
            self.loci.z_antigen() - mm
        });
        let allele = donor.allele.as_ref().zip(recipient.allele.as_ref()).map(|(d, r)| {
            let mm: u32 = d.iter().zip(r).map(|(d, r)| slot_mismatches([&d[0], &d[1]], [&r[0], &r[1]])).sum();
            self.loci.z_allele() - mm
        });
        let eplet = donor.eplets.as_ref().zip(recipient.eplets.as_ref()).and_then(|(d, r)| {
            let load: usize = d.iter().zip(r).map(|(d, r)| d.difference_len(r)).sum();
            self.loci.z_eplet().ok().map(|z| z.saturating_sub(load as u32))
        });
        ArcScores { antigen, allele, eplet }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hla::Locus;
    use std::collections::BTreeSet;

    fn typing(text: &str) -> HlaTyping {
        HlaTyping::parse(text).unwrap()
    }

    fn identity_map(typings: &[&HlaTyping]) -> AlleleToAntigenMap {
        let mut map = AlleleToAntigenMap::new();
        for t in typings {
            for (l, slots) in t.slots() {
                for a in slots {
                    if let Some(sub) = &a.subtype {
                        map.insert(l, sub, &a.family);
                    }
                }
            }
        }
        map
    }

    /// Independent slot-rule oracle: enumerate donor slots one by one.
    fn brute_slot_matches(donor: &[&str; 2], recipient: &[&str; 2]) -> u32 {
        let mut matches = 0;
        for d in donor {
            let mut hit = false;
            for r in recipient {
                if d == r {
                    hit = true;
                }
            }
            if hit {
                matches += 1;
            }
        }
        matches
    }

    #[test]
    fn derive_maps_alleles_and_keeps_antigens() {
        let mut map = AlleleToAntigenMap::new();
        map.insert(Locus::B, "07:01", "B07");
        let t = typing("B*07:01/B07");
        let derived = derive_antigen_typing(&t, &map).unwrap();
        assert_eq!(derived.to_string(), "B07/B07");
        assert_eq!(derive_antigen_typing(&derived, &map).unwrap(), derived);
        let missing = typing("C*05:99/C05");
        assert!(matches!(derive_antigen_typing(&missing, &map), Err(Error::MissingMapEntry { locus: Locus::C, .. })));
    }

    #[test]
    fn antigen_score_examples() {
        let map = AlleleToAntigenMap::new();
        let full = typing("A01/A02 B07/B08 C01/C02 DR01/DR03 DQ02/DQ05");
        assert_eq!(antigen_match_score(&full, &full, &LociSet::full(), &map).unwrap(), 10);

        let b_only = LociSet::new([Locus::B]);
        let donor = typing("B07/B07");
        let recipient = typing("B08/B44");
        assert_eq!(brute_slot_matches(&["07", "07"], &["08", "44"]), 0);
        assert_eq!(antigen_match_score(&donor, &recipient, &b_only, &map).unwrap(), 0);

        let a_only = LociSet::new([Locus::A]);
        assert_eq!(brute_slot_matches(&["01", "02"], &["02", "03"]), 1);
        assert_eq!(antigen_match_score(&typing("A01/A02"), &typing("A02/A03"), &a_only, &map).unwrap(), 1);
    }

    #[test]
    fn allele_score_is_stricter_than_antigen() {
        let donor = typing("B*07:01/B*08:01");
        let recipient = typing("B*07:02/B*08:01");
        let loci = LociSet::new([Locus::B]);
        let map = identity_map(&[&donor, &recipient]);
        assert_eq!(allele_match_score(&donor, &recipient, &loci).unwrap(), 1);
        assert_eq!(antigen_match_score(&donor, &recipient, &loci, &map).unwrap(), 2);
        let low = typing("B07/B*08:01");
        assert!(matches!(allele_match_score(&low, &recipient, &loci), Err(Error::ResolutionTooLow(Locus::B))));
    }

    fn small_registry() -> EpletRegistry {
        let mut reg = EpletRegistry::new();
        let a1: Allele = "A*01:01".parse().unwrap();
        let a2: Allele = "A*02:01".parse().unwrap();
        reg.insert(&a1, "e1", ClassGroup::ClassI).unwrap();
        reg.insert(&a1, "e2", ClassGroup::ClassI).unwrap();
        reg.insert(&a2, "e2", ClassGroup::ClassI).unwrap();
        reg.insert(&a2, "e3", ClassGroup::ClassI).unwrap();
        reg
    }

    #[test]
    fn eplet_set_examples() {
        let reg = small_registry();
        let loci = LociSet::new([Locus::A]);
        let set = eplet_set(&typing("A*01:01/A*02:01"), &reg, ClassGroup::ClassI, &loci).unwrap();
        let names: BTreeSet<&str> = set.names(&reg).collect();
        assert_eq!(names, BTreeSet::from(["e1", "e2", "e3"]));

        let homo = eplet_set(&typing("A*01:01/A*01:01"), &reg, ClassGroup::ClassI, &loci).unwrap();
        let single = eplet_set(&typing("A*01:01/A*01:01"), &reg, ClassGroup::ClassI, &loci).unwrap();
        assert_eq!(homo, single);
        assert_eq!(homo.len(), 2);

        let mut empty = EpletRegistry::new();
        empty.register_allele(&"A*01:01".parse().unwrap()).unwrap();
        assert!(eplet_set(&typing("A*01:01/A*01:01"), &empty, ClassGroup::ClassI, &loci).unwrap().is_empty());
        assert!(matches!(
            eplet_set(&typing("A01/A*01:01"), &reg, ClassGroup::ClassI, &loci),
            Err(Error::ResolutionTooLow(Locus::A))
        ));
    }

    #[test]
    fn eplet_score_undefined_on_split_class_one() {
        let reg = small_registry();
        let t = typing("B*07:01/B*07:01 DR*01:01/DR*01:01 DQ*02:01/DQ*02:01");
        assert!(matches!(eplet_match_score(&t, &t, &reg, &LociSet::b_dr_dq()), Err(Error::EpletsUndefined(_))));
    }

    #[test]
    fn eplet_subset_scores_maximum() {
        let reg = small_registry();
        let loci = LociSet::new([Locus::A, Locus::B, Locus::C]).with_eplet_max(20);
        let mut base = "A*01:01/A*01:01 B*07:01/B*07:01 C*01:01/C*01:01".to_string();
        let mut reg = reg;
        for a in ["B*07:01", "C*01:01"] {
            reg.register_allele(&a.parse().unwrap()).unwrap();
        }
        let donor = typing(&base);
        base = base.replace("A*01:01/A*01:01", "A*01:01/A*02:01");
        let recipient = typing(&base);
        assert_eq!(eplet_match_score(&donor, &recipient, &reg, &loci).unwrap(), 20);
        assert_eq!(eplet_match_score(&recipient, &donor, &reg, &loci).unwrap(), 19);
    }

    #[test]
    fn profile_scores_agree_with_direct_functions() {
        let reg = small_registry();
        let loci = LociSet::new([Locus::A, Locus::B, Locus::C]).with_eplet_max(10);
        let mut reg = reg;
        for a in ["B*07:01", "B*08:01", "C*01:01"] {
            reg.register_allele(&a.parse().unwrap()).unwrap();
        }
        let d = typing("A*01:01/A*02:01 B*07:01/B*08:01 C*01:01/C*01:01");
        let r = typing("A*02:01/A*02:01 B*07:01/B*07:01 C*01:01/C*01:01");
        let map = identity_map(&[&d, &r]);
        let scorer = Scorer::new(&loci, &map, Some(&reg));
        let pd = scorer.profile(&d, Paradigm::Eplet).unwrap();
        let pr = scorer.profile(&r, Paradigm::Eplet).unwrap();
        let s = scorer.scores(&pd, &pr);
        assert_eq!(s.antigen, Some(antigen_match_score(&d, &r, &loci, &map).unwrap()));
        assert_eq!(s.allele, Some(allele_match_score(&d, &r, &loci).unwrap()));
        assert_eq!(s.eplet, Some(eplet_match_score(&d, &r, &reg, &loci).unwrap()));
    }

    #[test]
    fn profile_reports_only_required_failures() {
        let map = AlleleToAntigenMap::new();
        let loci = LociSet::b_dr_dq();
        let t = typing("B07/B08 DR01/DR03 DQ02/DQ05");
        let scorer = Scorer::new(&loci, &map, None);
        let p = scorer.profile(&t, Paradigm::Antigen).unwrap();
        assert!(p.supports(Paradigm::Antigen));
        assert!(!p.supports(Paradigm::Allele));
        assert!(!p.supports(Paradigm::Eplet));
        assert!(matches!(scorer.profile(&t, Paradigm::Eplet), Err(Error::EpletsUndefined(_))));
        assert!(matches!(scorer.profile(&t, Paradigm::Allele), Err(Error::ResolutionTooLow(Locus::B))));
        let partial = typing("B07/B08 DR01/DR03");
        assert!(matches!(scorer.profile(&partial, Paradigm::Antigen), Err(Error::MissingLocus(Locus::DQ))));
    }
}
