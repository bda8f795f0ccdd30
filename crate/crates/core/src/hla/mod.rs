//! HLA typings, loci sets and the three match-score paradigms.

mod registry;
mod score;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use registry::{AlleleToAntigenMap, EpletRegistry, EpletSet};
pub use score::{
    allele_match_score, antigen_match_score, derive_antigen_typing, eplet_match_score, eplet_set, ArcScores, Paradigm,
    Scorer, ScoringProfile,
};

/// The five modeled HLA loci. DP is not modeled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Locus {
    A,
    B,
    C,
    DR,
    DQ,
}

impl Locus {
    pub const ALL: [Locus; 5] = [Locus::A, Locus::B, Locus::C, Locus::DR, Locus::DQ];

    pub fn name(self) -> &'static str {
        match self {
            Locus::A => "A",
            Locus::B => "B",
            Locus::C => "C",
            Locus::DR => "DR",
            Locus::DQ => "DQ",
        }
    }

    pub fn group(self) -> ClassGroup {
        match self {
            Locus::A | Locus::B | Locus::C => ClassGroup::ClassI,
            Locus::DR => ClassGroup::DR,
            Locus::DQ => ClassGroup::DQ,
        }
    }

    /// Splits a locus prefix off `text`, accepting `HLA-` and the gene
    /// names `DRB1`/`DQB1` as aliases.
    fn split_prefix(text: &str) -> Option<(Locus, &str)> {
        let text = text.strip_prefix("HLA-").unwrap_or(text);
        const PREFIXES: [(&str, Locus); 7] = [
            ("DRB1", Locus::DR),
            ("DQB1", Locus::DQ),
            ("DR", Locus::DR),
            ("DQ", Locus::DQ),
            ("A", Locus::A),
            ("B", Locus::B),
            ("C", Locus::C),
        ];
        PREFIXES.iter().find_map(|(p, l)| text.strip_prefix(p).map(|rest| (*l, rest)))
    }
}

impl fmt::Display for Locus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Locus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match Locus::split_prefix(s.trim()) {
            Some((locus, "")) => Ok(locus),
            _ => Err(Error::InvalidAllele { text: s.to_string(), reason: "unknown locus".into() }),
        }
    }
}

/// Eplet reporting groups: the three class I loci together, DR, and DQ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassGroup {
    ClassI,
    DR,
    DQ,
}

impl ClassGroup {
    pub const ALL: [ClassGroup; 3] = [ClassGroup::ClassI, ClassGroup::DR, ClassGroup::DQ];

    pub fn loci(self) -> &'static [Locus] {
        match self {
            ClassGroup::ClassI => &[Locus::A, Locus::B, Locus::C],
            ClassGroup::DR => &[Locus::DR],
            ClassGroup::DQ => &[Locus::DQ],
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            ClassGroup::ClassI => "I",
            ClassGroup::DR => "DR",
            ClassGroup::DQ => "DQ",
        }
    }
}

impl FromStr for ClassGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" | "ClassI" | "class1" => Ok(ClassGroup::ClassI),
            "DR" => Ok(ClassGroup::DR),
            "DQ" => Ok(ClassGroup::DQ),
            other => Err(Error::InvalidRegistry(format!("unknown class group {other:?}"))),
        }
    }
}

/// One HLA slot value. Without a subtype it is antigen-level (`B07`),
/// with one it is allele-level (`B*07:01`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Allele {
    pub locus: Locus,
    pub family: String,
    pub subtype: Option<String>,
}

impl Allele {
    pub fn antigen(locus: Locus, family: impl Into<String>) -> Self {
        Allele { locus, family: family.into(), subtype: None }
    }

    /// Allele-level value; the family is the first field of the subtype.
    pub fn allele(locus: Locus, subtype: impl Into<String>) -> Self {
        let subtype = subtype.into();
        let family = subtype.split(':').next().unwrap_or_default().to_string();
        Allele { locus, family, subtype: Some(subtype) }
    }

    pub fn is_allele_level(&self) -> bool {
        self.subtype.is_some()
    }

    pub fn resolution(&self) -> Resolution {
        if self.is_allele_level() {
            Resolution::Allele
        } else {
            Resolution::Antigen
        }
    }

    /// The same value with the subtype dropped.
    pub fn family_only(&self) -> Allele {
        Allele::antigen(self.locus, self.family.clone())
    }
}

impl fmt::Display for Allele {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.subtype {
            Some(sub) => write!(f, "{}*{}", self.locus, sub),
            None => write!(f, "{}{}", self.locus, self.family),
        }
    }
}

impl FromStr for Allele {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let bad = |reason: &str| Error::InvalidAllele { text: text.to_string(), reason: reason.into() };
        let trimmed = text.trim();
        let (locus, rest) = Locus::split_prefix(trimmed).ok_or_else(|| bad("unknown locus"))?;
        let valid = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == ':');
        if let Some(sub) = rest.strip_prefix('*') {
            if !valid(sub) || !sub.contains(':') || sub.starts_with(':') {
                return Err(bad("allele subtype must look like FF:SS"));
            }
            Ok(Allele::allele(locus, sub))
        } else {
            if !valid(rest) || rest.contains(':') {
                return Err(bad("antigen family must be alphanumeric"));
            }
            Ok(Allele::antigen(locus, rest))
        }
    }
}

impl TryFrom<String> for Allele {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<Allele> for String {
    fn from(value: Allele) -> String {
        value.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    Antigen,
    Allele,
}

/// Two slots per typed locus. Loci may be absent; scoring against a loci
/// set that needs them fails with [`Error::MissingLocus`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HlaTyping {
    slots: BTreeMap<Locus, [Allele; 2]>,
}

impl HlaTyping {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, first: Allele, second: Allele) -> Result<Self> {
        self.set(first, second)?;
        Ok(self)
    }

    pub fn set(&mut self, first: Allele, second: Allele) -> Result<()> {
        if first.locus != second.locus {
            return Err(Error::InvalidAllele {
                text: format!("{first}/{second}"),
                reason: "slots of one locus must share the locus".into(),
            });
        }
        self.slots.insert(first.locus, [first, second]);
        Ok(())
    }

    /// Parses `"A*01:01/A*02:01 B07/B08 ..."`-style shorthand.
    pub fn parse(text: &str) -> Result<Self> {
        let mut typing = HlaTyping::new();
        for token in text.split_whitespace() {
            let (a, b) = token.split_once('/').ok_or_else(|| Error::InvalidAllele {
                text: token.to_string(),
                reason: "expected two slots separated by '/'".into(),
            })?;
            typing.set(a.parse()?, b.parse()?)?;
        }
        Ok(typing)
    }

    pub fn get(&self, locus: Locus) -> Option<&[Allele; 2]> {
        self.slots.get(&locus)
    }

    pub fn require(&self, locus: Locus) -> Result<&[Allele; 2]> {
        self.get(locus).ok_or(Error::MissingLocus(locus))
    }

    pub fn loci(&self) -> impl Iterator<Item = Locus> + '_ {
        self.slots.keys().copied()
    }

    pub fn slots(&self) -> impl Iterator<Item = (Locus, &[Allele; 2])> {
        self.slots.iter().map(|(l, s)| (*l, s))
    }

    /// Allele-level only if both slots carry a subtype.
    pub fn resolution(&self, locus: Locus) -> Option<Resolution> {
        self.get(locus).map(|[a, b]| {
            if a.is_allele_level() && b.is_allele_level() {
                Resolution::Allele
            } else {
                Resolution::Antigen
            }
        })
    }
}

impl fmt::Display for HlaTyping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (_, [a, b]) in self.slots() {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            write!(f, "{a}/{b}")?;
        }
        Ok(())
    }
}

/// The loci a score is computed over, plus the eplet maximum when eplets
/// are defined for the set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LociSet {
    loci: Vec<Locus>,
    eplet_max: Option<u32>,
}

impl LociSet {
    pub const FULL_EPLET_MAX: u32 = 138;
    pub const CLASS_II_EPLET_MAX: u32 = 67;

    pub fn new(loci: impl IntoIterator<Item = Locus>) -> Self {
        let mut loci: Vec<Locus> = loci.into_iter().collect();
        loci.sort();
        loci.dedup();
        let eplet_max = if loci == Locus::ALL {
            Some(Self::FULL_EPLET_MAX)
        } else if loci == [Locus::DR, Locus::DQ] {
            Some(Self::CLASS_II_EPLET_MAX)
        } else {
            None
        };
        let mut set = LociSet { loci, eplet_max: None };
        if set.eplet_groups_complete() {
            set.eplet_max = eplet_max;
        }
        set
    }

    /// All ten slots.
    pub fn full() -> Self {
        Self::new(Locus::ALL)
    }

    pub fn b_dr_dq() -> Self {
        Self::new([Locus::B, Locus::DR, Locus::DQ])
    }

    pub fn dr_dq() -> Self {
        Self::new([Locus::DR, Locus::DQ])
    }

    /// Overrides the eplet maximum. Ignored for sets that split the class I
    /// loci, for which eplet loads are undefined.
    pub fn with_eplet_max(mut self, max: u32) -> Self {
        if self.eplet_groups_complete() {
            self.eplet_max = Some(max);
        }
        self
    }

    pub fn loci(&self) -> &[Locus] {
        &self.loci
    }

    pub fn contains(&self, locus: Locus) -> bool {
        self.loci.contains(&locus)
    }

    pub fn z_antigen(&self) -> u32 {
        2 * self.loci.len() as u32
    }

    pub fn z_allele(&self) -> u32 {
        self.z_antigen()
    }

    pub fn z_eplet(&self) -> Result<u32> {
        self.eplet_max.ok_or_else(|| Error::EpletsUndefined(self.clone()))
    }

    pub fn supports_eplets(&self) -> bool {
        self.eplet_max.is_some()
    }

    /// Groups whose loci are all in the set.
    pub fn groups(&self) -> Vec<ClassGroup> {
        ClassGroup::ALL.into_iter().filter(|g| g.loci().iter().all(|l| self.contains(*l))).collect()
    }

    /// Eplet loads are reported per group, so a group must be either fully
    /// in or fully out of the set.
    fn eplet_groups_complete(&self) -> bool {
        !self.loci.is_empty()
            && ClassGroup::ALL.into_iter().all(|g| {
                let n = g.loci().iter().filter(|l| self.contains(**l)).count();
                n == 0 || n == g.loci().len()
            })
    }

    pub fn name(&self) -> String {
        if self.loci == Locus::ALL {
            "full".into()
        } else if self.loci == [Locus::B, Locus::DR, Locus::DQ] {
            "bdrdq".into()
        } else if self.loci == [Locus::DR, Locus::DQ] {
            "drdq".into()
        } else {
            self.to_string()
        }
    }
}

impl fmt::Display for LociSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.loci.iter().map(|l| l.name()).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

impl FromStr for LociSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" | "10" => Ok(LociSet::full()),
            "bdrdq" | "6" => Ok(LociSet::b_dr_dq()),
            "drdq" | "4" => Ok(LociSet::dr_dq()),
            other => {
                let loci = other
                    .split(',')
                    .map(|t| t.to_ascii_uppercase().parse::<Locus>())
                    .collect::<Result<Vec<_>>>()
                    .map_err(|_| Error::InvalidConfig(format!("unknown loci set {s:?}")))?;
                Ok(LociSet::new(loci))
            }
        }
    }
}
