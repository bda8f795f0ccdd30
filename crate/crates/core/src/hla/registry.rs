//! External lookup tables: allele-to-antigen mapping and the eplet registry.
//!
//! Map CSV: `locus,family,subtype,antigen_family`.
//! Registry CSV: `locus,family,subtype,eplet_id,class_group`, one row per
//! (allele, eplet); a row with empty `eplet_id` registers an allele that
//! carries no eplets.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Allele, ClassGroup, Locus};
use crate::error::{Error, Result};

#[derive(Debug, Deserialize, Serialize)]
struct MapRow {
    locus: String,
    family: String,
    subtype: String,
    antigen_family: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct RegistryRow {
    locus: String,
    family: String,
    subtype: String,
    eplet_id: String,
    class_group: String,
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, reason: reason.into() }
}

/// Accepts `"07"` or the locus-prefixed form `"B07"`.
fn strip_locus(locus: Locus, family: &str) -> String {
    let f = family.trim();
    match f.strip_prefix(locus.name()) {
        Some(rest) if !rest.is_empty() && rest.chars().next().is_some_and(|c| c.is_ascii_digit()) => rest.to_string(),
        _ => f.to_string(),
    }
}

/// Validates a (locus, family, subtype) triple from a table row.
fn table_allele(path: &Path, line: usize, locus: &str, family: &str, subtype: &str) -> Result<Allele> {
    let locus: Locus = locus.parse().map_err(|e: Error| parse_err(path, line, e.to_string()))?;
    let family = strip_locus(locus, family);
    let subtype = subtype.trim();
    if subtype.is_empty() {
        return Err(parse_err(path, line, "subtype must be non-empty"));
    }
    let allele = Allele::allele(locus, subtype);
    if allele.family != family {
        return Err(parse_err(path, line, format!("subtype {subtype} is not in family {family}")));
    }
    Ok(allele)
}

/// Maps allele-level values to antigen families.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AlleleToAntigenMap {
    entries: BTreeMap<(Locus, String), String>,
}

impl AlleleToAntigenMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, locus: Locus, subtype: &str, antigen_family: &str) {
        self.entries.insert((locus, subtype.to_string()), strip_locus(locus, antigen_family));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Antigen family for an allele-level value; `None` for antigen-level
    /// input or a missing entry.
    pub fn lookup(&self, allele: &Allele) -> Option<&str> {
        let sub = allele.subtype.as_ref()?;
        self.entries.get(&(allele.locus, sub.clone())).map(String::as_str)
    }

    /// Antigen-level form of `allele`. Antigen-level input passes through.
    pub fn antigen_of(&self, allele: &Allele) -> Result<Allele> {
        if !allele.is_allele_level() {
            return Ok(allele.clone());
        }
        self.lookup(allele)
            .map(|fam| Allele::antigen(allele.locus, fam))
            .ok_or_else(|| Error::MissingMapEntry { locus: allele.locus, allele: allele.clone() })
    }

    pub fn from_reader(reader: impl Read, path: &Path) -> Result<Self> {
        let mut map = AlleleToAntigenMap::new();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        for (i, row) in rdr.deserialize::<MapRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| parse_err(path, line, e.to_string()))?;
            let allele = table_allele(path, line, &row.locus, &row.family, &row.subtype)?;
            if row.antigen_family.trim().is_empty() {
                return Err(parse_err(path, line, "antigen_family must be non-empty"));
            }
            map.insert(allele.locus, allele.subtype.as_deref().unwrap(), &row.antigen_family);
        }
        Ok(map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for ((locus, sub), fam) in &self.entries {
            let allele = Allele::allele(*locus, sub.clone());
            w.serialize(MapRow {
                locus: locus.to_string(),
                family: allele.family,
                subtype: sub.clone(),
                antigen_family: format!("{locus}{fam}"),
            })?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Sorted, deduplicated eplet indices into an [`EpletRegistry`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct EpletSet(Vec<u32>);

impl EpletSet {
    pub fn from_ids(mut ids: Vec<u32>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        EpletSet(ids)
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn union(&self, other: &EpletSet) -> EpletSet {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => {
                    out.push(self.0[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(other.0[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(self.0[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        EpletSet(out)
    }

    /// `|self \ other|`
    pub fn difference_len(&self, other: &EpletSet) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.0.len() {
            if j >= other.0.len() {
                n += self.0.len() - i;
                break;
            }
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => {
                    n += 1;
                    i += 1;
                }
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn names<'a>(&'a self, registry: &'a EpletRegistry) -> impl Iterator<Item = &'a str> + 'a {
        self.0.iter().map(move |id| registry.eplet_name(*id))
    }
}

/// Eplets carried by each allele, with every eplet assigned to exactly one
/// class group.
#[derive(Clone, Debug, Default)]
pub struct EpletRegistry {
    alleles: BTreeMap<(Locus, String), EpletSet>,
    names: Vec<String>,
    index: HashMap<String, u32>,
    classes: Vec<ClassGroup>,
}

impl EpletRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `allele` (which must be allele-level) with no eplets, if
    /// not already present.
    pub fn register_allele(&mut self, allele: &Allele) -> Result<()> {
        let sub = allele.subtype.clone().ok_or(Error::ResolutionTooLow(allele.locus))?;
        self.alleles.entry((allele.locus, sub)).or_default();
        Ok(())
    }

    pub fn insert(&mut self, allele: &Allele, eplet: &str, class: ClassGroup) -> Result<()> {
        if allele.locus.group() != class {
            return Err(Error::InvalidRegistry(format!(
                "eplet {eplet} of class {} attached to {allele}",
                class.code()
            )));
        }
        let id = match self.index.get(eplet) {
            Some(&id) => {
                if self.classes[id as usize] != class {
                    return Err(Error::InvalidRegistry(format!(
                        "eplet {eplet} listed under classes {} and {}",
                        self.classes[id as usize].code(),
                        class.code()
                    )));
                }
                id
            }
            None => {
                let id = self.names.len() as u32;
                self.names.push(eplet.to_string());
                self.classes.push(class);
                self.index.insert(eplet.to_string(), id);
                id
            }
        };
        self.register_allele(allele)?;
        let key = (allele.locus, allele.subtype.clone().unwrap());
        let set = self.alleles.get_mut(&key).unwrap();
        if !set.contains(id) {
            set.0.push(id);
            set.0.sort_unstable();
        }
        Ok(())
    }

    pub fn eplet_count(&self) -> usize {
        self.names.len()
    }

    pub fn allele_count(&self) -> usize {
        self.alleles.len()
    }

    pub fn eplet_name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn eplet_id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn class_of(&self, id: u32) -> ClassGroup {
        self.classes[id as usize]
    }

    /// Eplets of an allele-level value.
    pub fn eplets_of(&self, allele: &Allele) -> Result<&EpletSet> {
        let sub = allele.subtype.as_ref().ok_or(Error::ResolutionTooLow(allele.locus))?;
        self.alleles.get(&(allele.locus, sub.clone())).ok_or_else(|| Error::MissingRegistryEntry(allele.clone()))
    }

    pub fn from_reader(reader: impl Read, path: &Path) -> Result<Self> {
        let mut reg = EpletRegistry::new();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        for (i, row) in rdr.deserialize::<RegistryRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| parse_err(path, line, e.to_string()))?;
            let allele = table_allele(path, line, &row.locus, &row.family, &row.subtype)?;
            if row.eplet_id.is_empty() {
                reg.register_allele(&allele)?;
                continue;
            }
            let class: ClassGroup = row.class_group.parse().map_err(|e: Error| parse_err(path, line, e.to_string()))?;
            reg.insert(&allele, &row.eplet_id, class).map_err(|e| parse_err(path, line, e.to_string()))?;
        }
        Ok(reg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for ((locus, sub), set) in &self.alleles {
            let allele = Allele::allele(*locus, sub.clone());
            let row = |eplet_id: String, class_group: String| RegistryRow {
                locus: locus.to_string(),
                family: allele.family.clone(),
                subtype: sub.clone(),
                eplet_id,
                class_group,
            };
            if set.is_empty() {
                w.serialize(row(String::new(), String::new()))?;
            }
            let mut names: Vec<(&str, u32)> = set.ids().iter().map(|id| (self.eplet_name(*id), *id)).collect();
            names.sort();
            for (name, id) in names {
                w.serialize(row(name.to_string(), self.class_of(id).code().to_string()))?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_csv_round_trip() {
        let csv = "locus,family,subtype,antigen_family\nB,07,07:01,B07\nDR,15,15:01,DR15\n";
        let map = AlleleToAntigenMap::from_reader(csv.as_bytes(), Path::new("map.csv")).unwrap();
        assert_eq!(map.len(), 2);
        assert_eq!(map.lookup(&"B*07:01".parse().unwrap()), Some("07"));
        let mut out = Vec::new();
        map.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), csv);
    }

    #[test]
    fn map_rejects_family_mismatch_with_line_number() {
        let csv = "locus,family,subtype,antigen_family\nB,07,07:01,B07\nB,08,07:02,B07\n";
        match AlleleToAntigenMap::from_reader(csv.as_bytes(), Path::new("m.csv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn registry_class_conflicts_are_rejected() {
        let mut reg = EpletRegistry::new();
        let a: Allele = "A*01:01".parse().unwrap();
        let dr: Allele = "DR*15:01".parse().unwrap();
        reg.insert(&a, "62GE", ClassGroup::ClassI).unwrap();
        assert!(reg.insert(&dr, "62GE", ClassGroup::DR).is_err());
        assert!(reg.insert(&a, "x", ClassGroup::DQ).is_err());
    }

    #[test]
    fn registry_csv_round_trip_and_empty_alleles() {
        let csv = "locus,family,subtype,eplet_id,class_group\n\
                   A,01,01:01,44KM,I\nA,01,01:01,62QE,I\nA,02,02:01,,\nDQ,05,05:01,52PQ,DQ\n";
        let reg = EpletRegistry::from_reader(csv.as_bytes(), Path::new("r.csv")).unwrap();
        assert_eq!(reg.eplet_count(), 3);
        assert!(reg.eplets_of(&"A*02:01".parse().unwrap()).unwrap().is_empty());
        assert!(matches!(reg.eplets_of(&"A*03:01".parse().unwrap()), Err(Error::MissingRegistryEntry(_))));
        assert!(matches!(reg.eplets_of(&"A01".parse().unwrap()), Err(Error::ResolutionTooLow(Locus::A))));
        let mut out = Vec::new();
        reg.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), csv);
    }

    #[test]
    fn set_operations() {
        let a = EpletSet::from_ids(vec![5, 1, 3, 3]);
        let b = EpletSet::from_ids(vec![3, 4]);
        assert_eq!(a.ids(), &[1, 3, 5]);
        assert_eq!(a.union(&b).ids(), &[1, 3, 4, 5]);
        assert_eq!(a.difference_len(&b), 2);
        assert_eq!(b.difference_len(&a), 1);
        assert_eq!(a.difference_len(&EpletSet::default()), 3);
    }
}
