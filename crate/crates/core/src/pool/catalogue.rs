//! Allele frequency tables and the small synthetic HLA catalogue shipped as
//! example data.
//!
//! Frequency CSV: `ethnicity,locus,allele,frequency`, one row per allele
//! with allele-level notation (`A*01:01`).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::compatibility::BloodType;
use crate::error::{Error, Result};
use crate::hla::{Allele, AlleleToAntigenMap, ClassGroup, EpletRegistry, LociSet, Locus};

const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Deserialize, Serialize)]
struct FrequencyRow {
    ethnicity: String,
    locus: String,
    allele: String,
    frequency: f64,
}

/// Per-ethnicity allele frequencies for every locus.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrequencyTable {
    tables: BTreeMap<String, BTreeMap<Locus, Vec<(Allele, f64)>>>,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, ethnicity: &str, allele: Allele, frequency: f64) {
        self.tables
            .entry(ethnicity.to_string())
            .or_default()
            .entry(allele.locus)
            .or_default()
            .push((allele, frequency));
    }

    pub fn ethnicities(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }

    pub fn get(&self, ethnicity: &str, locus: Locus) -> Option<&[(Allele, f64)]> {
        self.tables.get(ethnicity)?.get(&locus).map(Vec::as_slice)
    }

    /// Every listed ethnicity has a table summing to one on every locus of
    /// `loci`, with non-negative entries.
    pub fn validate<'a>(&self, ethnicities: impl IntoIterator<Item = &'a str>, loci: &LociSet) -> Result<()> {
        for eth in ethnicities {
            for &locus in loci.loci() {
                let table = self.get(eth, locus).ok_or_else(|| {
                    Error::InvalidDistribution(format!("no {locus} frequencies for ethnicity {eth:?}"))
                })?;
                if table.iter().any(|(_, f)| !f.is_finite() || *f < 0.0) {
                    return Err(Error::InvalidDistribution(format!("negative {locus} frequency for {eth:?}")));
                }
                let total: f64 = table.iter().map(|(_, f)| f).sum();
                if (total - 1.0).abs() > SUM_TOL {
                    return Err(Error::InvalidDistribution(format!("{locus} frequencies for {eth:?} sum to {total}")));
                }
            }
        }
        Ok(())
    }

    /// Frequencies of `locus` in the whole population, mixing ethnicities
    /// by `distribution`.
    pub fn population(&self, distribution: &BTreeMap<String, f64>, locus: Locus) -> Vec<(Allele, f64)> {
        let mut mix: BTreeMap<Allele, f64> = BTreeMap::new();
        for (eth, p) in distribution {
            for (allele, f) in self.get(eth, locus).unwrap_or_default() {
                *mix.entry(allele.clone()).or_default() += p * f;
            }
        }
        mix.into_iter().collect()
    }

    pub fn from_reader(reader: impl Read, path: &Path) -> Result<Self> {
        let mut table = FrequencyTable::new();
        let mut rdr = csv::Reader::from_reader(reader);
        for (i, row) in rdr.deserialize::<FrequencyRow>().enumerate() {
            let line = i + 2;
            let bad = |reason: String| Error::Parse { path: path.to_path_buf(), line, reason };
            let row = row.map_err(|e| bad(e.to_string()))?;
            let allele: Allele = row.allele.parse().map_err(|e: Error| bad(e.to_string()))?;
            let locus: Locus = row.locus.parse().map_err(|e: Error| bad(e.to_string()))?;
            if allele.locus != locus {
                return Err(bad(format!("allele {allele} is not at locus {locus}")));
            }
            if !allele.is_allele_level() {
                return Err(bad(format!("allele {allele} must be allele-level")));
            }
            if row.ethnicity.trim().is_empty() {
                return Err(bad("empty ethnicity".into()));
            }
            table.insert(row.ethnicity.trim(), allele, row.frequency);
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (eth, loci) in &self.tables {
            for (locus, rows) in loci {
                for (allele, frequency) in rows {
                    w.serialize(FrequencyRow {
                        ethnicity: eth.clone(),
                        locus: locus.to_string(),
                        allele: allele.to_string(),
                        frequency: *frequency,
                    })?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Blood type frequencies used when a spec gives none.
pub fn default_blood_types() -> BTreeMap<BloodType, f64> {
    BTreeMap::from([(BloodType::O, 0.45), (BloodType::A, 0.40), (BloodType::B, 0.11), (BloodType::AB, 0.04)])
}

/// A synthetic HLA universe: the allele-to-antigen map, the eplet registry
/// and population frequencies over the same alleles.
#[derive(Clone, Debug)]
pub struct Catalogue {
    pub map: AlleleToAntigenMap,
    pub registry: EpletRegistry,
    pub frequencies: FrequencyTable,
    pub ethnicity_distribution: BTreeMap<String, f64>,
}

const FAMILIES: [(Locus, usize); 5] = [(Locus::A, 10), (Locus::B, 14), (Locus::C, 9), (Locus::DR, 10), (Locus::DQ, 6)];

fn universe(group: ClassGroup) -> (usize, usize) {
    // (eplets in the group, eplets per allele)
    match group {
        ClassGroup::ClassI => (150, 18),
        ClassGroup::DR => (70, 18),
        ClassGroup::DQ => (50, 15),
    }
}

fn eplet_name(group: ClassGroup, i: usize) -> String {
    format!("{}{:03}", group.code(), i + 1)
}

struct Alleles {
    by_locus: BTreeMap<Locus, Vec<Allele>>,
    map: AlleleToAntigenMap,
    registry: EpletRegistry,
}

/// Families with one to four subtypes each; subtypes share most eplets of
/// their family core.
fn build_alleles(rng: &mut ChaCha8Rng) -> Result<Alleles> {
    let mut by_locus = BTreeMap::new();
    let mut map = AlleleToAntigenMap::new();
    let mut registry = EpletRegistry::new();
    for (locus, families) in FAMILIES {
        let (size, per_allele) = universe(locus.group());
        let mut alleles = Vec::new();
        for f in 1..=families {
            let family = format!("{f:02}");
            let count = rng.random_range(per_allele / 2..=per_allele * 3 / 2);
            let core: Vec<usize> = sample(rng, size, count).into_vec();
            for s in 1..=rng.random_range(1..=4usize) {
                let allele = Allele::allele(locus, format!("{family}:{s:02}"));
                map.insert(locus, allele.subtype.as_deref().unwrap(), &family);
                let mut eplets = core.clone();
                if s > 1 {
                    for _ in 0..rng.random_range(3..=8) {
                        let k = rng.random_range(0..eplets.len());
                        eplets[k] = rng.random_range(0..size);
                    }
                }
                registry.register_allele(&allele)?;
                for e in eplets {
                    registry.insert(&allele, &eplet_name(locus.group(), e), locus.group())?;
                }
                alleles.push(allele);
            }
        }
        by_locus.insert(locus, alleles);
    }
    Ok(Alleles { by_locus, map, registry })
}

fn gamma_weights(rng: &mut ChaCha8Rng, n: usize, shape: f64) -> Vec<f64> {
    let g = Gamma::new(shape, 1.0).expect("valid gamma shape");
    (0..n).map(|_| g.sample(rng) + 1e-6).collect()
}

fn normalized(weights: Vec<f64>) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let mut out: Vec<f64> = weights.iter().map(|w| w / total).collect();
    // absorb rounding in the largest entry so the table sums to one
    let err = 1.0 - out.iter().sum::<f64>();
    let top = (0..out.len()).max_by(|&a, &b| out[a].total_cmp(&out[b])).unwrap();
    out[top] += err;
    out
}

impl Catalogue {
    /// Six ethnicities, four large and two small, whose allele frequencies
    /// mix a shared component with an ethnicity-specific one.
    pub fn example() -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x4b45_5001);
        let alleles = build_alleles(&mut rng)?;
        let distribution: BTreeMap<String, f64> =
            [("north", 0.40), ("south", 0.25), ("east", 0.18), ("west", 0.12), ("isle", 0.03), ("upland", 0.02)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
        let mut frequencies = FrequencyTable::new();
        for list in alleles.by_locus.values() {
            let shared = gamma_weights(&mut rng, list.len(), 0.7);
            for eth in distribution.keys() {
                let own = gamma_weights(&mut rng, list.len(), 0.7);
                let mixed: Vec<f64> = shared.iter().zip(&own).map(|(s, o)| 0.5 * s + 0.5 * o).collect();
                for (allele, f) in list.iter().zip(normalized(mixed)) {
                    frequencies.insert(eth, allele.clone(), f);
                }
            }
        }
        Ok(Catalogue {
            map: alleles.map,
            registry: alleles.registry,
            frequencies,
            ethnicity_distribution: distribution,
        })
    }

    /// Two groups on the same alleles: `major` (80%) and `minor` (20%). The
    /// minority draws most of its alleles from the ones the majority rarely
    /// carries, so its recipients find fewer compatible donors.
    pub fn two_group() -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x4b45_5002);
        let alleles = build_alleles(&mut rng)?;
        let distribution: BTreeMap<String, f64> =
            [("major".to_string(), 0.8), ("minor".to_string(), 0.2)].into_iter().collect();
        let mut frequencies = FrequencyTable::new();
        for list in alleles.by_locus.values() {
            let n = list.len();
            let common = n / 2;
            let major: Vec<f64> = (0..n).map(|i| if i < common { 1.0 + (i % 3) as f64 } else { 0.05 }).collect();
            let minor: Vec<f64> = vec![1.0; n];
            for (allele, f) in list.iter().zip(normalized(major)) {
                frequencies.insert("major", allele.clone(), f);
            }
            for (allele, f) in list.iter().zip(normalized(minor)) {
                frequencies.insert("minor", allele.clone(), f);
            }
        }
        Ok(Catalogue {
            map: alleles.map,
            registry: alleles.registry,
            frequencies,
            ethnicity_distribution: distribution,
        })
    }
}
