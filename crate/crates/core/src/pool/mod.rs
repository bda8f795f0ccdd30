//! Recipient and donor populations, incompatible pair formation and
//! arrival/departure times.

mod catalogue;
mod io;
mod matching;

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compatibility::{
    abo_compatible, dsa_incompatible, BloodType, DsaEntry, Pair, PairId, Registries, ThresholdConfig,
};
use crate::error::{Error, Result};
use crate::hla::{Allele, HlaTyping, LociSet};
use crate::kep::Subpopulations;

pub use catalogue::{default_blood_types, Catalogue, FrequencyTable};
pub use io::{load_pool, pool_from_csv, pool_from_json, save_pool, write_pool_csv, write_pool_json};
pub use matching::hopcroft_karp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Recipient,
    Donor,
}

/// One person of the source population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub id: u32,
    pub role: Role,
    pub typing: HlaTyping,
    pub blood: BloodType,
    pub ethnicity: String,
    #[serde(default)]
    pub dsa: Vec<DsaEntry>,
}

impl PersonRecord {
    pub fn validate(&self) -> Result<()> {
        if self.role == Role::Donor && !self.dsa.is_empty() {
            return Err(Error::InvalidConfig(format!("donor {} carries a DSA list", self.id)));
        }
        Ok(())
    }
}

/// Parameters of a synthetic population.
#[derive(Clone, Debug)]
pub struct PoolSpec {
    pub target_pair_count: usize,
    pub recipients: usize,
    pub donors: usize,
    pub ethnicity_distribution: BTreeMap<String, f64>,
    pub haplotype_frequencies: FrequencyTable,
    pub blood_type_frequencies: BTreeMap<BloodType, f64>,
    /// Per recipient, locus and draw, the probability of one DSA against
    /// an allele drawn from the population.
    pub dsa_rate: f64,
    /// DSA draws per recipient and locus.
    pub dsa_draws: usize,
    /// Share of DSAs recorded at antigen level rather than allele level.
    pub dsa_antigen_share: f64,
    pub loci: LociSet,
    pub seed: u64,
}

impl PoolSpec {
    /// Defaults for the given frequency tables: 990 target pairs drawn from
    /// 1332 recipients and 1401 donors.
    pub fn new(
        ethnicity_distribution: BTreeMap<String, f64>,
        haplotype_frequencies: FrequencyTable,
        seed: u64,
    ) -> Self {
        PoolSpec {
            target_pair_count: 990,
            recipients: 1332,
            donors: 1401,
            ethnicity_distribution,
            haplotype_frequencies,
            blood_type_frequencies: default_blood_types(),
            dsa_rate: 0.6,
            dsa_draws: 4,
            dsa_antigen_share: 0.5,
            loci: LociSet::full(),
            seed,
        }
    }

    pub fn from_catalogue(catalogue: &Catalogue, seed: u64) -> Self {
        Self::new(catalogue.ethnicity_distribution.clone(), catalogue.frequencies.clone(), seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_pair_count < 1 {
            return Err(Error::InvalidConfig("target_pair_count must be at least 1".into()));
        }
        check_distribution("ethnicity", self.ethnicity_distribution.values().copied())?;
        check_distribution("blood type", self.blood_type_frequencies.values().copied())?;
        for (name, p) in [("dsa_rate", self.dsa_rate), ("dsa_antigen_share", self.dsa_antigen_share)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidDistribution(format!("{name} {p} outside [0, 1]")));
            }
        }
        self.haplotype_frequencies.validate(self.ethnicity_distribution.keys().map(String::as_str), &self.loci)
    }
}

fn check_distribution(what: &str, probs: impl Iterator<Item = f64>) -> Result<()> {
    let probs: Vec<f64> = probs.collect();
    if probs.is_empty() {
        return Err(Error::InvalidDistribution(format!("empty {what} distribution")));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidDistribution(format!("negative {what} probability")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("{what} probabilities sum to {total}")));
    }
    Ok(())
}

fn weighted<T: Clone>(items: &[(T, f64)]) -> Result<(Vec<T>, WeightedIndex<f64>)> {
    let index =
        WeightedIndex::new(items.iter().map(|(_, w)| *w)).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
    Ok((items.iter().map(|(t, _)| t.clone()).collect(), index))
}

/// Draws recipients and donors. Ethnicity, per-locus slots, blood type and
/// DSAs are sampled from `spec`; deterministic in `spec.seed`.
pub fn generate_synthetic_population(spec: &PoolSpec) -> Result<(Vec<PersonRecord>, Vec<PersonRecord>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let eth: Vec<(String, f64)> = spec.ethnicity_distribution.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let (eth_labels, eth_index) = weighted(&eth)?;
    let blood: Vec<(BloodType, f64)> = spec.blood_type_frequencies.iter().map(|(k, v)| (*k, *v)).collect();
    let (blood_types, blood_index) = weighted(&blood)?;

    let mut tables = BTreeMap::new();
    for label in &eth_labels {
        for &locus in spec.loci.loci() {
            let table = spec.haplotype_frequencies.get(label, locus).expect("validated");
            tables.insert((label.clone(), locus), weighted(table)?);
        }
    }
    let mut population = BTreeMap::new();
    for &locus in spec.loci.loci() {
        population
            .insert(locus, weighted(&spec.haplotype_frequencies.population(&spec.ethnicity_distribution, locus))?);
    }

    let draw = |rng: &mut ChaCha8Rng, id: u32, role: Role| -> Result<PersonRecord> {
        let ethnicity = eth_labels[eth_index.sample(rng)].clone();
        let mut typing = HlaTyping::new();
        for &locus in spec.loci.loci() {
            let (alleles, index) = &tables[&(ethnicity.clone(), locus)];
            typing.set(alleles[index.sample(rng)].clone(), alleles[index.sample(rng)].clone())?;
        }
        let blood = blood_types[blood_index.sample(rng)];
        let mut dsa = Vec::new();
        if role == Role::Recipient {
            for locus in spec.loci.loci().iter().flat_map(|&l| std::iter::repeat_n(l, spec.dsa_draws)) {
                if !rng.random_bool(spec.dsa_rate) {
                    continue;
                }
                let (alleles, index) = &population[&locus];
                let target: &Allele = &alleles[index.sample(rng)];
                let antigen_level = rng.random_bool(spec.dsa_antigen_share);
                let own = typing.require(locus)?;
                let clashes = own.iter().any(|a| if antigen_level { a.family == target.family } else { a == target });
                let entry = DsaEntry(if antigen_level { target.family_only() } else { target.clone() });
                if !clashes && !dsa.contains(&entry) {
                    dsa.push(entry);
                }
            }
        }
        Ok(PersonRecord { id, role, typing, blood, ethnicity, dsa })
    };

    let recipients =
        (0..spec.recipients).map(|i| draw(&mut rng, i as u32, Role::Recipient)).collect::<Result<Vec<_>>>()?;
    let donors = (0..spec.donors)
        .map(|i| draw(&mut rng, (spec.recipients + i) as u32, Role::Donor))
        .collect::<Result<Vec<_>>>()?;
    Ok((recipients, donors))
}

/// Mutually incompatible edges: `edges[r]` lists donors that cannot give
/// directly to recipient `r`.
pub fn incompatibility_edges(
    recipients: &[PersonRecord],
    donors: &[PersonRecord],
    cfg: &ThresholdConfig,
    registries: &Registries,
) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    let scorer = registries.scorer(&cfg.loci);
    let donor_profiles =
        donors.par_iter().map(|d| scorer.profile(&d.typing, cfg.paradigm)).collect::<Result<Vec<_>>>()?;
    recipients
        .par_iter()
        .map(|r| {
            let rp = scorer.profile(&r.typing, cfg.paradigm)?;
            let mut row = Vec::new();
            for (k, d) in donors.iter().enumerate() {
                let compatible = abo_compatible(d.blood, r.blood)
                    && !dsa_incompatible(&r.dsa, &d.typing, &registries.map)?
                    && scorer.scores(&donor_profiles[k], &rp).get(cfg.paradigm).expect("profiled") >= cfg.min_score;
                if !compatible {
                    row.push(k);
                }
            }
            Ok(row)
        })
        .collect()
}

/// Forms pairs by a maximum-cardinality matching between recipients and
/// donors that are incompatible as a direct pair. Every pair takes the
/// recipient's ethnicity; pair ids follow recipient order. Times are left
/// at `0..inf` until [`assign_arrival_departure`].
pub fn max_cardinality_incompatible_pairing(
    recipients: &[PersonRecord],
    donors: &[PersonRecord],
    cfg: &ThresholdConfig,
    registries: &Registries,
) -> Result<Vec<Pair>> {
    let edges = incompatibility_edges(recipients, donors, cfg, registries)?;
    let mates = hopcroft_karp(&edges, donors.len());
    Ok(mates
        .iter()
        .enumerate()
        .filter_map(|(r, m)| m.map(|d| (r, d)))
        .enumerate()
        .map(|(i, (r, d))| make_pair(PairId(i as u32), &recipients[r], &donors[d]))
        .collect())
}

fn make_pair(id: PairId, r: &PersonRecord, d: &PersonRecord) -> Pair {
    Pair {
        id,
        recipient_typing: r.typing.clone(),
        donor_typing: d.typing.clone(),
        recipient_blood: r.blood,
        donor_blood: d.blood,
        ethnicity: r.ethnicity.clone(),
        dsa: r.dsa.clone(),
        arrival: 0.0,
        departure: f64::INFINITY,
    }
}

/// Keeps at most `target` pairs, chosen uniformly with `seed`, renumbered
/// `0..target` in their original order.
pub fn truncate_pairs(mut pairs: Vec<Pair>, target: usize, seed: u64) -> Vec<Pair> {
    if pairs.len() > target {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep: Vec<usize> = (0..pairs.len()).collect();
        keep.shuffle(&mut rng);
        keep.truncate(target);
        keep.sort_unstable();
        pairs = keep.into_iter().map(|i| pairs[i].clone()).collect();
    }
    for (i, p) in pairs.iter_mut().enumerate() {
        p.id = PairId(i as u32);
    }
    pairs
}

/// Full synthetic pipeline: population, pairing on `cfg`, truncation to the
/// target count. Times are not yet assigned.
pub fn build_pairs(spec: &PoolSpec, cfg: &ThresholdConfig, registries: &Registries) -> Result<Vec<Pair>> {
    let (recipients, donors) = generate_synthetic_population(spec)?;
    let pairs = max_cardinality_incompatible_pairing(&recipients, &donors, cfg, registries)?;
    Ok(truncate_pairs(pairs, spec.target_pair_count, spec.seed ^ 0x7061_6972))
}

/// Arrival process. Times are in days.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArrivalConfig {
    pub horizon: f64,
    pub expected_arrivals: f64,
    /// Per-pair departure hazard, per year.
    pub departure_hazard: f64,
    pub seed: u64,
}

impl Default for ArrivalConfig {
    fn default() -> Self {
        ArrivalConfig { horizon: 3650.0, expected_arrivals: 990.0, departure_hazard: 0.29, seed: 0 }
    }
}

impl ArrivalConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("horizon", self.horizon),
            ("expected_arrivals", self.expected_arrivals),
            ("departure_hazard", self.departure_hazard),
        ] {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.horizon.is_finite() || !self.expected_arrivals.is_finite() {
            return Err(Error::InvalidConfig("horizon and expected_arrivals must be finite".into()));
        }
        Ok(())
    }

    pub fn mean_interarrival(&self) -> f64 {
        self.horizon / self.expected_arrivals
    }
}

/// Assigns times with a generator seeded from `cfg.seed`.
pub fn assign_arrival_departure(pairs: &[Pair], cfg: &ArrivalConfig) -> Result<Vec<Pair>> {
    assign_times(pairs, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

/// [`draw_times`] with a generator seeded from `cfg.seed`.
pub fn draw_arrival_departure(pairs: &[Pair], cfg: &ArrivalConfig) -> Result<Vec<Pair>> {
    draw_times(pairs, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

/// Pairs enter in a random order with exponential inter-arrival times of
/// mean `horizon / expected_arrivals`; each stays an exponential sojourn
/// with rate `departure_hazard` per year. Pairs arriving at or after the
/// horizon are dropped. Output is sorted by arrival.
pub fn assign_times<R: Rng + ?Sized>(pairs: &[Pair], cfg: &ArrivalConfig, rng: &mut R) -> Result<Vec<Pair>> {
    let mut out = draw_times(pairs, cfg, rng)?;
    out.retain(|p| p.arrival < cfg.horizon);
    Ok(out)
}

/// Like [`assign_times`] but keeps every pair, continuing the arrival
/// process past the horizon.
pub fn draw_times<R: Rng + ?Sized>(pairs: &[Pair], cfg: &ArrivalConfig, rng: &mut R) -> Result<Vec<Pair>> {
    cfg.validate()?;
    let gap = Exp::new(1.0 / cfg.mean_interarrival()).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let per_day = cfg.departure_hazard / 365.0;
    let sojourn = if per_day.is_finite() {
        Some(Exp::new(per_day).map_err(|e| Error::InvalidConfig(e.to_string()))?)
    } else {
        None
    };
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(rng);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(pairs.len());
    for i in order {
        t += gap.sample(rng);
        let stay = match &sojourn {
            Some(s) => s.sample(rng),
            None => 0.0,
        };
        let departure = if stay > 0.0 && t + stay > t { t + stay } else { t.next_up() };
        out.push(Pair { arrival: t, departure, ..pairs[i].clone() });
    }
    Ok(out)
}

/// Recipient ethnicity of every pair.
pub fn subpopulations(pairs: &[Pair]) -> Subpopulations {
    pairs.iter().map(|p| (p.id, p.ethnicity.clone())).collect()
}
