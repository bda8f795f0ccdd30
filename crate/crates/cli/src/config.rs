use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kep_core::compatibility::{BloodType, ThresholdConfig};
use kep_core::hla::{LociSet, Paradigm};
use kep_core::kep::{EquityWeights, ObjectiveConfig};
use kep_core::pool::{default_blood_types, ArrivalConfig, FrequencyTable, PoolSpec};
use kep_core::sim::SimConfig;
use serde::{Deserialize, Serialize};

use crate::failure::{Failure, Outcome};

/// One experiment, as read from TOML. Relative paths are resolved against
/// the directory of the config file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub paradigm: Option<String>,
    pub loci: Option<String>,
    pub workers: Option<usize>,
    pub data: DataPaths,
    pub pool: PoolSection,
    pub arrivals: ArrivalSection,
    pub simulation: SimSection,
    pub equity: EquitySection,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub antigen_map: Option<PathBuf>,
    pub eplet_registry: Option<PathBuf>,
    pub haplotype_frequencies: Option<PathBuf>,
    pub pool: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolSection {
    pub target_pair_count: usize,
    pub recipients: usize,
    pub donors: usize,
    pub dsa_rate: f64,
    pub dsa_draws: usize,
    pub dsa_antigen_share: f64,
    /// Paradigm whose threshold decides internal incompatibility.
    pub pairing_paradigm: String,
    pub ethnicity_distribution: BTreeMap<String, f64>,
    pub blood_type_frequencies: Option<BTreeMap<String, f64>>,
}

impl Default for PoolSection {
    fn default() -> Self {
        let spec = PoolSpec::new(BTreeMap::new(), FrequencyTable::new(), 0);
        PoolSection {
            target_pair_count: spec.target_pair_count,
            recipients: spec.recipients,
            donors: spec.donors,
            dsa_rate: spec.dsa_rate,
            dsa_draws: spec.dsa_draws,
            dsa_antigen_share: spec.dsa_antigen_share,
            pairing_paradigm: "antigen".into(),
            ethnicity_distribution: BTreeMap::new(),
            blood_type_frequencies: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrivalSection {
    pub horizon: f64,
    pub expected_arrivals: f64,
    pub departure_hazard: f64,
}

impl Default for ArrivalSection {
    fn default() -> Self {
        let a = ArrivalConfig::default();
        ArrivalSection {
            horizon: a.horizon,
            expected_arrivals: a.expected_arrivals,
            departure_hazard: a.departure_hazard,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeSource {
    /// Redraw arrival and departure times per replication.
    Resample,
    /// Use the times stored in the pool file.
    Pool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub horizon: f64,
    pub match_interval: f64,
    pub start: f64,
    pub replications: usize,
    pub max_cycle_len: usize,
    pub min_score: Option<u32>,
    /// Population scale; defaults to the number of pairs in the pool.
    pub m: Option<u32>,
    pub wait_counts_match_run: bool,
    pub times: TimeSource,
    pub regenerate_pool: bool,
    pub weights: Option<BTreeMap<String, f64>>,
    pub weights_file: Option<PathBuf>,
    pub write_events: bool,
    /// Solve with exact rational weights instead of `f64`.
    pub exact: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            horizon: 3650.0,
            match_interval: 91.25,
            start: 0.0,
            replications: 100,
            max_cycle_len: 3,
            min_score: None,
            m: None,
            wait_counts_match_run: false,
            times: TimeSource::Resample,
            regenerate_pool: false,
            weights: None,
            weights_file: None,
            write_events: false,
            exact: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquitySection {
    pub targets: Option<Vec<String>>,
    pub increment: f64,
    pub max_iters: usize,
    /// Share of mean arrivals a group needs to be a default target.
    pub min_share: f64,
}

impl Default for EquitySection {
    fn default() -> Self {
        EquitySection { targets: None, increment: 0.001, max_iters: 1000, min_share: 0.05 }
    }
}

/// Command-line values that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub paradigm: Option<String>,
    pub loci: Option<String>,
    pub replications: Option<usize>,
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Outcome<Self> {
        let mut cfg = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
                let mut cfg: ExperimentConfig = toml::from_str(&text)
                    .map_err(|e| Failure::config(format!("{}: {}", path.display(), e.message())))?;
                cfg.resolve_paths(path.parent().unwrap_or(Path::new("")));
                cfg
            }
            None => ExperimentConfig::default(),
        };
        let o = overrides.clone();
        cfg.seed = o.seed.or(cfg.seed);
        cfg.out = o.out.or(cfg.out);
        cfg.paradigm = o.paradigm.or(cfg.paradigm);
        cfg.loci = o.loci.or(cfg.loci);
        cfg.workers = o.workers.or(cfg.workers);
        if let Some(r) = o.replications {
            cfg.simulation.replications = r;
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut Option<PathBuf>| {
            if let Some(path) = p.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        join(&mut self.out);
        join(&mut self.data.antigen_map);
        join(&mut self.data.eplet_registry);
        join(&mut self.data.haplotype_frequencies);
        join(&mut self.data.pool);
        join(&mut self.simulation.weights_file);
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn paradigm(&self) -> Outcome<Paradigm> {
        Ok(self.paradigm.as_deref().unwrap_or("antigen").parse()?)
    }

    pub fn loci(&self) -> Outcome<LociSet> {
        Ok(self.loci.as_deref().unwrap_or("full").parse()?)
    }

    pub fn workers(&self) -> usize {
        self.workers.filter(|w| *w > 0).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn threshold(&self) -> Outcome<ThresholdConfig> {
        let paradigm = self.paradigm()?;
        let loci = self.loci()?;
        Ok(match self.simulation.min_score {
            Some(min) => ThresholdConfig::new(paradigm, loci, min)?,
            None => ThresholdConfig::default_for(paradigm, loci)?,
        })
    }

    pub fn pairing_threshold(&self) -> Outcome<ThresholdConfig> {
        let paradigm: Paradigm = self.pool.pairing_paradigm.parse()?;
        Ok(ThresholdConfig::default_for(paradigm, self.loci()?)?)
    }

    pub fn pool_spec(&self, frequencies: FrequencyTable, seed: u64) -> Outcome<PoolSpec> {
        let p = &self.pool;
        if p.ethnicity_distribution.is_empty() {
            return Err(Failure::config("pool.ethnicity_distribution is empty"));
        }
        let mut spec = PoolSpec::new(p.ethnicity_distribution.clone(), frequencies, seed);
        spec.target_pair_count = p.target_pair_count;
        spec.recipients = p.recipients;
        spec.donors = p.donors;
        spec.dsa_rate = p.dsa_rate;
        spec.dsa_draws = p.dsa_draws;
        spec.dsa_antigen_share = p.dsa_antigen_share;
        spec.loci = self.loci()?;
        spec.blood_type_frequencies = match &p.blood_type_frequencies {
            Some(table) => table.iter().map(|(k, v)| Ok((k.parse::<BloodType>()?, *v))).collect::<Outcome<_>>()?,
            None => default_blood_types(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn arrivals(&self, seed: u64) -> Outcome<ArrivalConfig> {
        let a = &self.arrivals;
        let cfg = ArrivalConfig {
            horizon: a.horizon,
            expected_arrivals: a.expected_arrivals,
            departure_hazard: a.departure_hazard,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn weights(&self) -> Outcome<EquityWeights> {
        let mut weights = EquityWeights::unit();
        if let Some(path) = &self.simulation.weights_file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::data(format!("cannot read weights {}: {e}", path.display())))?;
            weights = serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        }
        for (group, w) in self.simulation.weights.iter().flatten() {
            weights.set(group, *w);
        }
        weights.validate()?;
        Ok(weights)
    }

    pub fn sim_config(&self, m: u32, seed: u64) -> Outcome<SimConfig> {
        let s = &self.simulation;
        let paradigm = self.paradigm()?;
        let loci = self.loci()?;
        let cfg = SimConfig {
            horizon: s.horizon,
            match_interval: s.match_interval,
            start: s.start,
            replications: s.replications,
            threshold: self.threshold()?,
            objective: ObjectiveConfig::new(paradigm, &loci, s.m.unwrap_or(m).max(1))?.with_weights(self.weights()?),
            max_cycle_len: s.max_cycle_len,
            wait_counts_match_run: s.wait_counts_match_run,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, name: &str) -> Outcome<&'a PathBuf> {
        path.as_ref().ok_or_else(|| Failure::config(format!("data.{name} is not set")))
    }
}
