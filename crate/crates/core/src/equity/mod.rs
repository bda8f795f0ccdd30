//! Equity gaps between subpopulations and the Rawlsian weight search.

mod search;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hla::Paradigm;
use crate::kep::EquityWeights;
use crate::scalar::Scalar;
use crate::sim::{aggregate_replications, run_replications, PoolSource, ReplicationSummary, SimConfig};

pub use search::{rawlsian_weight_search, SearchConfig, SearchResult, SearchStatus, TraceRow};

/// Matching outcome of one group: mean arrivals `size`, fraction matched
/// `f` and compatibility `hla` on the scale used by the objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupOutcome<S> {
    pub size: S,
    pub f: S,
    pub hla: S,
}

/// Everything the gaps depend on: population scale `m`, the population
/// outcome and the per-subpopulation outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquityInputs<S> {
    pub m: S,
    pub population: GroupOutcome<S>,
    pub groups: BTreeMap<String, GroupOutcome<S>>,
}

impl EquityInputs<f64> {
    /// Replication means of `summary`; HLA is the mean matched score under
    /// `paradigm` divided by its maximum `z`. A group with arrivals but no
    /// matches has HLA 0.
    pub fn from_summary(summary: &ReplicationSummary, paradigm: Paradigm, z: u32, m: u32) -> Result<Self> {
        let metric = format!("HLA_{}", paradigm.name());
        let outcome = |group: Option<&str>| -> Result<GroupOutcome<f64>> {
            let label = group.unwrap_or("P");
            let size = summary.mean(group, "arrivals").unwrap_or(0.0);
            let f = summary.mean(group, "F").filter(|_| size > 0.0);
            let f = f.ok_or_else(|| Error::EmptySubpopulation(label.to_string()))?;
            let hla = summary.mean(group, &metric).unwrap_or(0.0) / z as f64;
            Ok(GroupOutcome { size, f, hla })
        };
        let mut groups = BTreeMap::new();
        for g in summary.groups.keys() {
            if let Ok(o) = outcome(Some(g)) {
                groups.insert(g.clone(), o);
            }
        }
        Ok(EquityInputs { m: m as f64, population: outcome(None)?, groups })
    }
}

impl<S: Scalar> EquityInputs<S> {
    pub fn group(&self, s: &str) -> Result<&GroupOutcome<S>> {
        self.groups.get(s).filter(|g| g.size > S::zero()).ok_or_else(|| Error::EmptySubpopulation(s.to_string()))
    }

    /// Objective score `F + HLA / m` of a group, or of the population for
    /// `None`.
    pub fn score(&self, s: Option<&str>) -> Result<S> {
        let g = match s {
            Some(s) => self.group(s)?,
            None => &self.population,
        };
        Ok(g.f.clone() + g.hla.clone() / self.m.clone())
    }
}

/// Runs the replication batch of `cfg` under `weights` and returns the
/// gap inputs together with the summary they came from.
pub fn simulate_equity_inputs<S: Scalar + Send + Sync>(
    source: &PoolSource,
    cfg: &SimConfig,
    groups: &[String],
    workers: usize,
    weights: &EquityWeights,
) -> Result<(EquityInputs<f64>, ReplicationSummary)> {
    let mut cfg = cfg.clone();
    cfg.objective.weights = weights.clone();
    let runs = run_replications::<S>(source, &cfg, groups, workers)?;
    let summary = aggregate_replications(&runs.into_iter().map(|r| r.metrics).collect::<Vec<_>>());
    let o = &cfg.objective;
    Ok((EquityInputs::from_summary(&summary, o.paradigm, o.z, o.m)?, summary))
}

/// `(size / m) * ((f_s - f_p) + (hla_s - hla_p) / m)`.
pub fn gap_value<S: Scalar>(size: S, m: S, f_diff: S, hla_diff: S) -> S {
    size / m.clone() * (f_diff + hla_diff / m)
}

/// Weighted difference between subpopulation `s` and the population.
pub fn equity_gap<S: Scalar>(inputs: &EquityInputs<S>, s: &str) -> Result<S> {
    let g = inputs.group(s)?;
    let p = &inputs.population;
    Ok(gap_value(g.size.clone(), inputs.m.clone(), g.f.clone() - p.f.clone(), g.hla.clone() - p.hla.clone()))
}

/// Sum of absolute gaps over `targets`.
pub fn total_inequity<S: Scalar>(inputs: &EquityInputs<S>, targets: &[String]) -> Result<S> {
    if targets.is_empty() {
        return Err(Error::InvalidConfig("equity target set is empty".into()));
    }
    targets.iter().try_fold(S::zero(), |acc, s| Ok(acc + equity_gap(inputs, s)?.abs()))
}

/// Gaps and total inequity of one weight vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquityReport {
    pub gaps: BTreeMap<String, f64>,
    pub total: f64,
    pub weights: BTreeMap<String, f64>,
}

impl EquityReport {
    pub fn new(inputs: &EquityInputs<f64>, targets: &[String], weights: BTreeMap<String, f64>) -> Result<Self> {
        let gaps = targets.iter().map(|s| Ok((s.clone(), equity_gap(inputs, s)?))).collect::<Result<_>>()?;
        Ok(EquityReport { gaps, total: total_inequity(inputs, targets)?, weights })
    }
}

/// The large subpopulations: groups whose mean arrivals reach `min_share`
/// of the population.
pub fn default_targets<S: Scalar>(inputs: &EquityInputs<S>, min_share: f64) -> Vec<String> {
    let total = inputs.population.size.as_f64();
    inputs
        .groups
        .iter()
        .filter(|(_, g)| g.size.as_f64() >= min_share * total && g.size > S::zero())
        .map(|(s, _)| s.clone())
        .collect()
}
