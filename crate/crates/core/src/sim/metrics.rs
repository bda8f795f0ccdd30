use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{EventLog, PairEvent};
use crate::error::{Error, Result};
use crate::hla::Paradigm;

/// Metric names in output order.
pub const METRICS: [&str; 8] = ["arrivals", "F", "L", "remaining", "HLA_antigen", "HLA_allele", "HLA_eplet", "W"];

/// Outcome of one subpopulation (or the whole population) in one
/// replication. Rates are `None` for an empty group; HLA and W are `None`
/// when nobody in the group was matched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub arrivals: usize,
    pub matched: usize,
    pub departed: usize,
    pub f: Option<f64>,
    pub l: Option<f64>,
    pub remaining: Option<f64>,
    pub hla_antigen: Option<f64>,
    pub hla_allele: Option<f64>,
    pub hla_eplet: Option<f64>,
    pub w: Option<f64>,
}

impl GroupMetrics {
    fn from_events<'a>(events: impl Iterator<Item = &'a PairEvent>, log: &EventLog, count_match_run: bool) -> Self {
        let (mut arrivals, mut matched, mut departed, mut wait) = (0usize, 0usize, 0usize, 0usize);
        let mut hla = [(0u64, 0usize); 3];
        for e in events {
            arrivals += 1;
            if e.matched_run.is_some() {
                matched += 1;
                wait += e.runs_present - usize::from(!count_match_run);
                if let Some(scores) = &e.scores {
                    for (k, p) in Paradigm::ALL.into_iter().enumerate() {
                        if let Some(v) = scores.get(p) {
                            hla[k].0 += v as u64;
                            hla[k].1 += 1;
                        }
                    }
                }
            } else if log.departed(e) {
                departed += 1;
            }
        }
        let rate = |k: usize| (arrivals > 0).then(|| k as f64 / arrivals as f64);
        let mean = |(sum, n): (u64, usize)| (n > 0).then(|| sum as f64 / n as f64);
        let f = rate(matched);
        let l = rate(departed);
        GroupMetrics {
            arrivals,
            matched,
            departed,
            f,
            l,
            remaining: rate(arrivals - matched - departed),
            hla_antigen: mean(hla[0]),
            hla_allele: mean(hla[1]),
            hla_eplet: mean(hla[2]),
            w: (matched > 0).then(|| wait as f64 / matched as f64),
        }
    }

    /// Value of a metric named as in [`METRICS`].
    pub fn get(&self, metric: &str) -> Option<f64> {
        match metric {
            "arrivals" => Some(self.arrivals as f64),
            "F" => self.f,
            "L" => self.l,
            "remaining" => self.remaining,
            "HLA_antigen" => self.hla_antigen,
            "HLA_allele" => self.hla_allele,
            "HLA_eplet" => self.hla_eplet,
            "W" => self.w,
            _ => None,
        }
    }

    /// Mean matched score under `paradigm`.
    pub fn hla(&self, paradigm: Paradigm) -> Option<f64> {
        match paradigm {
            Paradigm::Antigen => self.hla_antigen,
            Paradigm::Allele => self.hla_allele,
            Paradigm::Eplet => self.hla_eplet,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub population: GroupMetrics,
    pub groups: BTreeMap<String, GroupMetrics>,
}

impl RunMetrics {
    pub fn group(&self, name: &str) -> Result<&GroupMetrics> {
        self.groups.get(name).ok_or_else(|| Error::EmptySubpopulation(name.to_string()))
    }
}

/// Metrics for the population and each of `groups`. Every pair's ethnicity
/// must be one of `groups`; groups without arrivals get undefined rates.
pub fn compute_metrics(log: &EventLog, groups: &[String], count_match_run: bool) -> Result<RunMetrics> {
    let known: BTreeSet<&str> = groups.iter().map(String::as_str).collect();
    if let Some(e) = log.pairs.iter().find(|e| !known.contains(e.ethnicity.as_str())) {
        return Err(Error::InvariantViolation {
            pair: e.id,
            reason: format!("ethnicity {:?} not in partition", e.ethnicity),
        });
    }
    let population = GroupMetrics::from_events(log.pairs.iter(), log, count_match_run);
    let groups = known
        .into_iter()
        .map(|g| {
            let m = GroupMetrics::from_events(log.pairs.iter().filter(|e| e.ethnicity == g), log, count_match_run);
            (g.to_string(), m)
        })
        .collect();
    Ok(RunMetrics { population, groups })
}
