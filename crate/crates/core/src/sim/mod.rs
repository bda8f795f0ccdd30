//! Discrete-event simulation of a time period: a sequence of time-instant
//! problems at fixed match runs, with arrivals and departures in between.

mod batch;
mod metrics;
mod summary;

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::compatibility::{CompatibilityGraph, Pair, PairId, ThresholdConfig};
use crate::error::{Error, Result};
use crate::hla::{ArcScores, LociSet, Paradigm};
use crate::kep::{solve_instant_kep, Instance, ObjectiveConfig};
use crate::pool::subpopulations;
use crate::scalar::Scalar;

pub use batch::{
    export_paradigm_correlation, run_replications, write_correlation_csv, CorrelationRow, PoolSource, Replication,
};
pub use metrics::{compute_metrics, GroupMetrics, RunMetrics, METRICS};
pub use summary::{aggregate_replications, write_metrics_csv, write_replication_csv, ReplicationSummary, Stat};

/// Settings of one simulated time period. Times are in days.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub match_interval: f64,
    /// Start of the period; run `j` happens at `start + j * match_interval`.
    pub start: f64,
    pub replications: usize,
    pub threshold: ThresholdConfig,
    pub objective: ObjectiveConfig,
    pub max_cycle_len: usize,
    /// Count the matching run itself in W.
    pub wait_counts_match_run: bool,
    pub seed: u64,
}

impl SimConfig {
    /// Paper defaults for `paradigm` on `loci` with population scale `m`:
    /// ten years, quarterly runs, 100 replications, default thresholds.
    pub fn new(paradigm: Paradigm, loci: LociSet, m: u32, seed: u64) -> Result<Self> {
        let objective = ObjectiveConfig::new(paradigm, &loci, m)?;
        Ok(SimConfig {
            horizon: 3650.0,
            match_interval: 91.25,
            start: 0.0,
            replications: 100,
            threshold: ThresholdConfig::default_for(paradigm, loci)?,
            objective,
            max_cycle_len: 3,
            wait_counts_match_run: false,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.match_interval > 0.0) || !self.match_interval.is_finite() {
            return Err(Error::InvalidConfig("match_interval must be positive".into()));
        }
        if !(self.horizon.is_finite()) || self.run_times().is_empty() {
            return Err(Error::InvalidConfig("horizon must allow at least one match run".into()));
        }
        if self.replications < 1 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        if !(2..=3).contains(&self.max_cycle_len) {
            return Err(Error::InvalidConfig("max_cycle_len must be 2 or 3".into()));
        }
        self.threshold.validate()?;
        self.objective.validate()?;
        if self.objective.z != self.objective.paradigm.max_score(&self.threshold.loci)? {
            return Err(Error::InvalidConfig("objective z does not match paradigm and loci".into()));
        }
        Ok(())
    }

    /// Times of all match runs within the horizon.
    pub fn run_times(&self) -> Vec<f64> {
        let mut times = Vec::new();
        let mut j = 1;
        loop {
            let t = self.start + j as f64 * self.match_interval;
            if t > self.horizon + 1e-9 || !t.is_finite() {
                break;
            }
            times.push(t);
            j += 1;
        }
        times
    }
}

/// What happened to one pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEvent {
    pub id: PairId,
    pub ethnicity: String,
    pub arrival: f64,
    pub departure: f64,
    /// 1-based index of the match run that matched the pair.
    pub matched_run: Option<usize>,
    pub matched_time: Option<f64>,
    /// Pair whose donor gives to this pair's recipient.
    pub donor_pair: Option<PairId>,
    /// Scores of the arc into this recipient, all paradigms.
    pub scores: Option<ArcScores>,
    /// Match runs at which the pair was active, the matching run included.
    pub runs_present: usize,
}

/// Summary of one match run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub time: f64,
    pub active: usize,
    pub cycles: usize,
    pub selected: usize,
    pub transplants: usize,
    pub objective: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub horizon: f64,
    pub pairs: Vec<PairEvent>,
    pub runs: Vec<RunRecord>,
}

impl EventLog {
    /// One JSON object per pair and line.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for p in &self.pairs {
            serde_json::to_writer(&mut w, p)?;
            w.write_all(b"\n").map_err(|e| Error::io("<event log>", e))?;
        }
        Ok(())
    }

    /// Departed unmatched within the horizon.
    pub fn departed(&self, p: &PairEvent) -> bool {
        p.matched_run.is_none() && p.departure <= self.horizon
    }
}

/// Simulates one time period over timed `pairs` whose arcs are in `graph`.
/// Each run solves the time-instant problem over the pairs that have
/// arrived, not yet departed and not been matched. Pairs arriving at or
/// after the horizon are left out of the log.
pub fn run_simulation<S: Scalar>(pairs: &[Pair], graph: &CompatibilityGraph, cfg: &SimConfig) -> Result<EventLog> {
    cfg.validate()?;
    for p in pairs {
        p.validate()?;
        if !graph.contains(p.id) {
            return Err(Error::InvariantViolation {
                pair: p.id,
                reason: "pair missing from compatibility graph".into(),
            });
        }
    }
    let groups = subpopulations(pairs);
    let pairs: Vec<&Pair> = pairs.iter().filter(|p| p.arrival < cfg.horizon).collect();
    let mut events: Vec<PairEvent> = pairs
        .iter()
        .map(|p| PairEvent {
            id: p.id,
            ethnicity: p.ethnicity.clone(),
            arrival: p.arrival,
            departure: p.departure,
            matched_run: None,
            matched_time: None,
            donor_pair: None,
            scores: None,
            runs_present: 0,
        })
        .collect();
    let slot: HashMap<PairId, usize> = pairs.iter().enumerate().map(|(i, p)| (p.id, i)).collect();
    let mut runs = Vec::new();
    for (j, t) in cfg.run_times().into_iter().enumerate() {
        let run = j + 1;
        let mut active = Vec::new();
        for e in events.iter_mut() {
            if e.matched_run.is_none() && e.arrival <= t && t < e.departure {
                e.runs_present += 1;
                active.push(e.id);
            }
        }
        let wrap = |source: Error| Error::Run { run, source: Box::new(source) };
        let instance: Instance<S> =
            Instance::build(graph, &active, &groups, &cfg.objective, cfg.max_cycle_len).map_err(wrap)?;
        let solution = solve_instant_kep(&instance);
        for wc in &solution.cycles {
            for (u, v) in wc.cycle.transplants() {
                let e = &mut events[slot[&v]];
                e.matched_run = Some(run);
                e.matched_time = Some(t);
                e.donor_pair = Some(u);
                e.scores = graph.arc(u, v).map(|a| a.scores);
            }
        }
        runs.push(RunRecord {
            run,
            time: t,
            active: active.len(),
            cycles: instance.cycles.len(),
            selected: solution.cycles.len(),
            transplants: solution.transplants(),
            objective: solution.value.to_string(),
        });
    }
    Ok(EventLog { horizon: cfg.horizon, pairs: events, runs })
}
