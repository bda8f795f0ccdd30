use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compute_metrics, run_simulation, EventLog, RunMetrics, SimConfig};
use crate::compatibility::{build_graph, CompatibilityGraph, Pair, PairId, Registries};
use crate::error::{Error, Result};
use crate::pool::{assign_times, build_pairs, ArrivalConfig, PoolSpec};
use crate::scalar::Scalar;

/// Where the pairs of each replication come from.
#[derive(Clone, Debug)]
pub enum PoolSource {
    /// One pair set and graph; only times are redrawn per replication.
    Fixed { pairs: Vec<Pair>, graph: CompatibilityGraph, arrivals: ArrivalConfig },
    /// One pair set with its stored times, reused unchanged.
    Timed { pairs: Vec<Pair>, graph: CompatibilityGraph },
    /// A new population, pairing and graph per replication.
    Regenerate { spec: PoolSpec, registries: Registries, arrivals: ArrivalConfig },
}

/// Output of one replication.
#[derive(Clone, Debug)]
pub struct Replication {
    pub index: usize,
    pub log: EventLog,
    pub metrics: RunMetrics,
}

fn replication_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn replicate<S: Scalar>(source: &PoolSource, cfg: &SimConfig, groups: &[String], index: usize) -> Result<Replication> {
    let mut rng = replication_rng(cfg.seed, index);
    let (timed, built);
    let graph = match source {
        PoolSource::Fixed { pairs, graph, arrivals } => {
            timed = assign_times(pairs, arrivals, &mut rng)?;
            graph
        }
        PoolSource::Timed { pairs, graph } => {
            timed = pairs.clone();
            graph
        }
        PoolSource::Regenerate { spec, registries, arrivals } => {
            let spec = PoolSpec { seed: rng.random(), ..spec.clone() };
            let pairs = build_pairs(&spec, &cfg.threshold, registries)?;
            built = build_graph(&pairs, &cfg.threshold, registries)?;
            timed = assign_times(&pairs, arrivals, &mut rng)?;
            &built
        }
    };
    let log = run_simulation::<S>(&timed, graph, cfg)?;
    let metrics = compute_metrics(&log, groups, cfg.wait_counts_match_run)?;
    Ok(Replication { index, log, metrics })
}

/// Runs `cfg.replications` independent periods on `workers` threads.
/// Replication `i` draws from its own stream of `cfg.seed`, so results do
/// not depend on the worker count.
pub fn run_replications<S: Scalar + Send + Sync>(
    source: &PoolSource,
    cfg: &SimConfig,
    groups: &[String],
    workers: usize,
) -> Result<Vec<Replication>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| (0..cfg.replications).into_par_iter().map(|i| replicate::<S>(source, cfg, groups, i)).collect())
}

/// Scores of one arc under all paradigms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub from: PairId,
    pub to: PairId,
    pub antigen: Option<u32>,
    pub allele: Option<u32>,
    pub eplet: Option<u32>,
}

/// One row per arc of `graph`.
pub fn export_paradigm_correlation(graph: &CompatibilityGraph) -> Vec<CorrelationRow> {
    graph
        .arcs()
        .iter()
        .map(|a| CorrelationRow {
            from: a.from,
            to: a.to,
            antigen: a.scores.antigen,
            allele: a.scores.allele,
            eplet: a.scores.eplet,
        })
        .collect()
}

pub fn write_correlation_csv(rows: &[CorrelationRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["from", "to", "antigen", "allele", "eplet"])?;
    let cell = |v: Option<u32>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        out.write_record([r.from.0.to_string(), r.to.0.to_string(), cell(r.antigen), cell(r.allele), cell(r.eplet)])?;
    }
    out.flush().map_err(|e| Error::io("<correlation csv>", e))?;
    Ok(())
}
