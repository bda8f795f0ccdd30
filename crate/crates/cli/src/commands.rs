use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use kep_core::compatibility::{build_graph, CompatibilityGraph, Pair, Registries};
use kep_core::equity::{rawlsian_weight_search, simulate_equity_inputs, EquityInputs, EquityReport, SearchConfig};
use kep_core::hla::{AlleleToAntigenMap, EpletRegistry};
use kep_core::kep::EquityWeights;
use kep_core::pool::{build_pairs, draw_arrival_departure, load_pool, write_pool_json, Catalogue, FrequencyTable};
use kep_core::sim::{
    aggregate_replications, export_paradigm_correlation, run_replications, write_correlation_csv,
    write_replication_csv, PoolSource, Replication, ReplicationSummary, SimConfig, METRICS,
};
use kep_core::Exact;

use crate::config::{ExperimentConfig, TimeSource};
use crate::failure::{Failure, Outcome};
use crate::manifest::Run;

/// Stream of the arrival generator, kept apart from the population stream.
const ARRIVAL_SALT: u64 = 0x6172_7269_7661_6c73;

fn seed_of(cfg: &ExperimentConfig) -> u64 {
    cfg.seed.unwrap_or_else(|| {
        let now = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap_or_default();
        now.as_nanos() as u64 ^ u64::from(std::process::id())
    })
}

fn registries(cfg: &ExperimentConfig, run: &mut Run) -> Outcome<Registries> {
    let map_path = cfg.require(&cfg.data.antigen_map, "antigen_map")?;
    let map = AlleleToAntigenMap::load(map_path)?;
    run.input("antigen_map", map_path)?;
    let eplets = match &cfg.data.eplet_registry {
        Some(path) => {
            let registry = EpletRegistry::load(path)?;
            run.input("eplet_registry", path)?;
            Some(registry)
        }
        None => None,
    };
    Ok(Registries::new(map, eplets))
}

fn pool_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.data.pool.clone().unwrap_or_else(|| cfg.out_dir().join("pool.json"))
}

fn pool(cfg: &ExperimentConfig, run: &mut Run) -> Outcome<Vec<Pair>> {
    let path = pool_path(cfg);
    let pairs = load_pool(&path)?;
    run.input("pool", &path)?;
    Ok(pairs)
}

fn frequencies(cfg: &ExperimentConfig, run: &mut Run) -> Outcome<FrequencyTable> {
    let path = cfg.require(&cfg.data.haplotype_frequencies, "haplotype_frequencies")?;
    let table = FrequencyTable::load(path)?;
    run.input("haplotype_frequencies", path)?;
    Ok(table)
}

fn graph(cfg: &ExperimentConfig, pairs: &[Pair], registries: &Registries) -> Outcome<CompatibilityGraph> {
    Ok(build_graph(pairs, &cfg.threshold()?, registries)?)
}

fn to_json(value: &impl serde::Serialize) -> Outcome<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure::runtime(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn count_by_group(pairs: &[Pair]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for p in pairs {
        *counts.entry(p.ethnicity.clone()).or_insert(0) += 1;
    }
    counts
}

/// Labels in the configured distribution plus any found in the pool.
fn group_labels(cfg: &ExperimentConfig, pairs: &[Pair]) -> Vec<String> {
    let mut labels: BTreeSet<String> = cfg.pool.ethnicity_distribution.keys().cloned().collect();
    labels.extend(pairs.iter().map(|p| p.ethnicity.clone()));
    labels.into_iter().collect()
}

pub fn generate_pool(cfg: &ExperimentConfig) -> Outcome<PathBuf> {
    let seed = seed_of(cfg);
    let mut run = Run::start("generate-pool", cfg, Some(seed))?;
    let registries = registries(cfg, &mut run)?;
    let spec = cfg.pool_spec(frequencies(cfg, &mut run)?, seed)?;
    let pairs = build_pairs(&spec, &cfg.pairing_threshold()?, &registries)?;
    let arrivals = cfg.arrivals(seed ^ ARRIVAL_SALT)?;
    let timed = draw_arrival_departure(&pairs, &arrivals)?;
    run.detail("paired", pairs.len());
    run.detail("arrived_within_horizon", timed.iter().filter(|p| p.arrival < arrivals.horizon).count());
    run.detail("pairs_by_group", count_by_group(&timed));
    run.write_with("pool.json", |w| write_pool_json(&timed, w))?;
    run.finish()
}

pub fn build_graph_cmd(cfg: &ExperimentConfig) -> Outcome<PathBuf> {
    let mut run = Run::start("build-graph", cfg, cfg.seed)?;
    let registries = registries(cfg, &mut run)?;
    let pairs = pool(cfg, &mut run)?;
    let graph = graph(cfg, &pairs, &registries)?;
    run.detail("node_count", graph.node_count());
    run.detail("arc_count", graph.arc_count());
    run.write("graph.json", &to_json(&graph)?)?;
    run.finish()
}

pub fn fig_data(cfg: &ExperimentConfig) -> Outcome<PathBuf> {
    let mut run = Run::start("fig-data", cfg, cfg.seed)?;
    let registries = registries(cfg, &mut run)?;
    let pairs = pool(cfg, &mut run)?;
    let graph = graph(cfg, &pairs, &registries)?;
    let rows = export_paradigm_correlation(&graph);
    run.detail("arc_count", graph.arc_count());
    run.detail("rows", rows.len());
    run.write_with("correlation.csv", |w| write_correlation_csv(&rows, w))?;
    run.finish()
}

/// Everything a replication batch needs.
struct Batch {
    source: PoolSource,
    sim: SimConfig,
    groups: Vec<String>,
    pairs: Vec<Pair>,
    workers: usize,
    exact: bool,
}

impl Batch {
    fn prepare(cfg: &ExperimentConfig, run: &mut Run, seed: u64) -> Outcome<Batch> {
        let registries = registries(cfg, run)?;
        let pairs = pool(cfg, run)?;
        let sim = cfg.sim_config(pairs.len() as u32, seed)?;
        let groups = group_labels(cfg, &pairs);
        let source = if cfg.simulation.regenerate_pool {
            let spec = cfg.pool_spec(frequencies(cfg, run)?, seed)?;
            PoolSource::Regenerate { spec, registries, arrivals: cfg.arrivals(seed ^ ARRIVAL_SALT)? }
        } else {
            let graph = graph(cfg, &pairs, &registries)?;
            run.detail("arc_count", graph.arc_count());
            match cfg.simulation.times {
                TimeSource::Pool => PoolSource::Timed { pairs: pairs.clone(), graph },
                TimeSource::Resample => {
                    PoolSource::Fixed { pairs: pairs.clone(), graph, arrivals: cfg.arrivals(seed ^ ARRIVAL_SALT)? }
                }
            }
        };
        run.detail("m", sim.objective.m);
        run.detail("replications", sim.replications);
        Ok(Batch { source, sim, groups, pairs, workers: cfg.workers(), exact: cfg.simulation.exact })
    }

    fn run(&self, sim: &SimConfig) -> Outcome<Vec<Replication>> {
        Ok(if self.exact {
            run_replications::<Exact>(&self.source, sim, &self.groups, self.workers)?
        } else {
            run_replications::<f64>(&self.source, sim, &self.groups, self.workers)?
        })
    }

    fn equity_inputs(&self, weights: &EquityWeights) -> kep_core::Result<(EquityInputs<f64>, ReplicationSummary)> {
        if self.exact {
            simulate_equity_inputs::<Exact>(&self.source, &self.sim, &self.groups, self.workers, weights)
        } else {
            simulate_equity_inputs::<f64>(&self.source, &self.sim, &self.groups, self.workers, weights)
        }
    }
}

pub fn simulate(cfg: &ExperimentConfig) -> Outcome<PathBuf> {
    let seed = seed_of(cfg);
    let mut run = Run::start("simulate", cfg, Some(seed))?;
    let batch = Batch::prepare(cfg, &mut run, seed)?;
    let replications = batch.run(&batch.sim)?;
    for r in &replications {
        let name = format!("replications/replication_{:03}.csv", r.index);
        run.write_with(&name, |w| write_replication_csv(r.index, &r.metrics, w))?;
        if cfg.simulation.write_events {
            run.write_with(&format!("events/replication_{:03}.jsonl", r.index), |w| r.log.write_jsonl(w))?;
        }
    }
    let summary = aggregate_replications(&replications.iter().map(|r| r.metrics.clone()).collect::<Vec<_>>());
    run.write("summary.json", &to_json(&summary)?)?;
    run.finish()
}

pub fn equity_search(cfg: &ExperimentConfig) -> Outcome<PathBuf> {
    let seed = seed_of(cfg);
    let mut run = Run::start("equity-search", cfg, Some(seed))?;
    let batch = Batch::prepare(cfg, &mut run, seed)?;
    let targets = match &cfg.equity.targets {
        Some(t) => t.clone(),
        None => {
            let counts = count_by_group(&batch.pairs);
            let total = batch.pairs.len() as f64;
            counts.into_iter().filter(|(_, n)| *n as f64 >= cfg.equity.min_share * total).map(|(g, _)| g).collect()
        }
    };
    let search =
        SearchConfig { targets: targets.clone(), increment: cfg.equity.increment, max_iters: cfg.equity.max_iters };
    search.validate()?;
    let mut evaluated: Vec<EquityInputs<f64>> = Vec::new();
    let result = rawlsian_weight_search(&search, |weights| {
        let (inputs, _) = batch.equity_inputs(weights)?;
        evaluated.push(inputs.clone());
        Ok(inputs)
    })?;
    let report = |i: usize| EquityReport::new(&evaluated[i], &targets, result.trace[i].weights.clone());
    let summary = serde_json::json!({
        "status": result.status,
        "stop_rule": result.stop_rule,
        "targets": targets,
        "iterations": result.trace.len() - 1,
        "best_iteration": result.best_iteration,
        "baseline": report(0)?,
        "best": report(result.best_iteration)?,
    });
    run.detail("status", result.status);
    run.write_with("search_trace.csv", |w| result.write_trace_csv(w))?;
    run.write_with("weights.json", |w| result.write_weights_json(w))?;
    run.write("equity_report.json", &to_json(&summary)?)?;
    run.finish()
}

fn cell(stat: Option<&kep_core::sim::Stat>, ci: bool) -> String {
    let Some(s) = stat else { return "n/a".into() };
    let Some(mean) = s.mean else { return "n/a".into() };
    let mut text = format!("{mean:.3}");
    if let (true, Some(lo), Some(hi)) = (ci, s.ci_low, s.ci_high) {
        let _ = write!(text, " ± {:.3}", (hi - lo) / 2.0);
    }
    if s.significant == Some(true) {
        text.push('*');
    }
    text
}

/// Markdown table of a simulation summary: one row per group, the
/// population first.
pub fn render_report(summary: &ReplicationSummary) -> String {
    let columns = ["F", "HLA_antigen", "HLA_allele", "HLA_eplet", "W", "L", "remaining", "arrivals"];
    let mut out = String::new();
    let _ = writeln!(out, "Replications: {}", summary.replications);
    if !summary.ci_available {
        let _ = writeln!(out, "Confidence intervals unavailable (fewer than two replications).");
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "| group | {} |", columns.join(" | "));
    let _ = writeln!(out, "|---|{}", "---|".repeat(columns.len()));
    let rows = std::iter::once(("P", &summary.population)).chain(summary.groups.iter().map(|(g, s)| (g.as_str(), s)));
    for (group, stats) in rows {
        let cells: Vec<String> = columns.iter().map(|m| cell(stats.get(*m), summary.ci_available)).collect();
        let _ = writeln!(out, "| {group} | {} |", cells.join(" | "));
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Cells are mean ± 95% CI half-width; * marks a group mean outside the population interval.");
    debug_assert!(columns.iter().all(|c| METRICS.contains(c)));
    out
}

pub fn report(cfg: &ExperimentConfig, summary_path: Option<&Path>) -> Outcome<PathBuf> {
    let mut run = Run::start("report", cfg, cfg.seed)?;
    let path = summary_path.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir().join("summary.json"));
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let summary: ReplicationSummary =
        serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    run.input("summary", &path)?;
    let table = render_report(&summary);
    print!("{table}");
    run.write("report.md", table.as_bytes())?;
    run.finish()
}

pub fn example_data(cfg: &ExperimentConfig, two_group: bool) -> Outcome<PathBuf> {
    let catalogue = if two_group { Catalogue::two_group()? } else { Catalogue::example()? };
    let mut run = Run::start("example-data", cfg, None)?;
    run.write_with("antigen_map.csv", |w| catalogue.map.write_csv(w))?;
    run.write_with("eplet_registry.csv", |w| catalogue.registry.write_csv(w))?;
    run.write_with("haplotype_frequencies.csv", |w| catalogue.frequencies.write_csv(w))?;
    let mut toml = String::from(
        "# Example experiment. Paths are relative to this file.\n\
         seed = 1\n\
         out = \"out\"\n\
         paradigm = \"antigen\"\n\
         loci = \"full\"\n\n\
         [data]\n\
         antigen_map = \"antigen_map.csv\"\n\
         eplet_registry = \"eplet_registry.csv\"\n\
         haplotype_frequencies = \"haplotype_frequencies.csv\"\n\n\
         [pool.ethnicity_distribution]\n",
    );
    for (group, p) in &catalogue.ethnicity_distribution {
        let _ = writeln!(toml, "{group} = {p}");
    }
    toml.push_str("\n[simulation]\nreplications = 100\n\n[equity]\nincrement = 0.001\nmax_iters = 1000\n");
    run.write("config.toml", toml.as_bytes())?;
    run.finish()
}
