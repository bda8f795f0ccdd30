use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::{GroupMetrics, RunMetrics, METRICS};
use crate::error::Result;

/// Across-replication statistics of one metric. `n` counts replications
/// where the metric was defined; `sd` and the interval need `n >= 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Group mean outside the population interval. Not set for the
    /// population itself.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub significant: Option<bool>,
}

impl Stat {
    /// Mean, sample SD and `mean +- 1.96 sd / sqrt(n)`.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Stat { n, mean: None, sd: None, ci_low: None, ci_high: None, significant: None };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let (sd, ci_low, ci_high) = if n >= 2 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let sd = var.sqrt();
            let half = 1.96 * sd / (n as f64).sqrt();
            (Some(sd), Some(mean - half), Some(mean + half))
        } else {
            (None, None, None)
        };
        Stat { n, mean: Some(mean), sd, ci_low, ci_high, significant: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub replications: usize,
    /// Intervals need at least two replications.
    pub ci_available: bool,
    pub population: BTreeMap<String, Stat>,
    pub groups: BTreeMap<String, BTreeMap<String, Stat>>,
}

impl ReplicationSummary {
    pub fn mean(&self, group: Option<&str>, metric: &str) -> Option<f64> {
        let stats = match group {
            None => &self.population,
            Some(g) => self.groups.get(g)?,
        };
        stats.get(metric)?.mean
    }

    pub fn write_json(&self, w: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

fn stats<'a>(rows: impl Iterator<Item = &'a GroupMetrics> + Clone) -> BTreeMap<String, Stat> {
    METRICS
        .iter()
        .map(|&m| {
            let values: Vec<f64> = rows.clone().filter_map(|r| r.get(m)).collect();
            (m.to_string(), Stat::from_values(&values))
        })
        .collect()
}

/// Mean, SD and 95% interval per metric; a group metric is flagged when
/// its mean lies outside the population interval.
pub fn aggregate_replications(runs: &[RunMetrics]) -> ReplicationSummary {
    let population = stats(runs.iter().map(|r| &r.population));
    let names: Vec<&String> = runs.first().map(|r| r.groups.keys().collect()).unwrap_or_default();
    let groups = names
        .into_iter()
        .map(|g| {
            let mut s = stats(runs.iter().filter_map(|r| r.groups.get(g)));
            for (metric, stat) in s.iter_mut() {
                let pop = &population[metric];
                if let (Some(mean), Some(lo), Some(hi)) = (stat.mean, pop.ci_low, pop.ci_high) {
                    stat.significant = Some(mean < lo || mean > hi);
                }
            }
            (g.clone(), s)
        })
        .collect();
    ReplicationSummary { replications: runs.len(), ci_available: runs.len() >= 2, population, groups }
}

/// One row per (replication, subpopulation, metric); undefined values are
/// left empty. The population is labelled `P`.
pub fn write_metrics_csv(runs: &[RunMetrics], w: impl Write) -> Result<()> {
    write_rows(runs.iter().enumerate(), w)
}

/// The rows of [`write_metrics_csv`] for a single replication.
pub fn write_replication_csv(index: usize, run: &RunMetrics, w: impl Write) -> Result<()> {
    write_rows(std::iter::once((index, run)), w)
}

fn write_rows<'a>(runs: impl Iterator<Item = (usize, &'a RunMetrics)>, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["replication", "subpopulation", "metric", "value"])?;
    for (i, run) in runs {
        let rows = std::iter::once(("P", &run.population)).chain(run.groups.iter().map(|(g, m)| (g.as_str(), m)));
        for (group, m) in rows {
            for metric in METRICS {
                let value = m.get(metric).map(|v| v.to_string()).unwrap_or_default();
                out.write_record([i.to_string().as_str(), group, metric, value.as_str()])?;
            }
        }
    }
    out.flush().map_err(|e| crate::error::Error::io("<metrics csv>", e))?;
    Ok(())
}
