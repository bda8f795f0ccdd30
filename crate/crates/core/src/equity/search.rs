use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{total_inequity, EquityInputs};
use crate::error::{Error, Result};
use crate::kep::EquityWeights;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Subpopulations whose weights may be raised and whose gaps count.
    pub targets: Vec<String>,
    pub increment: f64,
    /// Maximum number of weight raises.
    pub max_iters: usize,
}

impl SearchConfig {
    pub fn new(targets: Vec<String>) -> Self {
        SearchConfig { targets, increment: 0.001, max_iters: 1000 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.increment > 0.0 && self.increment.is_finite()) {
            return Err(Error::InvalidConfig(format!("increment must be positive, got {}", self.increment)));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidConfig("equity target set is empty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStatus {
    /// The stopping rule fired.
    Converged,
    /// `max_iters` raises without the stopping rule firing.
    NonConvergence,
}

/// One evaluated weight vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub weights: BTreeMap<String, f64>,
    /// `F(s) + HLA(s)/m` per target.
    pub scores: BTreeMap<String, f64>,
    pub population_score: f64,
    pub total_inequity: f64,
    /// Target raised after this evaluation.
    pub raised: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub weights: EquityWeights,
    pub best_iteration: usize,
    pub best_total: f64,
    pub baseline_total: f64,
    pub status: SearchStatus,
    /// Which deviations the stopping rule compares.
    pub stop_rule: String,
    pub trace: Vec<TraceRow>,
}

impl SearchResult {
    /// Columns: iteration, one weight and one score per target, population
    /// score, total inequity, raised target.
    pub fn write_trace_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let targets: Vec<&String> = self.trace.first().map(|r| r.weights.keys().collect()).unwrap_or_default();
        let mut header = vec!["iteration".to_string()];
        header.extend(targets.iter().map(|t| format!("weight_{t}")));
        header.extend(targets.iter().map(|t| format!("score_{t}")));
        header.extend(["score_P", "total_inequity", "raised"].map(String::from));
        out.write_record(&header)?;
        for row in &self.trace {
            let mut rec = vec![row.iteration.to_string()];
            rec.extend(targets.iter().map(|t| row.weights[*t].to_string()));
            rec.extend(targets.iter().map(|t| row.scores[*t].to_string()));
            rec.push(row.population_score.to_string());
            rec.push(row.total_inequity.to_string());
            rec.push(row.raised.clone().unwrap_or_default());
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io("<search trace>", e))?;
        Ok(())
    }

    pub fn write_weights_json(&self, w: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.weights)?;
        Ok(())
    }
}

/// Repeatedly raises by `increment` the weight of the target with the
/// lowest score `F(s) + HLA(s)/m`, evaluating every weight vector with
/// `evaluate`. Stops once a raised target sits further above the population
/// score than every target still below it sits beneath it. Returns the
/// evaluated weights with the lowest total inequity, earliest on ties.
pub fn rawlsian_weight_search<F>(cfg: &SearchConfig, mut evaluate: F) -> Result<SearchResult>
where
    F: FnMut(&EquityWeights) -> Result<EquityInputs<f64>>,
{
    cfg.validate()?;
    let mut raises: BTreeMap<String, usize> = cfg.targets.iter().map(|t| (t.clone(), 0)).collect();
    let weights_of = |raises: &BTreeMap<String, usize>| -> BTreeMap<String, f64> {
        raises.iter().map(|(t, k)| (t.clone(), 1.0 + *k as f64 * cfg.increment)).collect()
    };
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut best = 0;
    let status = loop {
        let iteration = trace.len();
        let weights = weights_of(&raises);
        let mut vector = EquityWeights::unit();
        for (t, w) in &weights {
            vector.set(t, *w);
        }
        let inputs = evaluate(&vector)?;
        let population_score = inputs.score(None)?;
        let scores: BTreeMap<String, f64> =
            cfg.targets.iter().map(|t| Ok((t.clone(), inputs.score(Some(t))?))).collect::<Result<_>>()?;
        let total = total_inequity(&inputs, &cfg.targets)?;
        if total < trace.get(best).map_or(f64::INFINITY, |r| r.total_inequity) {
            best = iteration;
        }
        trace.push(TraceRow { iteration, weights, scores, population_score, total_inequity: total, raised: None });

        let scores = &trace[iteration].scores;
        let deviation = |t: &str| scores[t] - population_score;
        let worst_below = cfg
            .targets
            .iter()
            .map(|t| -deviation(t))
            .filter(|d| *d > 0.0)
            .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
        let Some(worst_below) = worst_below else { break SearchStatus::Converged };
        let overshoot = raises.iter().any(|(t, k)| *k > 0 && deviation(t) > worst_below);
        if overshoot {
            break SearchStatus::Converged;
        }
        if iteration == cfg.max_iters {
            break SearchStatus::NonConvergence;
        }
        let lowest = cfg
            .targets
            .iter()
            .min_by(|a, b| scores[*a].total_cmp(&scores[*b]).then_with(|| a.cmp(b)))
            .expect("targets validated non-empty")
            .clone();
        *raises.get_mut(&lowest).expect("target") += 1;
        trace[iteration].raised = Some(lowest);
    };
    let mut weights = EquityWeights::unit();
    for (t, w) in &trace[best].weights {
        weights.set(t, *w);
    }
    Ok(SearchResult {
        weights,
        best_iteration: best,
        best_total: trace[best].total_inequity,
        baseline_total: trace[0].total_inequity,
        status,
        stop_rule: "raw score deviation from the population".into(),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equity::GroupOutcome;

    fn inputs(fa: f64, fb: f64) -> EquityInputs<f64> {
        let g = |f: f64| GroupOutcome { size: 50.0, f, hla: 0.5 };
        EquityInputs {
            m: 100.0,
            population: g((fa + fb) / 2.0),
            groups: [("a".to_string(), g(fa)), ("b".to_string(), g(fb))].into_iter().collect(),
        }
    }

    fn targets() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn equitable_baseline_stops_at_once() {
        let r = rawlsian_weight_search(&SearchConfig::new(targets()), |_| Ok(inputs(0.7, 0.7))).unwrap();
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.status, SearchStatus::Converged);
        assert_eq!(r.weights.get("a").unwrap(), 1.0);
        assert_eq!(r.weights.get("b").unwrap(), 1.0);
    }

    #[test]
    fn raises_the_disadvantaged_group_until_it_overtakes() {
        // b gains 0.01 in F per raise, a loses the same.
        let cfg = SearchConfig { increment: 0.001, ..SearchConfig::new(targets()) };
        let r = rawlsian_weight_search(&cfg, |w| {
            let k = ((w.get("b")? - 1.0) / 0.001).round();
            Ok(inputs(0.75 - 0.01 * k, 0.65 + 0.01 * k))
        })
        .unwrap();
        assert_eq!(r.status, SearchStatus::Converged);
        assert_eq!(r.best_iteration, 5);
        assert!((r.weights.get("b").unwrap() - 1.005).abs() < 1e-12);
        assert!(r.best_total < 1e-12);
        assert_eq!(r.trace.len(), 6);
        assert!(r.trace.iter().all(|row| row.weights["a"] == 1.0));
    }

    #[test]
    fn zero_increment_rejected() {
        let cfg = SearchConfig { increment: 0.0, ..SearchConfig::new(targets()) };
        assert!(rawlsian_weight_search(&cfg, |_| Ok(inputs(0.7, 0.7))).is_err());
    }

    #[test]
    fn non_convergence_keeps_best() {
        let cfg = SearchConfig { max_iters: 3, ..SearchConfig::new(targets()) };
        let r = rawlsian_weight_search(&cfg, |_| Ok(inputs(0.8, 0.6))).unwrap();
        assert_eq!(r.status, SearchStatus::NonConvergence);
        assert_eq!(r.trace.len(), 4);
        assert_eq!(r.best_iteration, 0);
        assert_eq!(r.best_total, r.baseline_total);
    }
}
