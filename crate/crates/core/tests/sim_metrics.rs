use kep_core::compatibility::{
    build_graph, Arc, BloodType, CompatibilityGraph, Pair, PairId, Registries, ThresholdConfig,
};
use kep_core::hla::{ArcScores, HlaTyping, LociSet, Paradigm};
use kep_core::pool::{build_pairs, ArrivalConfig, Catalogue, PoolSpec};
use kep_core::sim::{
    aggregate_replications, compute_metrics, export_paradigm_correlation, run_replications, run_simulation,
    write_metrics_csv, EventLog, PairEvent, PoolSource, RunMetrics, SimConfig, Stat,
};
use kep_core::Exact;
use proptest::prelude::*;

fn event(id: u32, eth: &str, departure: f64, matched: Option<(usize, usize, [u32; 3])>) -> PairEvent {
    PairEvent {
        id: PairId(id),
        ethnicity: eth.into(),
        arrival: 0.0,
        departure,
        matched_run: matched.map(|m| m.0),
        matched_time: matched.map(|m| m.0 as f64 * 100.0),
        donor_pair: matched.map(|_| PairId(99)),
        scores: matched.map(|(_, _, [a, b, c])| ArcScores { antigen: Some(a), allele: Some(b), eplet: Some(c) }),
        runs_present: matched.map_or(3, |m| m.1),
    }
}

fn fixture() -> EventLog {
    EventLog {
        horizon: 1000.0,
        pairs: vec![
            event(0, "a", 5000.0, Some((2, 2, [5, 4, 100]))),
            event(1, "a", 5000.0, Some((1, 1, [7, 6, 120]))),
            event(2, "a", 500.0, None),
            event(3, "b", 2000.0, None),
            event(4, "b", 900.0, None),
            event(5, "c", 5000.0, Some((4, 3, [3, 2, 90]))),
        ],
        runs: vec![],
    }
}

fn groups() -> Vec<String> {
    ["a", "b", "c", "d"].map(String::from).to_vec()
}

fn close(a: Option<f64>, b: f64) -> bool {
    a.is_some_and(|a| (a - b).abs() < 1e-12)
}

#[test]
fn hand_computed_three_groups() {
    let m = compute_metrics(&fixture(), &groups(), false).unwrap();
    // (group, arrivals, F, L, remaining, HLA antigen/allele/eplet, W)
    let table: [(Option<&str>, usize, f64, f64, f64, Option<[f64; 3]>, Option<f64>); 4] = [
        (Some("a"), 3, 2.0 / 3.0, 1.0 / 3.0, 0.0, Some([6.0, 5.0, 110.0]), Some(0.5)),
        (Some("b"), 2, 0.0, 0.5, 0.5, None, None),
        (Some("c"), 1, 1.0, 0.0, 0.0, Some([3.0, 2.0, 90.0]), Some(2.0)),
        (None, 6, 0.5, 1.0 / 3.0, 1.0 / 6.0, Some([5.0, 4.0, 310.0 / 3.0]), Some(1.0)),
    ];
    for (g, arrivals, f, l, rem, hla, w) in table {
        let got = match g {
            Some(g) => m.group(g).unwrap(),
            None => &m.population,
        };
        assert_eq!(got.arrivals, arrivals, "{g:?}");
        assert!(close(got.f, f) && close(got.l, l) && close(got.remaining, rem), "{g:?}: {got:?}");
        match hla {
            Some([a, b, c]) => {
                assert!(close(got.hla_antigen, a) && close(got.hla_allele, b) && close(got.hla_eplet, c), "{g:?}")
            }
            None => assert!(got.hla_antigen.is_none() && got.hla_eplet.is_none()),
        }
        match w {
            Some(w) => assert!(close(got.w, w), "{g:?}: {:?}", got.w),
            None => assert!(got.w.is_none()),
        }
    }
    let d = m.group("d").unwrap();
    assert_eq!(d.arrivals, 0);
    assert!(d.f.is_none() && d.l.is_none());

    let counted = compute_metrics(&fixture(), &groups(), true).unwrap();
    assert!(close(counted.population.w, 2.0));
    assert!(close(counted.group("a").unwrap().w, 1.5));
}

#[test]
fn unknown_label_is_rejected() {
    assert!(compute_metrics(&fixture(), &["a".to_string()], false).is_err());
}

fn blank(id: u32, eth: &str, arrival: f64, departure: f64) -> Pair {
    Pair {
        id: PairId(id),
        recipient_typing: HlaTyping::new(),
        donor_typing: HlaTyping::new(),
        recipient_blood: BloodType::O,
        donor_blood: BloodType::O,
        ethnicity: eth.into(),
        dsa: vec![],
        arrival,
        departure,
    }
}

fn manual_graph(n: u32, arcs: &[(u32, u32)]) -> CompatibilityGraph {
    let scores = ArcScores { antigen: Some(6), allele: Some(5), eplet: Some(100) };
    CompatibilityGraph::from_parts(
        Paradigm::Antigen,
        LociSet::full(),
        3,
        (0..n).map(PairId).collect(),
        arcs.iter().map(|&(f, t)| Arc { from: PairId(f), to: PairId(t), scores }).collect(),
    )
}

#[test]
fn all_matched_at_first_run() {
    let pairs: Vec<Pair> = (0..4).map(|i| blank(i, "x", 10.0 * i as f64, 4000.0)).collect();
    let g = manual_graph(4, &[(0, 1), (1, 0), (2, 3), (3, 2)]);
    let cfg = SimConfig::new(Paradigm::Antigen, LociSet::full(), 4, 0).unwrap();
    let log = run_simulation::<Exact>(&pairs, &g, &cfg).unwrap();
    let m = compute_metrics(&log, &["x".into()], false).unwrap();
    assert_eq!(m.population.f, Some(1.0));
    assert_eq!(m.population.w, Some(0.0));
    assert!(log.pairs.iter().all(|e| e.matched_run == Some(1)));
}

#[test]
fn nobody_matched_all_depart() {
    let pairs: Vec<Pair> = (0..4).map(|i| blank(i, "x", i as f64, 200.0 + i as f64)).collect();
    let g = manual_graph(4, &[]);
    let cfg = SimConfig::new(Paradigm::Antigen, LociSet::full(), 4, 0).unwrap();
    let log = run_simulation::<f64>(&pairs, &g, &cfg).unwrap();
    let m = compute_metrics(&log, &["x".into()], false).unwrap();
    assert_eq!(m.population.l, Some(1.0));
    assert_eq!(m.population.f, Some(0.0));
}

fn example_pool(n: usize, seed: u64) -> (Vec<Pair>, CompatibilityGraph, Vec<String>, ThresholdConfig) {
    let cat = Catalogue::example().unwrap();
    let reg = Registries::new(cat.map.clone(), Some(cat.registry.clone()));
    let mut spec = PoolSpec::from_catalogue(&cat, seed);
    spec.recipients = n * 13 / 10;
    spec.donors = n * 14 / 10;
    spec.target_pair_count = n;
    let cfg = ThresholdConfig::default_for(Paradigm::Antigen, LociSet::full()).unwrap();
    let pairs = build_pairs(&spec, &cfg, &reg).unwrap();
    let graph = build_graph(&pairs, &cfg, &reg).unwrap();
    (pairs, graph, cat.ethnicity_distribution.keys().cloned().collect(), cfg)
}

fn fixed_source(pairs: Vec<Pair>, graph: CompatibilityGraph) -> PoolSource {
    let arrivals = ArrivalConfig { expected_arrivals: pairs.len() as f64, ..ArrivalConfig::default() };
    PoolSource::Fixed { pairs, graph, arrivals }
}

fn csv_bytes(runs: &[RunMetrics]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_metrics_csv(runs, &mut buf).unwrap();
    buf
}

#[test]
fn replications_independent_of_worker_count() {
    let (pairs, graph, groups, _) = example_pool(50, 9);
    let source = fixed_source(pairs.clone(), graph);
    let mut cfg = SimConfig::new(Paradigm::Antigen, LociSet::full(), pairs.len() as u32, 17).unwrap();
    cfg.replications = 6;
    let one = run_replications::<f64>(&source, &cfg, &groups, 1).unwrap();
    let four = run_replications::<f64>(&source, &cfg, &groups, 4).unwrap();
    let again = run_replications::<f64>(&source, &cfg, &groups, 3).unwrap();
    for (a, b) in one.iter().zip(&four).chain(one.iter().zip(&again)) {
        assert_eq!(a.index, b.index);
        assert_eq!(a.log, b.log);
    }
    let m1: Vec<RunMetrics> = one.iter().map(|r| r.metrics.clone()).collect();
    let m4: Vec<RunMetrics> = four.iter().map(|r| r.metrics.clone()).collect();
    assert_eq!(csv_bytes(&m1), csv_bytes(&m4));
    assert_ne!(one[0].log, one[1].log);
}

#[test]
fn exact_and_float_agree_on_matchings() {
    let (pairs, graph, groups, _) = example_pool(60, 12);
    let source = fixed_source(pairs.clone(), graph);
    let mut cfg = SimConfig::new(Paradigm::Antigen, LociSet::full(), pairs.len() as u32, 3).unwrap();
    cfg.replications = 2;
    let f = run_replications::<f64>(&source, &cfg, &groups, 2).unwrap();
    let e = run_replications::<Exact>(&source, &cfg, &groups, 2).unwrap();
    for (a, b) in f.iter().zip(&e) {
        let ta: Vec<usize> = a.log.runs.iter().map(|r| r.transplants).collect();
        let tb: Vec<usize> = b.log.runs.iter().map(|r| r.transplants).collect();
        assert_eq!(ta, tb);
        assert_eq!(a.metrics.population.f, b.metrics.population.f);
    }
}

#[test]
fn correlation_rows_follow_arcs() {
    let (_, graph, _, _) = example_pool(20, 5);
    let rows = export_paradigm_correlation(&graph);
    assert_eq!(rows.len(), graph.arc_count());
    for (row, arc) in rows.iter().zip(graph.arcs()) {
        assert_eq!((row.from, row.to), (arc.from, arc.to));
        assert_eq!((row.antigen, row.allele, row.eplet), (arc.scores.antigen, arc.scores.allele, arc.scores.eplet));
    }
    assert!(export_paradigm_correlation(&manual_graph(3, &[])).is_empty());
}

#[test]
fn ci_closed_form() {
    let values = [0.61, 0.64, 0.70, 0.58, 0.66];
    let s = Stat::from_values(&values);
    let mean = 3.19 / 5.0;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
    let half = 1.96 * var.sqrt() / 5f64.sqrt();
    assert!((s.mean.unwrap() - mean).abs() < 1e-12);
    assert!((s.ci_low.unwrap() - (mean - half)).abs() < 1e-12);
    assert!((s.ci_high.unwrap() - (mean + half)).abs() < 1e-12);
    let flat = Stat::from_values(&[0.5; 4]);
    assert_eq!(flat.sd, Some(0.0));
    assert_eq!(flat.ci_low, flat.ci_high);
    let single = Stat::from_values(&[0.5]);
    assert!(single.sd.is_none() && single.ci_low.is_none());
}

#[test]
fn significance_against_population_interval() {
    let mut a = compute_metrics(&fixture(), &groups(), false).unwrap();
    let mut b = a.clone();
    a.population.f = Some(0.4);
    b.population.f = Some(0.6);
    let summary = aggregate_replications(&[a, b]);
    // population F: mean 0.5, sd 0.1414, CI 0.5 +- 0.196
    assert_eq!(summary.groups["a"]["F"].significant, Some(false));
    assert_eq!(summary.groups["b"]["F"].significant, Some(true));
    assert_eq!(summary.groups["c"]["F"].significant, Some(true));
    assert_eq!(summary.groups["a"]["L"].significant, Some(false));
    assert!(summary.ci_available);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn conservation_and_time_windows(seed in 0u64..1000, hazard in 0.05f64..3.0) {
        let (pairs, graph, groups, _) = example_pool(40, seed % 7);
        let arrivals = ArrivalConfig { expected_arrivals: 40.0, departure_hazard: hazard, ..ArrivalConfig::default() };
        let source = PoolSource::Fixed { pairs: pairs.clone(), graph, arrivals };
        let mut cfg = SimConfig::new(Paradigm::Antigen, LociSet::full(), 40, seed).unwrap();
        cfg.replications = 2;
        for rep in run_replications::<f64>(&source, &cfg, &groups, 2).unwrap() {
            for e in &rep.log.pairs {
                if let Some(t) = e.matched_time {
                    prop_assert!(e.arrival <= t && t < e.departure);
                    prop_assert!(t <= cfg.horizon);
                    prop_assert!(e.runs_present >= 1);
                }
            }
            let m = &rep.metrics;
            for g in std::iter::once(&m.population).chain(m.groups.values()) {
                if let (Some(f), Some(l), Some(r)) = (g.f, g.l, g.remaining) {
                    prop_assert!((f + l + r - 1.0).abs() < 1e-9);
                }
                prop_assert!(g.matched + g.departed <= g.arrivals);
            }
        }
    }

    #[test]
    fn halving_interval_never_reduces_runs(interval in 1.0f64..400.0) {
        let mut cfg = SimConfig::new(Paradigm::Antigen, LociSet::full(), 10, 0).unwrap();
        cfg.match_interval = interval;
        let coarse = cfg.run_times().len();
        cfg.match_interval = interval / 2.0;
        prop_assert!(cfg.run_times().len() >= coarse);
    }
}
