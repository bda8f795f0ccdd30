use std::collections::BTreeMap;

use kep_core::compatibility::{
    build_graph, donor_recipient_compatible, BloodType, DsaEntry, Registries, ThresholdConfig,
};
use kep_core::hla::{Allele, HlaTyping, LociSet, Locus, Paradigm};
use kep_core::pool::{
    assign_arrival_departure, build_pairs, draw_arrival_departure, generate_synthetic_population, hopcroft_karp,
    load_pool, max_cardinality_incompatible_pairing, pool_from_csv, save_pool, ArrivalConfig, Catalogue,
    FrequencyTable, PersonRecord, PoolSpec, Role,
};
use kep_core::sim::{compute_metrics, run_simulation, SimConfig};
use kep_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exhaustive maximum matching: try every assignment of each left vertex to
/// a free neighbour or to nothing.
fn brute_matching(left: &[Vec<usize>], used: &mut Vec<bool>, u: usize) -> usize {
    if u == left.len() {
        return 0;
    }
    let mut best = brute_matching(left, used, u + 1);
    for &v in &left[u] {
        if !used[v] {
            used[v] = true;
            best = best.max(1 + brute_matching(left, used, u + 1));
            used[v] = false;
        }
    }
    best
}

fn random_bipartite(rng: &mut ChaCha8Rng, n: usize, m: usize, p: f64) -> Vec<Vec<usize>> {
    (0..n).map(|_| (0..m).filter(|_| rng.random_bool(p)).collect()).collect()
}

fn check_matching(left: &[Vec<usize>], right: usize, mate: &[Option<usize>]) -> usize {
    let mut seen = vec![false; right];
    for (u, m) in mate.iter().enumerate() {
        if let Some(v) = *m {
            assert!(left[u].contains(&v), "matched along a non-edge");
            assert!(!seen[v], "right vertex used twice");
            seen[v] = true;
        }
    }
    mate.iter().flatten().count()
}

#[test]
fn hopcroft_karp_matches_brute_force_8x8() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let p = rng.random_range(0.05..0.6);
        let left = random_bipartite(&mut rng, 8, 8, p);
        let mate = hopcroft_karp(&left, 8);
        let size = check_matching(&left, 8, &mate);
        assert_eq!(size, brute_matching(&left, &mut vec![false; 8], 0));
    }
}

proptest! {
    #[test]
    fn hopcroft_karp_is_maximum(n in 0usize..8, m in 0usize..8, p in 0.0f64..1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let left = random_bipartite(&mut rng, n, m, p);
        let mate = hopcroft_karp(&left, m);
        prop_assert_eq!(check_matching(&left, m, &mate), brute_matching(&left, &mut vec![false; m], 0));
    }
}

fn person(id: u32, role: Role, typing: &str, blood: BloodType, dsa: &[&str]) -> PersonRecord {
    PersonRecord {
        id,
        role,
        typing: HlaTyping::parse(typing).unwrap(),
        blood,
        ethnicity: "x".into(),
        dsa: dsa.iter().map(|d| d.parse().unwrap()).collect(),
    }
}

fn b_only() -> ThresholdConfig {
    ThresholdConfig::new(Paradigm::Antigen, LociSet::new([Locus::B]), 0).unwrap()
}

#[test]
fn pairing_examples() {
    let reg = Registries::default();
    let r = [person(0, Role::Recipient, "B07/B08", BloodType::AB, &[])];
    let d = [person(1, Role::Donor, "B07/B08", BloodType::O, &[])];
    assert!(max_cardinality_incompatible_pairing(&r, &d, &b_only(), &reg).unwrap().is_empty());

    let r = [person(0, Role::Recipient, "B07/B08", BloodType::AB, &["B44"])];
    let d = [person(1, Role::Donor, "B44/B08", BloodType::O, &[])];
    let pairs = max_cardinality_incompatible_pairing(&r, &d, &b_only(), &reg).unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].dsa, vec![DsaEntry(Allele::antigen(Locus::B, "44"))]);
}

fn example_registries(cat: &Catalogue) -> Registries {
    Registries::new(cat.map.clone(), Some(cat.registry.clone()))
}

#[test]
fn generated_pairs_are_internally_incompatible() {
    let cat = Catalogue::example().unwrap();
    let reg = example_registries(&cat);
    let mut spec = PoolSpec::from_catalogue(&cat, 5);
    spec.recipients = 200;
    spec.donors = 210;
    spec.target_pair_count = 1000;
    let cfg = ThresholdConfig::default_for(Paradigm::Antigen, LociSet::full()).unwrap();
    let pairs = build_pairs(&spec, &cfg, &reg).unwrap();
    assert!(!pairs.is_empty());
    for p in &pairs {
        let own = donor_recipient_compatible(
            &p.donor_typing,
            p.donor_blood,
            &p.recipient_typing,
            p.recipient_blood,
            &p.dsa,
            &cfg,
            &reg,
        )
        .unwrap();
        assert!(!own, "pair {} is directly compatible", p.id);
    }
    let again = build_pairs(&spec, &cfg, &reg).unwrap();
    assert_eq!(pairs, again);
}

#[test]
fn ethnicity_frequencies_within_three_sigma() {
    let cat = Catalogue::example().unwrap();
    let mut spec = PoolSpec::from_catalogue(&cat, 21);
    spec.ethnicity_distribution = BTreeMap::from([("a".to_string(), 0.7), ("b".to_string(), 0.3)]);
    let mut freq = FrequencyTable::new();
    for eth in ["a", "b"] {
        for locus in Locus::ALL {
            freq.insert(eth, Allele::allele(locus, "01:01"), 0.5);
            freq.insert(eth, Allele::allele(locus, "02:01"), 0.5);
        }
    }
    spec.haplotype_frequencies = freq;
    spec.recipients = 1000;
    spec.donors = 1000;
    let (r, d) = generate_synthetic_population(&spec).unwrap();
    let n = (r.len() + d.len()) as f64;
    let count = r.iter().chain(&d).filter(|p| p.ethnicity == "a").count() as f64;
    let sigma = (n * 0.7 * 0.3).sqrt();
    assert!((count - 0.7 * n).abs() <= 3.0 * sigma, "count {count} of {n}");
    assert!(d.iter().all(|p| p.dsa.is_empty()));
}

#[test]
fn degenerate_population_is_identical() {
    let mut freq = FrequencyTable::new();
    for locus in Locus::ALL {
        freq.insert("x", Allele::allele(locus, "01:01"), 1.0);
    }
    let mut spec = PoolSpec::new(BTreeMap::from([("x".to_string(), 1.0)]), freq, 3);
    spec.recipients = 30;
    spec.donors = 30;
    let (r, d) = generate_synthetic_population(&spec).unwrap();
    let first = &r[0].typing;
    assert!(r.iter().chain(&d).all(|p| &p.typing == first));
}

#[test]
fn bad_distribution_is_rejected() {
    let cat = Catalogue::example().unwrap();
    let mut spec = PoolSpec::from_catalogue(&cat, 1);
    spec.ethnicity_distribution = BTreeMap::from([("a".to_string(), 0.7), ("b".to_string(), 0.2)]);
    assert!(matches!(generate_synthetic_population(&spec), Err(Error::InvalidDistribution(_))));
}

fn blank_pairs(n: u32) -> Vec<kep_core::compatibility::Pair> {
    (0..n)
        .map(|i| kep_core::compatibility::Pair {
            id: kep_core::compatibility::PairId(i),
            recipient_typing: HlaTyping::new(),
            donor_typing: HlaTyping::new(),
            recipient_blood: BloodType::O,
            donor_blood: BloodType::O,
            ethnicity: "x".into(),
            dsa: vec![],
            arrival: 0.0,
            departure: 1.0,
        })
        .collect()
}

#[test]
fn interarrival_mean_within_five_percent() {
    let cfg = ArrivalConfig { horizon: 3650.0, expected_arrivals: 990.0, departure_hazard: 0.29, seed: 8 };
    let timed = draw_arrival_departure(&blank_pairs(10_000), &cfg).unwrap();
    let mean = timed.last().unwrap().arrival / timed.len() as f64;
    let expected = 3650.0 / 990.0;
    assert!((mean - expected).abs() / expected < 0.05, "mean {mean}");
    assert!(timed.windows(2).all(|w| w[0].arrival <= w[1].arrival));
    assert!(timed.iter().all(|p| p.arrival < p.departure));
    assert_eq!(timed, draw_arrival_departure(&blank_pairs(10_000), &cfg).unwrap());
    let kept = assign_arrival_departure(&blank_pairs(10_000), &cfg).unwrap();
    assert!(kept.iter().all(|p| p.arrival < 3650.0));
    assert!(kept.len() < 10_000);
}

#[test]
fn infinite_hazard_gives_no_matches() {
    let cat = Catalogue::example().unwrap();
    let reg = example_registries(&cat);
    let mut spec = PoolSpec::from_catalogue(&cat, 2);
    spec.recipients = 150;
    spec.donors = 160;
    let cfg = ThresholdConfig::default_for(Paradigm::Antigen, LociSet::full()).unwrap();
    let pairs = build_pairs(&spec, &cfg, &reg).unwrap();
    let arrivals = ArrivalConfig {
        expected_arrivals: pairs.len() as f64,
        departure_hazard: f64::INFINITY,
        ..ArrivalConfig::default()
    };
    let timed = assign_arrival_departure(&pairs, &arrivals).unwrap();
    let graph = build_graph(&timed, &cfg, &reg).unwrap();
    assert!(graph.arc_count() > 0);
    let sim = SimConfig::new(Paradigm::Antigen, LociSet::full(), timed.len() as u32, 1).unwrap();
    let log = run_simulation::<f64>(&timed, &graph, &sim).unwrap();
    let groups: Vec<String> = cat.ethnicity_distribution.keys().cloned().collect();
    let metrics = compute_metrics(&log, &groups, false).unwrap();
    assert_eq!(metrics.population.f, Some(0.0));
}

#[test]
fn save_load_round_trip() {
    let cat = Catalogue::example().unwrap();
    let reg = example_registries(&cat);
    let mut spec = PoolSpec::from_catalogue(&cat, 4);
    spec.recipients = 60;
    spec.donors = 60;
    let cfg = ThresholdConfig::default_for(Paradigm::Antigen, LociSet::full()).unwrap();
    let pairs = build_pairs(&spec, &cfg, &reg).unwrap();
    let timed = draw_arrival_departure(&pairs, &ArrivalConfig { seed: 4, ..ArrivalConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for name in ["pool.json", "pool.csv"] {
        let path = dir.path().join(name);
        save_pool(&timed, &path).unwrap();
        assert_eq!(load_pool(&path).unwrap(), timed, "{name}");
    }
}

#[test]
fn header_only_csv_is_empty_pool() {
    let text = "id,ethnicity,recipient_blood,donor_blood,recipient_typing,donor_typing,dsa,arrival,departure\n";
    assert!(pool_from_csv(text.as_bytes(), "p.csv".as_ref()).unwrap().is_empty());
}

#[test]
fn arrival_after_departure_is_rejected() {
    let text = "id,ethnicity,recipient_blood,donor_blood,recipient_typing,donor_typing,dsa,arrival,departure\n\
                0,x,A,B,B07/B08,B44/B44,,50,10\n";
    let err = pool_from_csv(text.as_bytes(), "p.csv".as_ref()).unwrap_err();
    assert!(matches!(err, Error::InvariantViolation { .. }), "{err}");
    let bad = "id,ethnicity,recipient_blood,donor_blood,recipient_typing,donor_typing,dsa,arrival,departure\n\
               0,x,Q,B,B07/B08,B44/B44,,5,10\n";
    assert!(matches!(pool_from_csv(bad.as_bytes(), "p.csv".as_ref()), Err(Error::Parse { line: 2, .. })));
}
