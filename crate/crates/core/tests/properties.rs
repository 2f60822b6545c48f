use dynfl::gen::{gen_random, GeneratorSpec, MetricKind};
use dynfl::oracle::{opt_bounds, opt_cap, opt_uncap, OfflineInstance};
use dynfl::sim::{replay, tree_for};
use dynfl::{run_with, Algorithm, ClientId, Event, EventStream, Instance, MetricError, MetricSpace, PolicyConfig, RunOptions};
use proptest::prelude::*;

/// Reference axiom check, written independently of the crate.
fn is_metric(d: &[Vec<f64>]) -> bool {
    let n = d.len();
    for i in 0..n {
        if d[i][i] != 0.0 {
            return false;
        }
        for j in 0..n {
            if !d[i][j].is_finite() || d[i][j] < 0.0 || d[i][j] != d[j][i] {
                return false;
            }
            for k in 0..n {
                if d[i][k] > d[i][j] + d[j][k] + 1e-9 {
                    return false;
                }
            }
        }
    }
    n > 0
}

fn plane(points: &[(f64, f64)]) -> Vec<Vec<f64>> {
    points.iter().map(|a| points.iter().map(|b| (a.0 - b.0).hypot(a.1 - b.1)).collect()).collect()
}

fn small_instance() -> impl Strategy<Value = Instance> {
    (2usize..10, 1usize..60, 0.0f64..0.6, any::<bool>(), any::<u64>()).prop_map(|(n, q, pdel, square, seed)| {
        gen_random(n, q, pdel, if square { MetricKind::Square } else { MetricKind::Matrix }, seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn validate_flags_exactly_broken_axioms(
        pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..7),
        i in 0usize..7, j in 0usize..7, delta in -1.0f64..3.0, mirror in any::<bool>(),
    ) {
        let mut d = plane(&pts);
        let n = d.len();
        let (i, j) = (i % n, j % n);
        d[i][j] += delta;
        if mirror {
            d[j][i] = d[i][j];
        }
        prop_assert_eq!(MetricSpace::validate(&d).is_ok(), is_metric(&d));
    }

    #[test]
    fn normalize_lands_in_range_and_is_idempotent(
        pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..9), u in 1u32..100,
    ) {
        let m = MetricSpace::validate(&plane(&pts)).unwrap();
        match m.normalize(u) {
            Err(e) => prop_assert_eq!(e, MetricError::Degenerate),
            Ok(norm) => {
                let b = norm.base();
                let floor = 1.0 / u as f64;
                for x in 0..b.len() {
                    for y in 0..b.len() {
                        let d = b.dist(x, y);
                        if x == y {
                            prop_assert_eq!(d, 0.0);
                        } else {
                            prop_assert!(d >= floor - 1e-12 && d <= 1.0 + 1e-12);
                        }
                    }
                }
                let again = b.normalize(u).unwrap();
                for x in 0..b.len() {
                    for y in 0..b.len() {
                        prop_assert!((again.base().dist(x, y) - b.dist(x, y)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn hst_structure(pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..14), u in 2u32..300, seed in any::<u64>()) {
        let m = MetricSpace::validate(&plane(&pts)).unwrap();
        prop_assume!(m.diameter() > 0.0);
        let tree = tree_for(&m, u, seed).unwrap();
        let norm = m.normalize(u).unwrap().into_base();
        let n = m.len();
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let dt = tree.tree_dist(a, b).unwrap();
                prop_assert!(dt + 1e-12 >= norm.dist(a, b), "dominance");
                prop_assert!((dt - tree.path_length(a, b).unwrap()).abs() < 1e-12);
                prop_assert_eq!(tree.lca_depth(a, b), tree.lca_depth(b, a));
                for c in 0..n {
                    if c == a || c == b {
                        continue;
                    }
                    let (ab, bc, ac) = (tree.lca_depth(a, b), tree.lca_depth(b, c), tree.lca_depth(a, c));
                    prop_assert!(ac >= ab.min(bc), "ultrametric bucket inequality");
                    let dac = tree.tree_dist(a, c).unwrap();
                    if ab == ac {
                        prop_assert_eq!(dt, dac);
                    } else if ab > ac {
                        prop_assert!(dt < dac);
                    }
                }
            }
        }
        prop_assert_eq!(tree, tree_for(&m, u, seed).unwrap());
    }

    #[test]
    fn generated_streams_validate(spec in (1usize..30, 0usize..80, 0.0f64..0.99, any::<bool>(), any::<u64>())) {
        let (n, q, pdel, square, seed) = spec;
        let kind = if square { MetricKind::Square } else { MetricKind::Matrix };
        let inst: Instance = gen_random(n, q, pdel, kind, seed);
        prop_assert_eq!(inst.stream.len(), q);
        prop_assert!(EventStream::new(inst.stream.events().to_vec(), n).is_ok());
        if pdel == 0.0 {
            prop_assert!(inst.stream.is_insertion_only());
        }
        let spec = GeneratorSpec::Random { n_points: n, n_events: q, p_delete: pdel, metric: kind, seed: Some(seed) };
        prop_assert_eq!(spec.generate::<f64>(0), inst);
    }

    #[test]
    fn runs_are_consistent(inst in small_instance(), seed in any::<u64>(), algo in 0usize..6, u in 2u32..6) {
        let algo = Algorithm::ALL[algo];
        let inst = if algo.supports_deletions() {
            inst
        } else {
            let events: Vec<Event> = inst.stream.events().iter().copied().filter(|e| matches!(e, Event::Insert { .. })).collect();
            Instance::new(inst.metric.clone(), EventStream::new(events, inst.metric.len()).unwrap())
        };
        let mut cfg = PolicyConfig::new(algo);
        if algo.is_capacitated() {
            cfg = cfg.with_upsilon(u);
        }
        let out = run_with(&cfg, &inst, seed, RunOptions::checked()).unwrap();
        let trace = out.trace.as_ref().unwrap();
        if algo == Algorithm::Alg2 {
            cfg = cfg.with_horizon(inst.stream.len());
        }
        prop_assert_eq!(&replay(&cfg, out.tree.as_ref(), inst.stream.id_bound(), trace), &out.state);
        let n_fin = inst.stream.n_final();
        prop_assert_eq!(out.state.active_count(), n_fin);
        if n_fin > 0 {
            prop_assert!(out.report.total >= 1.0);
        }
        if inst.stream.is_insertion_only() {
            prop_assert_eq!(out.report.counters.cascades, 0);
        }
        // no online solution beats the offline optimum
        let off = OfflineInstance::from_stream(&inst.metric, &inst.stream);
        if n_fin > 0 && n_fin <= 10 {
            let opt = if algo.is_capacitated() { opt_cap(&off, u).unwrap().cost } else { opt_uncap(&off).unwrap().cost };
            prop_assert!(out.report.total >= opt - 1e-9, "{} < {}", out.report.total, opt);
        }
    }

    #[test]
    fn oracle_orderings(inst in small_instance()) {
        let off = OfflineInstance::from_stream(&inst.metric, &inst.stream);
        prop_assume!(!off.is_empty() && off.len() <= 9);
        let uncap = opt_uncap(&off).unwrap().cost;
        let mut prev = f64::INFINITY;
        for u in 1..=off.len() as u32 + 1 {
            let cap = opt_cap(&off, u).unwrap().cost;
            prop_assert!(uncap <= cap + 1e-9);
            prop_assert!(cap <= prev + 1e-9);
            let b = opt_bounds(&off, Some(u));
            prop_assert!(b.lower <= cap + 1e-9 && cap <= b.upper + 1e-9);
            prev = cap;
        }
        prop_assert!((prev - uncap).abs() < 1e-9);
    }
}

#[test]
fn ten_thousand_random_specs_validate() {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
    for _ in 0..10_000 {
        use rand::Rng;
        let n = rng.gen_range(1..20);
        let q = rng.gen_range(0..40);
        let pdel = rng.gen_range(0.0..0.95);
        let kind = if rng.gen() { MetricKind::Square } else { MetricKind::Matrix };
        let inst: Instance = gen_random(n, q, pdel, kind, rng.gen());
        assert!(EventStream::new(inst.stream.events().to_vec(), n).is_ok());
    }
}

#[test]
fn claim_end_states() {
    let inst: Instance = dynfl::gen::gen_claim3(6);
    let off = OfflineInstance::from_stream(&inst.metric, &inst.stream);
    assert!((opt_uncap(&off).unwrap().cost - 2.0).abs() < 1e-12);
    let active: Vec<ClientId> = off.clients.iter().map(|c| c.0).collect();
    let mut expected = vec![ClientId(35)];
    expected.extend((36..42).map(ClientId));
    assert_eq!(active, expected);

    let inst: Instance = dynfl::gen::gen_claim2cap(4, 4);
    let off = OfflineInstance::from_stream(&inst.metric, &inst.stream);
    assert_eq!(off.len(), 4);
    assert_eq!(opt_cap(&off, 4).unwrap().cost, 1.0);
}
