//! Acceptance gate. Each test prints one `PASS`/`FAIL` line with the measured
//! statistic and then asserts it. Run with `--nocapture` to see the lines.

use std::collections::BTreeSet;

use dynfl::experiment::{
    availability_check, loglog_slope, martingale_check, mean_se, run_trials, structural_check, ultrametric_violations,
};
use dynfl::gen::{gen_claim2cap, gen_claim3, gen_random, MetricKind};
use dynfl::oracle::{opt_cap, opt_uncap, OfflineInstance};
use dynfl::sim::tree_for;
use dynfl::{Algorithm, ClientId, Hst, Instance, MetricSpace, PolicyConfig, ReassignOrder, RunOptions, TraceMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;

fn verdict(id: &str, pass: bool, detail: String) {
    println!("criterion {id}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {detail}");
}

fn mean_total(config: &PolicyConfig, inst: &Instance, trials: usize) -> f64 {
    let rows = run_trials(config, inst, trials, SEED).unwrap();
    mean_se(&rows.iter().map(|r| r.total).collect::<Vec<_>>()).0
}

const CLAIM3_K: [usize; 4] = [8, 16, 32, 64];

fn claim3_means(algo: Algorithm) -> Vec<(f64, f64)> {
    let cfg = PolicyConfig::new(algo).with_reassign(ReassignOrder::Fifo);
    CLAIM3_K.iter().map(|&k| (k as f64, mean_total(&cfg, &gen_claim3(k), 500))).collect()
}

#[test]
fn c1_mstar_grows_linearly_on_claim3() {
    let means = claim3_means(Algorithm::MStar);
    let slope = loglog_slope(&means);
    verdict("1", slope >= 0.7, format!("mstar slope {slope:.3} (>= 0.7), mean cost {means:?}, OPT = 2"));
}

#[test]
fn c2_alg1_stays_logarithmic_on_claim3() {
    let means = claim3_means(Algorithm::Alg1);
    let growth = means[3].1 / means[0].1;
    let ratio = means[3].1 / 2.0;
    verdict(
        "2",
        growth <= 3.0 && ratio <= 25.0,
        format!("alg1 cost(64)/cost(8) = {growth:.3} (<= 3), ratio at k=64 = {ratio:.3} (<= 25), means {means:?}"),
    );
}

#[test]
fn c3_martingale_on_claim3() {
    let k = 16;
    let inst: Instance = gen_claim3(k);
    // the leaf clients b_1..b_k, all within 2/k of each other
    let cluster: BTreeSet<ClientId> = (0..k).map(|i| ClientId((k * k + i) as u32)).collect();
    let cfg = PolicyConfig::new(Algorithm::Alg1);
    let check = martingale_check(&cfg, &inst, &cluster, 2000, SEED).unwrap();
    verdict("3", check.pass, format!("{}", check.stats));
}

fn claim2_means(config: &PolicyConfig) -> Vec<(f64, f64)> {
    [8u32, 16, 32]
        .iter()
        .map(|&u| {
            let cfg = config.clone().with_upsilon(u);
            (u as f64, mean_total(&cfg, &gen_claim2cap(u, u as usize), 200))
        })
        .collect()
}

#[test]
fn c4a_naive_grows_linearly_on_claim2() {
    let means = claim2_means(&PolicyConfig::new(Algorithm::NaiveCap));
    let slope = loglog_slope(&means);
    verdict("4a", slope >= 0.7, format!("naive slope {slope:.3} (>= 0.7), means {means:?}, OPT = 1"));
}

#[test]
fn c4b_alg2_sublinear_on_claim2() {
    let means = claim2_means(&PolicyConfig::new(Algorithm::Alg2));
    let slope = loglog_slope(&means);
    verdict("4b", slope <= 0.4, format!("alg2 slope {slope:.3} (<= 0.4), means {means:?}, OPT = 1"));
}

#[test]
fn c5_availability_is_rare() {
    let cfg = PolicyConfig::new(Algorithm::Alg2).with_upsilon(16);
    let adversarial: Instance = gen_claim2cap(16, 16);
    let a = availability_check(&cfg, &adversarial, 100, SEED, 0.01).unwrap();
    let random: Instance = gen_random(64, 2000, 0.3, MetricKind::Square, SEED);
    let b = availability_check(&cfg, &random, 100, SEED, 0.01).unwrap();
    verdict("5", a.pass && b.pass, format!("claim2cap {} random {}", a.stats, b.stats));
}

#[test]
fn c6_structural_invariants() {
    let mut failures = Vec::new();
    let mut runs = 0;
    for s in 0..20u64 {
        let seed = SEED + s;
        let dynamic: Instance = gen_random(48, 10_000, 0.45, MetricKind::Square, seed);
        let growing: Instance = gen_random(48, 10_000, 0.0, MetricKind::Matrix, seed);
        for algo in Algorithm::ALL {
            let inst = if algo.supports_deletions() { &dynamic } else { &growing };
            let mut cfg = PolicyConfig::new(algo).with_reassign(ReassignOrder::Random);
            if algo.is_capacitated() {
                cfg = cfg.with_upsilon(16);
            }
            runs += 1;
            if let Err(e) = structural_check(&cfg, inst, seed) {
                failures.push(format!("{algo} seed {seed}: {e}"));
            }
        }
    }
    verdict("6", failures.is_empty(), format!("{runs} runs of 10^4 events, violations {failures:?}"));
}

/// Independent enumerator: every non-empty client subset as facilities,
/// each client to its nearest chosen one.
fn brute_uncap(m: &MetricSpace, pts: &[usize]) -> f64 {
    let n = pts.len();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) {
        let mut cost = mask.count_ones() as f64;
        for &p in pts {
            cost += (0..n).filter(|j| mask >> j & 1 == 1).map(|j| m.dist(p, pts[j])).fold(f64::INFINITY, f64::min);
        }
        best = best.min(cost);
    }
    best
}

/// Independent enumerator: every facility subset and every assignment of the
/// other clients to it, facilities serving themselves.
fn brute_cap(m: &MetricSpace, pts: &[usize], cap: usize) -> f64 {
    let n = pts.len();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) {
        let fac: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 1).collect();
        let rest: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 0).collect();
        let mut load = vec![1usize; fac.len()];
        fn assign(
            i: usize,
            acc: f64,
            rest: &[usize],
            fac: &[usize],
            load: &mut [usize],
            cap: usize,
            m: &MetricSpace,
            pts: &[usize],
            best: &mut f64,
        ) {
            if acc >= *best {
                return;
            }
            if i == rest.len() {
                *best = acc;
                return;
            }
            for f in 0..fac.len() {
                if load[f] < cap {
                    load[f] += 1;
                    let d = m.dist(pts[rest[i]], pts[fac[f]]);
                    assign(i + 1, acc + d, rest, fac, load, cap, m, pts, best);
                    load[f] -= 1;
                }
            }
        }
        assign(0, fac.len() as f64, &rest, &fac, &mut load, cap, m, pts, &mut best);
    }
    best
}

fn random_points(rng: &mut ChaCha8Rng, metric_size: usize, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..metric_size)).collect()
}

#[test]
fn c7_oracles_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut consistent = true;
    for i in 0..50 {
        let m: MetricSpace = gen_random::<f64>(12, 0, 0.0, if i % 2 == 0 { MetricKind::Square } else { MetricKind::Matrix }, rng.gen())
            .metric;
        let n = rng.gen_range(1..=10);
        let pts = random_points(&mut rng, 12, n);
        let clients = pts.iter().enumerate().map(|(i, &p)| (ClientId(i as u32), p)).collect();
        let inst = OfflineInstance::new(&m, clients);
        let got = opt_uncap(&inst).unwrap().cost;
        worst = worst.max((got - brute_uncap(&m, &pts)).abs());
        checked += 1;
        if i < 20 {
            let n = n.min(8);
            let pts = &pts[..n];
            let clients = pts.iter().enumerate().map(|(i, &p)| (ClientId(i as u32), p)).collect();
            let inst = OfflineInstance::new(&m, clients);
            for cap in 1..=3 {
                let got = opt_cap(&inst, cap as u32).unwrap().cost;
                worst = worst.max((got - brute_cap(&m, pts, cap)).abs());
                checked += 1;
            }
            let big = opt_cap(&inst, n as u32).unwrap().cost;
            consistent &= (big - opt_uncap(&inst).unwrap().cost).abs() <= 1e-9;
        }
    }
    verdict(
        "7",
        worst <= 1e-9 && consistent,
        format!("{checked} oracle values, max deviation {worst:.2e}, opt_cap(n) = opt_uncap: {consistent}"),
    );
}

fn dominates(tree: &Hst, m: &MetricSpace) -> bool {
    let n = m.len();
    (0..n).all(|u| (u + 1..n).all(|v| tree.tree_dist(u, v).unwrap() + 1e-12 >= m.dist(u, v)))
}

#[test]
fn c8_hst_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut dominance = true;
    let mut triples_bad = 0;
    let mut stretch = Vec::new();
    for s in 0..200u64 {
        let base: MetricSpace = dynfl::gen::unit_square(64, &mut rng);
        let tree = tree_for(&base, 64, s).unwrap();
        let normalized = base.normalize(64).unwrap().into_base();
        dominance &= dominates(&tree, &normalized);
        stretch.push(tree.mean_stretch(&normalized));
        if s < 20 {
            triples_bad += ultrametric_violations(&tree);
        }
    }
    for u in [2u32, 3, 16, 1000] {
        let star: MetricSpace = MetricSpace::star(40, 0.5).unwrap();
        let tree = tree_for(&star, u, 1).unwrap();
        dominance &= dominates(&tree, &star.normalize(u).unwrap().into_base());
        triples_bad += ultrametric_violations(&tree);
    }
    let mean = stretch.iter().sum::<f64>() / stretch.len() as f64;
    let bound = 4.0 * 64f64.log2();
    verdict(
        "8",
        dominance && triples_bad == 0 && mean <= bound,
        format!("dominance {dominance}, bucket triple violations {triples_bad}, mean stretch {mean:.3} (<= {bound})"),
    );
}

#[test]
fn c9_insertion_only_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut differing = 0;
    for i in 0..100 {
        let kind = if i % 2 == 0 { MetricKind::Square } else { MetricKind::Matrix };
        let inst: Instance = gen_random(rng.gen_range(2..40), rng.gen_range(1..300), 0.0, kind, rng.gen());
        let seed: u64 = rng.gen();
        let opts = RunOptions { trace: TraceMode::Full, check_invariants: false };
        let traces: Vec<_> = [Algorithm::M, Algorithm::MStar, Algorithm::Alg1]
            .iter()
            .map(|&a| dynfl::run_with(&PolicyConfig::new(a), &inst, seed, opts).unwrap().trace)
            .collect();
        if traces[0] != traces[1] || traces[1] != traces[2] {
            differing += 1;
        }
    }
    verdict("9", differing == 0, format!("100 streams, {differing} with differing traces"));
}
