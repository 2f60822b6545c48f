//! Adversarial constructions at sizes beyond the acceptance sweep.

use dynfl::experiment::{loglog_slope, mean_se, run_trials};
use dynfl::gen::gen_claim2cap;
use dynfl::{Algorithm, Instance, PolicyConfig};

/// Once `10/U` drops below the leaf distance 1/2, each round's center client
/// opens with probability about 1/2 and keeps its facility, so the naive
/// variant's cost grows linearly in `U`.
#[test]
fn naive_cost_is_linear_for_large_capacity() {
    let means: Vec<(f64, f64)> = [32u32, 64, 128]
        .iter()
        .map(|&u| {
            let inst: Instance = gen_claim2cap(u, u as usize);
            let cfg = PolicyConfig::new(Algorithm::NaiveCap).with_upsilon(u);
            let rows = run_trials(&cfg, &inst, 20, 5).unwrap();
            let (mean, _) = mean_se(&rows.iter().map(|r| r.total).collect::<Vec<_>>());
            // expected 1 + (U - 1) / 2
            let predicted = 1.0 + (u as f64 - 1.0) / 2.0;
            assert!((mean - predicted).abs() < 0.25 * predicted, "U={u}: {mean} vs {predicted}");
            (u as f64, mean)
        })
        .collect();
    let slope = loglog_slope(&means);
    assert!(slope >= 0.9, "slope {slope}, means {means:?}");
}

/// With `12 h ln q / U >= 1` every flip of the HST policy is certain, so on
/// the claim 2 stream it opens one facility per center client.
#[test]
fn hst_policy_opens_every_center_client_at_small_capacity() {
    for u in [8u32, 16] {
        let inst: Instance = gen_claim2cap(u, u as usize);
        let h = dynfl::height_for(u);
        let q = inst.stream.len();
        assert!(dynfl::policy::hst_slack(h, q, u) >= 1.0);
        let cfg = PolicyConfig::new(Algorithm::Alg2).with_upsilon(u);
        for row in run_trials(&cfg, &inst, 5, 1).unwrap() {
            assert_eq!(row.total, u as f64);
        }
    }
}
