mod common;

use common::{slot_cost, unit_instance, CHOICES};
use offload_core::agents::{dp_solve, DpTable, ThroughputExpectation};
use offload_core::env::{NetworkChoice, ScenarioConfig, TransitionMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn solve(cfg: &ScenarioConfig) -> (DpTable, TransitionMatrix) {
    let p = TransitionMatrix::from_config(cfg);
    let table = dp_solve(cfg, &p, &ThroughputExpectation::from_config(cfg), u64::MAX).unwrap();
    (table, p)
}

/// Expected cost of a history-dependent policy: `policy[node]` is the action
/// after the location history that `node` encodes.
fn policy_cost(cfg: &ScenarioConfig, p: &TransitionMatrix, policy: &[usize], node: usize, slot: u32, loc: usize, left: f64) -> Option<f64> {
    let deadline = cfg.flow_deadlines[0];
    if left <= 0.0 || slot > deadline {
        return Some(0.0);
    }
    let (sent, cost) = slot_cost(cfg, loc, left, CHOICES[policy[node]])?;
    let after = left - sent;
    let penalty = if slot == deadline { cfg.penalty_coeff * after } else { 0.0 };
    let l = cfg.num_locations();
    let mut future = 0.0;
    for next in 0..l {
        let pr = p.prob(loc, next);
        if pr > 0.0 {
            future += pr * policy_cost(cfg, p, policy, node * l + next + 1, slot + 1, next, after)?;
        }
    }
    Some(cost + penalty + future)
}

/// Minimum over every history-dependent deterministic policy, by enumeration.
fn enumerate_optimum(cfg: &ScenarioConfig, p: &TransitionMatrix, start: usize) -> f64 {
    let l = cfg.num_locations();
    let t = cfg.flow_deadlines[0] as u32;
    // Node ids: root 0, children of n are n*l + 1 ..= n*l + l.
    let nodes: usize = (0..t).map(|k| l.pow(k)).sum::<usize>();
    let width = (0..t).fold(0usize, |acc, _| acc * l + l) + 1;
    let mut best = f64::INFINITY;
    let mut assignment = vec![0usize; nodes];
    let total = 3usize.pow(nodes as u32);
    let mut policy = vec![0usize; width];
    for code in 0..total {
        let mut c = code;
        for a in assignment.iter_mut() {
            *a = c % 3;
            c /= 3;
        }
        // Map compact node order (breadth first) onto the tree ids.
        let mut id = 0;
        let mut frontier = vec![0usize];
        for _ in 0..t {
            let mut next = Vec::new();
            for &n in &frontier {
                policy[n] = assignment[id];
                id += 1;
                next.extend((1..=l).map(|k| n * l + k));
            }
            frontier = next;
        }
        if let Some(v) = policy_cost(cfg, p, &policy, 0, 1, start, cfg.flow_sizes[0]) {
            best = best.min(v);
        }
    }
    best
}

#[test]
fn start_value_matches_policy_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..12 {
        let mut cfg = unit_instance(&mut rng, 2, 3, 3);
        cfg.grid_width = 2;
        cfg.grid_height = 1;
        cfg.ap_cells.retain(|&c| c < 2);
        cfg.flow_sizes = vec![3.0];
        cfg.flow_deadlines = vec![if case < 8 { 3 } else { 2 }];
        let (table, p) = solve(&cfg);
        for start in 0..2 {
            let brute = enumerate_optimum(&cfg, &p, start);
            assert!(
                (table.start_value(start) - brute).abs() <= 1e-9,
                "case {case} start {start}: dp {} brute {brute}",
                table.start_value(start)
            );
        }
    }
}

#[test]
fn single_location_matches_open_loop_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let mut cfg = unit_instance(&mut rng, 1, 4, 5);
        cfg.grid_width = 1;
        cfg.grid_height = 1;
        cfg.ap_cells.retain(|&c| c == 0);
        let (table, _) = solve(&cfg);
        let t = cfg.flow_deadlines[0];
        let mut best = f64::INFINITY;
        for code in 0..3usize.pow(t) {
            let (mut c, mut left, mut cost, mut ok) = (code, cfg.flow_sizes[0], 0.0, true);
            for slot in 1..=t {
                if left <= 0.0 {
                    break;
                }
                match slot_cost(&cfg, 0, left, CHOICES[c % 3]) {
                    Some((sent, k)) => {
                        left -= sent;
                        cost += k;
                    }
                    None => ok = false,
                }
                if slot == t {
                    cost += cfg.penalty_coeff * left;
                }
                c /= 3;
            }
            if ok {
                best = best.min(cost);
            }
        }
        assert!((table.start_value(0) - best).abs() <= 1e-9, "dp {} vs {best}", table.start_value(0));
    }
}

#[test]
fn value_is_monotone_in_remaining() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let cfg = unit_instance(&mut rng, 3, 8, 6);
        let (table, _) = solve(&cfg);
        for slot in 1..=table.horizon() + 1 {
            for l in 0..table.num_locations() {
                let mut prev = f64::NEG_INFINITY;
                let mut u = 0;
                while let Some(v) = table.value_units(slot, l, u) {
                    assert!(v >= prev - 1e-9, "slot {slot} loc {l} units {u}");
                    prev = v;
                    u += 1;
                }
            }
        }
    }
}

/// Expected cost of following the table's greedy action, averaged over every
/// mobility branch.
fn greedy_cost(cfg: &ScenarioConfig, table: &DpTable, p: &TransitionMatrix, slot: u32, loc: usize, left: u32) -> f64 {
    let deadline = cfg.flow_deadlines[0];
    if left == 0 || slot > deadline {
        return 0.0;
    }
    let choice = table.action_units(slot, loc, left).unwrap();
    let (sent, cost) = slot_cost(cfg, loc, left as f64, choice).expect("greedy choice is feasible");
    let after = left - sent.round() as u32;
    let penalty = if slot == deadline { cfg.penalty_coeff * after as f64 } else { 0.0 };
    let future: f64 = (0..cfg.num_locations())
        .map(|n| p.prob(loc, n) * greedy_cost(cfg, table, p, slot + 1, n, after))
        .sum();
    cost + penalty + future
}

#[test]
fn greedy_policy_achieves_its_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..30 {
        let cfg = unit_instance(&mut rng, 3, 6, 6);
        let (table, p) = solve(&cfg);
        for l in 0..cfg.num_locations() {
            let achieved = greedy_cost(&cfg, &table, &p, 1, l, cfg.flow_sizes[0] as u32);
            assert!((achieved - table.start_value(l)).abs() <= 1e-9);
        }
    }
}

#[test]
fn free_dominant_wlan_excludes_cellular() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..10 {
        let mut cfg = unit_instance(&mut rng, 2, 6, 6);
        cfg.ap_cells = (0..cfg.num_locations()).collect();
        let (table, _) = solve(&cfg);
        for slot in 1..=table.horizon() {
            for l in 0..table.num_locations() {
                let mut u = 0;
                while let Some(a) = table.action_units(slot, l, u) {
                    assert_ne!(a, NetworkChoice::Cellular, "slot {slot} loc {l} units {u}");
                    u += 1;
                }
            }
        }
    }
}
