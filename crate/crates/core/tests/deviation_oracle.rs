//! Exact deviation payoffs against a brute-force stage-by-stage walk on
//! strategy profiles whose blocks are cut to at most 1000 stages.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use absorb_core::eval::deviation::{plan_payoff, Move, Plan, TailMove};
use absorb_core::game::MixedProfile;
use absorb_core::pipeline::solve;
use absorb_core::structure::product_iter;
use absorb_core::synthesis::{StrategySpec, TestConfig};
use absorb_core::{instances, Exec, Game, RunConfig};

/// Absorption probability and expected absorbing payoff to `i` for one
/// stage in which `i` plays `action` (or follows `x` when `None`).
fn stage(g: &Game, x: &MixedProfile, i: usize, action: Option<usize>) -> (f64, f64) {
    let sets: Vec<Vec<usize>> = (0..g.n_players()).map(|j| (0..g.n_actions(j)).collect()).collect();
    let (mut p, mut pr) = (0.0, 0.0);
    for a in product_iter(&sets) {
        if action.is_some_and(|b| a[i] != b) {
            continue;
        }
        let weight: f64 = (0..g.n_players())
            .filter(|&j| action.is_none() || j != i)
            .map(|j| x.player(j)[a[j]])
            .product();
        let idx = g.index(&a);
        if weight > 0.0 && g.prob(idx) > 0.0 {
            p += weight * g.prob(idx);
            pr += weight * g.prob(idx) * g.payoff(idx)[i];
        }
    }
    (p, pr)
}

fn ratio((p, pr): (f64, f64)) -> f64 {
    if p > 0.0 {
        pr / p
    } else {
        0.0
    }
}

fn oracle(g: &Game, spec: &StrategySpec, i: usize, plan: &Plan) -> f64 {
    let tail = &spec.tail;
    let mut value = 0.0;
    let mut alive = 1.0;
    for (k, b) in spec.blocks.iter().enumerate() {
        let y = b.y.player(i);
        let mut counts = vec![0u64; y.len()];
        let (p, pr) = match plan.blocks[k] {
            Move::Follow => stage(g, &b.y, i, None),
            Move::Play(a) => stage(g, &b.y, i, Some(a)),
        };
        for n in 1..=b.horizon {
            value += alive * pr;
            alive *= 1.0 - p;
            if let Move::Play(a) = plan.blocks[k] {
                counts[a] += 1;
                if b.test.fires(i, y, &counts, n, a) {
                    return value + alive * spec.punish_values[i];
                }
            }
        }
    }
    let cont = match plan.tail {
        TailMove::Follow => ratio(stage(g, tail, i, None)),
        TailMove::BestReply => (0..g.n_actions(i))
            .map(|b| stage(g, tail, i, Some(b)))
            .filter(|s| s.0 > 0.0)
            .map(ratio)
            .fold(0.0, f64::max),
        TailMove::Play(b) => ratio(stage(g, tail, i, Some(b))),
    };
    value + alive * cont
}

fn truncate(g: &Game, mut spec: StrategySpec, cap: u64, n_min: u64) -> StrategySpec {
    for b in &mut spec.blocks {
        b.horizon = b.horizon.min(cap);
        b.realized_mass = 1.0 - (1.0 - b.stage_absorption).powf(b.horizon as f64);
        if b.test.enabled {
            b.test = TestConfig::new(&g.action_counts(), b.horizon, b.eta, n_min);
        }
    }
    spec.total_horizon = spec.blocks.iter().map(|b| b.horizon).sum();
    spec
}

fn plans(g: &Game, spec: &StrategySpec, i: usize, seed: u64) -> Vec<Plan> {
    let k0 = spec.blocks.len();
    let m = g.n_actions(i);
    let mut out = vec![Plan::follow(k0)];
    for k in 0..k0 {
        for a in 0..m {
            let mut p = Plan::follow(k0);
            p.blocks[k] = Move::Play(a);
            out.push(p);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let blocks = (0..k0)
            .map(|_| {
                if rng.random_bool(0.5) {
                    Move::Follow
                } else {
                    Move::Play(rng.random_range(0..m))
                }
            })
            .collect();
        let tail = match rng.random_range(0..3) {
            0 => TailMove::Follow,
            1 => TailMove::BestReply,
            _ => TailMove::Play(rng.random_range(0..m)),
        };
        out.push(Plan { blocks, tail });
    }
    out
}

fn check(g: &Game, spec: &StrategySpec, seed: u64) -> usize {
    let mut checked = 0;
    for i in 0..g.n_players() {
        for plan in plans(g, spec, i, seed + i as u64) {
            let exact = plan_payoff(g, spec, i, &plan);
            let brute = oracle(g, spec, i, &plan);
            assert!(
                (exact - brute).abs() <= 1e-10,
                "player {i}, plan {plan:?}: exact {exact}, brute force {brute}"
            );
            checked += 1;
        }
    }
    checked
}

fn solved(g: &Game, epsilon: f64, delta: Option<f64>) -> StrategySpec {
    let cfg = RunConfig {
        epsilon,
        delta,
        discounted_check: false,
        exec: Exec::Sequential,
        ..RunConfig::default()
    };
    solve(g, &cfg).unwrap().strategy
}

#[test]
fn orbit_profile_matches_brute_force() {
    let g = instances::ex1_hard();
    let spec = solved(&g, 0.1, Some(0.4));
    assert!(spec.blocks.iter().any(|b| b.horizon > 1000));
    let cut = truncate(&g, spec, 1000, 100);
    assert!(check(&g, &cut, 1) > 0);
}

#[test]
fn short_blocks_with_early_testing_match_brute_force() {
    let g = instances::ex1_hard();
    let spec = solved(&g, 0.1, Some(0.4));
    let cut = truncate(&g, spec, 1000, 5);
    // Some pure in-support action must now be caught inside a block.
    let caught = (0..cut.blocks.len()).any(|k| {
        let y = cut.blocks[k].y.player(1);
        (0..y.len()).any(|a| y[a] > 0.0 && cut.pure_detection_stage(k, 1, a).is_some())
    });
    assert!(caught);
    check(&g, &cut, 2);
}

#[test]
fn certificate_profile_matches_brute_force() {
    let g = instances::example1();
    let spec = solved(&g, 0.05, None);
    let cut = truncate(&g, spec, 1000, 20);
    check(&g, &cut, 3);
}
