//! Acceptance gate. Runs every criterion, prints one line per criterion and
//! exits nonzero when any fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use absorb_core::dynamics::grid::DEFAULT_POINT_LIMIT;
use absorb_core::dynamics::{lemma_multi_check, step, Case, DynamicsConfig, DynamicsStep, PayoffBox, SearchGrid, StepDetail, Witness};
use absorb_core::eval::{deviation_suite, simulate, DeviationConfig, SimConfig};
use absorb_core::generate::{generate_instance, GenConfig};
use absorb_core::instances;
use absorb_core::orbit::{build_orbit, DEFAULT_K_MAX};
use absorb_core::pipeline::{solve, Solution};
use absorb_core::structure::{build_structure, exits_at_support, rectangular_via_exits, Exit};
use absorb_core::threat::{minmax_all, MinmaxConfig};
use absorb_core::{Exec, Game, GameBuilder, PayoffVector, RunConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, format!("runtime {elapsed:.2?} exceeds {limit:?}"))
}

fn profiles(set: &[[usize; 3]]) -> BTreeSet<Vec<usize>> {
    set.iter().map(|p| p.to_vec()).collect()
}

fn c1_structure() -> Outcome {
    let start = Instant::now();
    let g = instances::example2();
    let s = build_structure(&g);
    let elapsed = start.elapsed();
    // Actions a, a', a'', a''' map to 0, 1, 2, 3.
    let expected = [
        (profiles(&[[1, 1, 2]]), true),
        (
            profiles(&[[3, 2, 0], [3, 2, 1], [3, 2, 2], [3, 3, 0], [3, 3, 1], [3, 3, 2]]),
            true,
        ),
        (
            profiles(&[[0, 0, 0], [0, 0, 1], [0, 1, 0], [0, 1, 1], [1, 0, 0], [1, 0, 1]]),
            false,
        ),
    ];
    ensure(s.components.len() == 3, format!("{} components", s.components.len()))?;
    for (set, rect) in &expected {
        let c = s
            .components
            .iter()
            .find(|c| c.profiles.iter().cloned().collect::<BTreeSet<_>>() == *set)
            .ok_or_else(|| format!("component {set:?} missing"))?;
        ensure(c.rectangular == *rect, format!("component {set:?} rectangular = {}", c.rectangular))?;
    }
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("3 components, flags (true, true, false), {elapsed:.2?}"))
}

fn c2_exits() -> Outcome {
    let start = Instant::now();
    let g = instances::example1();
    let exits = exits_at_support(&g, &[vec![0], vec![0]]).map_err(|e| e.to_string())?;
    let joint: BTreeSet<Vec<usize>> = exits.iter().filter(|e| e.is_joint()).map(|e| e.actions.clone()).collect();
    let expected: BTreeSet<Vec<usize>> = [[1, 1], [1, 2], [2, 1], [2, 2]].iter().map(|a| a.to_vec()).collect();
    ensure(joint == expected, format!("joint exits {joint:?}"))?;
    let single = Exit {
        coalition: vec![1],
        actions: vec![3],
    };
    ensure(exits.contains(&single), "({2}, a2''') missing")?;
    let other = exits_at_support(&g, &[vec![1], vec![0]]).map_err(|e| e.to_string())?;
    ensure(!other.iter().any(Exit::is_joint), "joint exit at (a1', a2)")?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("4 joint exits, ({{2}}, a2''') non-joint, none at (a1', a2), {elapsed:.2?}"))
}

fn c3_certificate() -> Outcome {
    let start = Instant::now();
    let g = instances::example1();
    let cfg = RunConfig {
        epsilon: 0.05,
        ..RunConfig::default()
    };
    let solved = solve(&g, &cfg).map_err(|e| e.to_string())?;
    let Solution::Certificate { certificate } = &solved.solution else {
        return Err("no certificate".into());
    };
    let target = PayoffVector(vec![0.5, 0.5]);
    let d = solved.eval.gamma.dist_inf(&target);
    ensure(d <= 1e-12, format!("payoff {:?}", solved.eval.gamma))?;
    ensure(certificate.payoff.dist_inf(&target) <= 1e-12, "certificate payoff")?;
    ensure(solved.strategy.blocks.len() == 1, "strategy is not a single block")?;
    ensure(solved.strategy.blocks[0].y == certificate.xi, "block does not play xi")?;
    ensure(solved.strategy.tail == certificate.xi, "tail does not play xi")?;
    let dev = deviation_suite(
        &g,
        &solved.strategy,
        &DeviationConfig {
            episodes: 100_000,
            bound: Some(0.05),
            ..DeviationConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    ensure(dev.pass, format!("max gain {} exceeds 0.05 + 3 SE", dev.max_gain))?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!("payoff (0.5, 0.5) +- {d:.1e}, max gain {:.4}, {elapsed:.2?}", dev.max_gain))
}

fn c4_minmax() -> Outcome {
    let g = instances::example1();
    let t = minmax_all(&g, &MinmaxConfig::default()).map_err(|e| e.to_string())?;
    let expected = [0.0, 0.25];
    let mut worst_disc: f64 = 0.0;
    for (p, v) in t.players.iter().zip(expected) {
        ensure(p.certified, format!("player {} not certified", p.player))?;
        ensure((p.value - v).abs() <= 1e-6, format!("v_{} = {}", p.player, p.value))?;
        ensure(p.value - p.lower_bound <= 1e-6, format!("player {} bracket too wide", p.player))?;
        let d = p.discounted.as_ref().ok_or("no discounted check")?;
        ensure(d.difference <= 1e-3, format!("discounted difference {}", d.difference))?;
        worst_disc = worst_disc.max(d.difference);
    }
    Ok(format!("v = ({:.2e}, {:.6}), discounted gap {worst_disc:.1e}", t.players[0].value, t.players[1].value))
}

/// In-class instance with at most three players and three actions each.
/// Some action counts admit no in-class game (every 2x2 game has a pure
/// nonabsorbing equilibrium), so counts are redrawn until generation succeeds.
fn random_instance(idx: u64) -> Game {
    let mut rng = ChaCha8Rng::seed_from_u64(1_000 + idx);
    let players = 2 + (idx % 2) as usize;
    loop {
        let actions: Vec<usize> = (0..players).map(|_| rng.random_range(2..=3)).collect();
        let cfg = GenConfig {
            players,
            actions,
            seed: rng.random(),
            p_range: (0.2, 1.0),
            max_attempts: 2_000,
            ..GenConfig::default()
        };
        if let Ok(g) = generate_instance(&cfg) {
            return g;
        }
    }
}

/// Classification and step, halving the mesh up to twice when the grid
/// holds no witness.
fn step_refined(
    g: &Game,
    grids: &mut Vec<SearchGrid>,
    w: &PayoffVector,
    ybox: &PayoffBox,
    cfg: &DynamicsConfig,
) -> absorb_core::Result<DynamicsStep> {
    let mut level = 0;
    loop {
        if grids.len() <= level {
            let mesh = grids[level - 1].mesh / 2.0;
            let s = build_structure(g);
            grids.push(SearchGrid::build(g, &s, mesh, DEFAULT_POINT_LIMIT, Exec::default())?);
        }
        match step(g, &grids[level], w, ybox, cfg) {
            Err(absorb_core::Error::WitnessNotFound { .. }) if level < 2 => level += 1,
            other => return other,
        }
    }
}

fn c5_dynamics() -> Outcome {
    let start = Instant::now();
    let mut cases = [0usize; 3];
    let mut worst_box: f64 = 0.0;
    let mut used = 0;
    let mut skipped = 0;
    for idx in 0.. {
        if used == 200 {
            break;
        }
        let g = random_instance(idx);
        let s = build_structure(&g);
        let t = minmax_all(
            &g,
            &MinmaxConfig {
                discounted: false,
                ..MinmaxConfig::default()
            },
        )
        .map_err(|e| format!("instance {idx}: {e}"))?;
        let eps = 0.1;
        let ybox = PayoffBox::new(&t.values(), eps);
        let mut grids = vec![SearchGrid::build(&g, &s, 0.05, DEFAULT_POINT_LIMIT, Exec::default())
            .map_err(|e| format!("instance {idx}: {e}"))?];
        // f is defined only where no multi-exit certificate applies.
        if lemma_multi_check(&g, &grids[0], &t.values(), eps).is_some() {
            skipped += 1;
            continue;
        }
        used += 1;
        let cfg = RunConfig {
            epsilon: eps,
            seed: idx,
            ..RunConfig::default()
        }
        .dynamics();
        let mut rng = ChaCha8Rng::seed_from_u64(idx);
        for j in 0..100 {
            let w = PayoffVector(ybox.lower.iter().map(|lo| rng.random_range(*lo..=1.0)).collect());
            let st = step_refined(&g, &mut grids, &w, &ybox, &cfg).map_err(|e| format!("instance {idx} w#{j} {w:?}: {e}"))?;
            let case = st.classification.case();
            let tag_matches = matches!(
                (case, &st.detail),
                (Case::W, StepDetail::W { .. }) | (Case::WH, StepDetail::WH { .. }) | (Case::WL, StepDetail::WL { .. })
            );
            ensure(tag_matches, format!("instance {idx} w#{j}: inconsistent tags"))?;
            let excess = ybox
                .lower
                .iter()
                .zip(st.f.iter())
                .map(|(lo, fi)| (lo - fi).max(fi - 1.0).max(0.0))
                .fold(0.0, f64::max);
            worst_box = worst_box.max(excess);
            ensure(ybox.contains(&st.f, 1e-6), format!("instance {idx} w#{j}: f(w) = {:?} outside Y", st.f))?;
            ensure(st.mu > 0.0, format!("instance {idx} w#{j}: mu = {}", st.mu))?;
            if let Witness::WH { exit, .. } = &st.classification.witness {
                ensure(exit.is_joint(), format!("instance {idx} w#{j}: WH exit not joint"))?;
            }
            cases[case as usize] += 1;
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(600))?;
    Ok(format!(
        "{used} instances ({skipped} with certificates skipped), W {}, WH {}, WL {}; worst box excess {worst_box:.1e}, {elapsed:.2?}",
        cases[0], cases[1], cases[2]
    ))
}

fn c6_orbits() -> Outcome {
    let mut built = 0;
    let mut worst: f64 = 0.0;
    let mut check = |g: &Game, eps: f64, delta: f64| -> Result<(), String> {
        let s = build_structure(g);
        let t = minmax_all(
            g,
            &MinmaxConfig {
                discounted: false,
                ..MinmaxConfig::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let ybox = PayoffBox::new(&t.values(), eps);
        let grid = SearchGrid::build(g, &s, 0.05, DEFAULT_POINT_LIMIT, Exec::default()).map_err(|e| e.to_string())?;
        let cfg = RunConfig {
            epsilon: eps,
            ..RunConfig::default()
        }
        .dynamics();
        let Ok(o) = build_orbit(g, &grid, &ybox, &cfg, delta, DEFAULT_K_MAX) else {
            return Ok(());
        };
        built += 1;
        let last = o.points.last().ok_or("empty orbit")?;
        ensure(last.iter().all(|&x| x == 1.0), format!("endpoint {last:?}"))?;
        ensure(o.points.len() == o.k0 + 1, "point count")?;
        ensure(o.mu_sum >= 1.0 / delta, format!("mu sum {} < 1/delta", o.mu_sum))?;
        let defect = o.max_defect(g, &ybox, &cfg).map_err(|e| e.to_string())?;
        worst = worst.max(defect);
        ensure(defect <= 1e-12, format!("defect {defect:e}"))
    };
    let hard = instances::ex1_hard();
    for delta in [0.4, 0.3, 0.8 / 10f64.ln()] {
        check(&hard, 0.1, delta)?;
    }
    for idx in (0..40).step_by(2) {
        let g = random_instance(idx);
        check(&g, 0.1, 0.8 / 10f64.ln())?;
    }
    ensure(built >= 3, format!("only {built} orbits built"))?;
    Ok(format!("{built} orbits, worst defect {worst:.1e}"))
}

fn c7_end_to_end() -> Outcome {
    let start = Instant::now();
    let g = instances::ex1_hard();
    let cfg = RunConfig {
        epsilon: 0.1,
        delta: Some(0.4),
        ..RunConfig::default()
    };
    let solved = solve(&g, &cfg).map_err(|e| e.to_string())?;
    ensure(matches!(solved.solution, Solution::Orbit { .. }), "expected an orbit")?;
    let e = &solved.eval;
    ensure(e.distance <= 0.4, format!("||gamma - w0|| = {}", e.distance))?;
    let dev = deviation_suite(&g, &solved.strategy, &cfg.deviations()).map_err(|e| e.to_string())?;
    ensure((dev.bound - 0.7).abs() < 1e-12, "bound is not 7 epsilon")?;
    ensure(dev.pass, format!("max gain {} exceeds 0.7 + 3 SE", dev.max_gain))?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(600))?;
    Ok(format!(
        "||gamma - w0|| = {:.4}, max gain {:.4} over {} players, {elapsed:.2?}",
        e.distance,
        dev.max_gain,
        dev.players.len()
    ))
}

fn pattern_game(counts: &[usize], absorbing: &[bool]) -> Game {
    let mut b = GameBuilder::new(counts);
    let total: usize = counts.iter().product();
    let r = vec![0.5; counts.len()];
    for (idx, &absorbs) in absorbing.iter().enumerate().take(total) {
        if absorbs {
            let mut profile = vec![0; counts.len()];
            let mut rest = idx;
            for i in (0..counts.len()).rev() {
                profile[i] = rest % counts[i];
                rest /= counts[i];
            }
            b = b.absorbing(&profile, 1.0, &r);
        }
    }
    b.build().expect("pattern game")
}

fn agree(g: &Game) -> Result<usize, String> {
    let s = build_structure(g);
    for (l, c) in s.components.iter().enumerate() {
        let via = rectangular_via_exits(g, &s, l).map_err(|e| e.to_string())?;
        ensure(via == c.rectangular, format!("component {l} of {:?}", s.nonabsorbing))?;
    }
    Ok(s.components.len())
}

fn c8_oracle() -> Outcome {
    let mut patterns = 0;
    let mut components = 0;
    for counts in [vec![2, 2], vec![2, 3]] {
        let total: usize = counts.iter().product();
        for mask in 0u32..(1 << total) {
            let absorbing: Vec<bool> = (0..total).map(|k| mask >> k & 1 == 1).collect();
            components += agree(&pattern_game(&counts, &absorbing))?;
            patterns += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..500 {
        let counts: Vec<usize> = (0..3).map(|_| rng.random_range(2..=3)).collect();
        let total: usize = counts.iter().product();
        let density = rng.random_range(0.2..0.8);
        let absorbing: Vec<bool> = (0..total).map(|_| rng.random::<f64>() < density).collect();
        components += agree(&pattern_game(&counts, &absorbing))?;
        patterns += 1;
    }
    Ok(format!("{patterns} patterns, {components} components agree"))
}

fn c9_false_positives() -> Outcome {
    let g = instances::ex1_hard();
    let cfg = RunConfig {
        epsilon: 0.1,
        delta: Some(0.4),
        ..RunConfig::default()
    };
    let solved = solve(&g, &cfg).map_err(|e| e.to_string())?;
    let sim = simulate(
        &g,
        &solved.strategy,
        &SimConfig {
            episodes: 10_000,
            seed: 9,
            exec: Exec::default(),
        },
    )
    .map_err(|e| e.to_string())?;
    let limit = sim.detection_bound + 3.0 * sim.detection_se;
    ensure(
        sim.detection_rate <= limit,
        format!("detection rate {} > {limit}", sim.detection_rate),
    )?;
    Ok(format!(
        "detection rate {:.4} <= {:.4} (+3 SE {:.4})",
        sim.detection_rate, sim.detection_bound, sim.detection_se
    ))
}

fn main() -> ExitCode {
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 9] = [
        ("1 structure reproduction", c1_structure),
        ("2 exit reproduction", c2_exits),
        ("3 certificate short-circuit", c3_certificate),
        ("4 minmax", c4_minmax),
        ("5 dynamics properties", c5_dynamics),
        ("6 orbit contract", c6_orbits),
        ("7 end-to-end 7 epsilon", c7_end_to_end),
        ("8 oracle equivalence", c8_oracle),
        ("9 false-positive rate", c9_false_positives),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        match run() {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({detail})");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
