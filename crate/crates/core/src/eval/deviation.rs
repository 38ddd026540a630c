//! Unilateral deviation families against a block strategy profile.
//!
//! * `d1`: a pure action held for one block, then back to the profile.
//! * `d2`: the best absorbing reply in every block from some block on, and
//!   in the tail.
//! * `d3`: the least absorbing in-support action everywhere.
//! * `d4`: the block mixture tilted towards one support action.
//! * `d5`: the weight on an exit action doubled or halved.
//!
//! `d1`-`d3` are evaluated exactly: a pure in-support action trips the
//! frequency rule at a deterministic stage. `d4` and `d5` interact with the
//! test at random times and are estimated by Monte Carlo over the affected
//! block, with absorption integrated out stage by stage.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::exact_eval;
use crate::eval::simulate::{Sampler, CHUNK};
use crate::game::{Game, Joint};
use crate::par::{map_chunks, Exec};
use crate::synthesis::StrategySpec;
use crate::threat::{absorbing_reply, best_reply_value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    D1,
    D2,
    D3,
    D4,
    D5,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::D1, Family::D2, Family::D3, Family::D4, Family::D5];

    pub fn is_exact(self) -> bool {
        matches!(self, Family::D1 | Family::D2 | Family::D3)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::D1 => "d1",
            Family::D2 => "d2",
            Family::D3 => "d3",
            Family::D4 => "d4",
            Family::D5 => "d5",
        };
        f.write_str(s)
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "d1" => Ok(Family::D1),
            "d2" => Ok(Family::D2),
            "d3" => Ok(Family::D3),
            "d4" => Ok(Family::D4),
            "d5" => Ok(Family::D5),
            other => Err(Error::Config(format!("unknown deviation family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviationConfig {
    pub families: Vec<Family>,
    /// Players to test; all when `None`.
    pub players: Option<Vec<usize>>,
    pub episodes: u64,
    pub seed: u64,
    /// Weight moved towards one action in `d4`.
    pub tilt: f64,
    /// Factor applied to the exit weight in `d5`.
    pub beta_factor: f64,
    /// Allowed gain; `7 epsilon` when `None`.
    pub bound: Option<f64>,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for DeviationConfig {
    fn default() -> Self {
        DeviationConfig {
            families: Family::ALL.to_vec(),
            players: None,
            episodes: 100_000,
            seed: 0,
            tilt: 0.02,
            beta_factor: 2.0,
            bound: None,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Move {
    Follow,
    Play(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMove {
    Follow,
    BestReply,
    Play(usize),
}

/// A deviation that is pure and stationary within every block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub blocks: Vec<Move>,
    pub tail: TailMove,
}

impl Plan {
    pub fn follow(k0: usize) -> Self {
        Plan {
            blocks: vec![Move::Follow; k0],
            tail: TailMove::Follow,
        }
    }
}

/// Absorption probability and payoff to player `i` after a stationary
/// stage with `i` playing `b` against `x_{-i}`.
fn reply_stats(table: &[Joint], i: usize, b: usize) -> (f64, f64) {
    let j = &table[b];
    let r = if j.p > 0.0 { j.weighted[i] / j.p } else { 0.0 };
    (j.p, r)
}

/// Payoff collected over `n` stages with per-stage absorption `p` paying
/// `r`, and the probability of surviving them.
fn absorbed_over(p: f64, r: f64, n: u64) -> (f64, f64) {
    let survive = (1.0 - p).powf(n as f64);
    ((1.0 - survive) * r, survive)
}

/// Exact payoff of player `i` under `plan` while the others follow `spec`.
pub fn plan_payoff(g: &Game, spec: &StrategySpec, i: usize, plan: &Plan) -> f64 {
    let tail_table = g.reply_table(i, &spec.tail);
    let mut v = match plan.tail {
        TailMove::Follow => g.joint(&spec.tail, &[]).payoff().map_or(0.0, |r| r[i]),
        TailMove::BestReply => best_reply_value(g, i, &spec.tail),
        TailMove::Play(b) => reply_stats(&tail_table, i, b).1,
    };
    let punished = spec.punish_values[i];
    for (k, b) in spec.blocks.iter().enumerate().rev() {
        v = match plan.blocks[k] {
            Move::Follow => b.realized_mass * b.absorbing_payoff[i] + (1.0 - b.realized_mass) * v,
            Move::Play(a) => {
                let table = g.reply_table(i, &b.y);
                let (p, r) = reply_stats(&table, i, a);
                match spec.pure_detection_stage(k, i, a) {
                    Some(d) => {
                        let (gain, survive) = absorbed_over(p, r, d);
                        gain + survive * punished
                    }
                    None => {
                        let (gain, survive) = absorbed_over(p, r, b.horizon);
                        gain + survive * v
                    }
                }
            }
        };
    }
    v
}

/// Monte Carlo estimate of player `i`'s payoff from the start of block `k`
/// when `i` plays the stationary mixture `dist` there and follows `spec`
/// afterwards, continuation `cont`.
#[allow(clippy::too_many_arguments)]
fn block_mc(
    g: &Game,
    spec: &StrategySpec,
    i: usize,
    k: usize,
    dist: &[f64],
    cont: f64,
    episodes: u64,
    seed: u64,
    exec: Exec,
) -> (f64, f64) {
    let b = &spec.blocks[k];
    let table = g.reply_table(i, &b.y);
    let stats: Vec<(f64, f64)> = (0..dist.len())
        .map(|a| {
            let (p, r) = reply_stats(&table, i, a);
            (1.0 - p, p * r)
        })
        .collect();
    let sampler = Sampler::new(dist);
    let y = b.y.player(i);
    let punished = spec.punish_values[i];
    let off_support: Vec<bool> = y.iter().map(|&p| b.test.enabled && p <= 0.0).collect();
    let sums = map_chunks(exec, episodes as usize, CHUNK, |s, e| {
        let mut counts = vec![0u64; dist.len()];
        let (mut sum, mut sq) = (0.0, 0.0);
        for ep in s..e {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(ep as u64);
            counts.iter_mut().for_each(|c| *c = 0);
            let mut alive = 1.0;
            let mut value = 0.0;
            let mut caught = false;
            let mut next_check = 1;
            for n in 1..=b.horizon {
                let a = sampler.draw(&mut rng);
                let (q, pr) = stats[a];
                value += alive * pr;
                alive *= q;
                counts[a] += 1;
                if off_support[a] || n >= next_check && b.test.fires(i, y, &counts, n, a) {
                    value += alive * punished;
                    caught = true;
                    break;
                }
                if n >= next_check {
                    next_check = n.saturating_add(1).saturating_add(b.test.quiet_stages(i, y, &counts, n));
                }
            }
            if !caught {
                value += alive * cont;
            }
            sum += value;
            sq += value * value;
        }
        (sum, sq)
    });
    let (sum, sq) = sums.iter().fold((0.0, 0.0), |a, c| (a.0 + c.0, a.1 + c.1));
    let ne = episodes as f64;
    let mean = sum / ne;
    (mean, ((sq / ne - mean * mean).max(0.0) / ne).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationEntry {
    pub family: Family,
    pub block: Option<usize>,
    pub label: String,
    pub payoff: f64,
    pub gain: f64,
    /// Standard error of Monte Carlo entries.
    pub se: Option<f64>,
}

impl DeviationEntry {
    pub fn upper(&self) -> f64 {
        self.gain - 3.0 * self.se.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerDeviations {
    pub player: usize,
    /// `gamma_i(sigma*)`.
    pub baseline: f64,
    pub entries: Vec<DeviationEntry>,
    pub max_gain: f64,
    /// Standard error of the entry attaining `max_gain`.
    pub max_gain_se: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub epsilon: f64,
    pub bound: f64,
    pub episodes: u64,
    pub seed: u64,
    pub families: Vec<Family>,
    pub players: Vec<PlayerDeviations>,
    pub max_gain: f64,
    /// Every entry satisfies `gain <= bound + 3 se`.
    pub pass: bool,
}

struct Ctx<'a> {
    g: &'a Game,
    spec: &'a StrategySpec,
    cfg: &'a DeviationConfig,
    /// `Z_i^(k)` on the no-deviation path.
    z: Vec<f64>,
    /// Probability of reaching block `k` and payoff collected before it.
    reach: Vec<f64>,
    prefix: Vec<f64>,
}

fn least_absorbing(table: &[Joint], dist: &[f64]) -> usize {
    let mut best: Option<(usize, f64, f64)> = None;
    for (a, j) in table.iter().enumerate() {
        if dist[a] <= 0.0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, p, w)) => j.p < p || (j.p == p && dist[a] > w),
        };
        if better {
            best = Some((a, j.p, dist[a]));
        }
    }
    best.map_or(0, |(a, _, _)| a)
}

fn exact_entries(ctx: &Ctx, i: usize, out: &mut Vec<DeviationEntry>) {
    let (g, spec) = (ctx.g, ctx.spec);
    let k0 = spec.blocks.len();
    let baseline = ctx.z[0];
    let mut push = |family, block, label: String, payoff: f64| {
        out.push(DeviationEntry {
            family,
            block,
            label,
            payoff,
            gain: payoff - baseline,
            se: None,
        })
    };
    let families = &ctx.cfg.families;
    if families.contains(&Family::D1) {
        for k in 0..k0 {
            for a in 0..g.n_actions(i) {
                let mut plan = Plan::follow(k0);
                plan.blocks[k] = Move::Play(a);
                push(Family::D1, Some(k), format!("play {a} in block {k}"), plan_payoff(g, spec, i, &plan));
            }
        }
    }
    if families.contains(&Family::D2) {
        let best: Vec<Move> = spec
            .blocks
            .iter()
            .map(|b| absorbing_reply(g, i, &b.y).map_or(Move::Follow, |(_, a)| Move::Play(a)))
            .collect();
        for from in 0..=k0 {
            let mut plan = Plan::follow(k0);
            plan.blocks[from..].copy_from_slice(&best[from..]);
            plan.tail = TailMove::BestReply;
            let label = format!("best absorbing reply from block {from}");
            push(Family::D2, (from < k0).then_some(from), label, plan_payoff(g, spec, i, &plan));
        }
    }
    if families.contains(&Family::D3) {
        let quiet: Vec<Move> = spec
            .blocks
            .iter()
            .map(|b| Move::Play(least_absorbing(&g.reply_table(i, &b.y), b.y.player(i))))
            .collect();
        let tail = least_absorbing(&g.reply_table(i, &spec.tail), spec.tail.player(i));
        let plan = Plan {
            blocks: quiet.clone(),
            tail: TailMove::Play(tail),
        };
        push(Family::D3, None, "least absorbing action throughout".into(), plan_payoff(g, spec, i, &plan));
        for (k, m) in quiet.iter().enumerate() {
            let mut plan = Plan::follow(k0);
            plan.blocks[k] = *m;
            push(Family::D3, Some(k), format!("least absorbing action in block {k}"), plan_payoff(g, spec, i, &plan));
        }
    }
}

/// `(block, label, mixture)` for the Monte Carlo families.
fn mc_jobs(ctx: &Ctx, i: usize) -> Vec<(Family, usize, String, Vec<f64>)> {
    let spec = ctx.spec;
    let cfg = ctx.cfg;
    let mut jobs = Vec::new();
    for (k, b) in spec.blocks.iter().enumerate() {
        if !b.test.enabled {
            continue;
        }
        let y = b.y.player(i);
        let support: Vec<usize> = (0..y.len()).filter(|&a| y[a] > 0.0).collect();
        if cfg.families.contains(&Family::D4) && support.len() >= 2 {
            for &a in &support {
                let dist: Vec<f64> = y
                    .iter()
                    .enumerate()
                    .map(|(c, &p)| (1.0 - cfg.tilt) * p + if c == a { cfg.tilt } else { 0.0 })
                    .collect();
                jobs.push((Family::D4, k, format!("tilt {} towards {a} in block {k}", cfg.tilt), dist));
            }
        }
        if cfg.families.contains(&Family::D5) {
            if let (Some(pos), Some(beta)) = (b.exit_players.iter().position(|&j| j == i), b.beta) {
                let a = b.exit_actions[pos];
                let base = b.base.player(i);
                for (name, nb) in [("raise", beta * cfg.beta_factor), ("lower", beta / cfg.beta_factor)] {
                    let nb = nb.min(1.0);
                    let mut dist: Vec<f64> = base.iter().map(|p| (1.0 - nb) * p).collect();
                    dist[a] += nb;
                    jobs.push((Family::D5, k, format!("{name} exit weight to {nb} in block {k}"), dist));
                }
            }
        }
    }
    jobs
}

/// Runs the requested families for the requested players.
pub fn deviation_suite(g: &Game, spec: &StrategySpec, cfg: &DeviationConfig) -> Result<DeviationReport> {
    let n = g.n_players();
    let needs_mc = cfg.families.iter().any(|f| !f.is_exact());
    if needs_mc && cfg.episodes == 0 {
        return Err(Error::Config("episodes must be at least 1".into()));
    }
    let players: Vec<usize> = cfg.players.clone().unwrap_or_else(|| (0..n).collect());
    if let Some(&bad) = players.iter().find(|&&i| i >= n) {
        return Err(Error::Config(format!("no player {bad}")));
    }
    let exact = exact_eval(g, spec);
    let bound = cfg.bound.unwrap_or(7.0 * spec.epsilon);
    let mut reports = Vec::new();
    let mut job_id: u64 = 0;
    for &i in &players {
        let z: Vec<f64> = exact.z.iter().map(|v| v[i]).collect();
        let mut reach = vec![1.0];
        let mut prefix = vec![0.0];
        for b in &spec.blocks {
            let s = *reach.last().unwrap();
            prefix.push(prefix.last().unwrap() + s * b.realized_mass * b.absorbing_payoff[i]);
            reach.push(s * (1.0 - b.realized_mass));
        }
        let ctx = Ctx {
            g,
            spec,
            cfg,
            z,
            reach,
            prefix,
        };
        let mut entries = Vec::new();
        exact_entries(&ctx, i, &mut entries);
        for (family, k, label, dist) in mc_jobs(&ctx, i) {
            job_id += 1;
            let seed = cfg.seed ^ job_id.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let (mean, se) = block_mc(g, spec, i, k, &dist, ctx.z[k + 1], cfg.episodes, seed, cfg.exec);
            let payoff = ctx.prefix[k] + ctx.reach[k] * mean;
            entries.push(DeviationEntry {
                family,
                block: Some(k),
                label,
                payoff,
                gain: payoff - ctx.z[0],
                se: Some(ctx.reach[k] * se),
            });
        }
        let worst = entries
            .iter()
            .max_by(|a, b| a.gain.total_cmp(&b.gain));
        let max_gain = worst.map_or(f64::NEG_INFINITY, |e| e.gain);
        let max_gain_se = worst.and_then(|e| e.se);
        let pass = entries.iter().all(|e| e.upper() <= bound);
        reports.push(PlayerDeviations {
            player: i,
            baseline: ctx.z[0],
            entries,
            max_gain,
            max_gain_se,
            pass,
        });
    }
    let max_gain = reports.iter().map(|p| p.max_gain).fold(f64::NEG_INFINITY, f64::max);
    let pass = reports.iter().all(|p| p.pass);
    Ok(DeviationReport {
        epsilon: spec.epsilon,
        bound,
        episodes: if needs_mc { cfg.episodes } else { 0 },
        seed: cfg.seed,
        families: cfg.families.clone(),
        players: reports,
        max_gain,
        pass,
    })
}
