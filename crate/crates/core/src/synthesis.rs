//! Block strategy profile built from an orbit: per-block stationary
//! profiles, horizons, statistical tests and punishment switching.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Certificate, DynamicsStep, StepDetail, Witness};
use crate::error::{Error, Result};
use crate::game::{Game, MixedProfile, PayoffVector};
use crate::orbit::Orbit;
use crate::threat::{best_reply_value, ThreatValues};

/// Horizons beyond this are rejected outright.
pub const HORIZON_LIMIT: u64 = 1 << 62;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisConfig {
    /// First stage at which the frequency rule applies.
    pub n_min: u64,
    /// Allowed gap between realized and target block absorption.
    pub tol_block: f64,
    pub max_horizon: u64,
    /// Minimum expected number of exit-action plays per coalition member.
    pub min_exit_plays: f64,
    /// Candidate mixing weights are `2^-k` for `k` in this range.
    pub beta_pow_min: i32,
    pub beta_pow_max: i32,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            n_min: 100,
            tol_block: 1e-3,
            max_horizon: 10_000_000,
            min_exit_plays: 20.0,
            beta_pow_min: 3,
            beta_pow_max: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockCase {
    /// Equilibrium of the one-shot game, played once.
    OneShot,
    /// One player mixes onto a maximal absorbing reply.
    Unilateral,
    /// A coalition mixes onto a joint exit.
    JointExit,
    /// Stationary profile from a dominating joint exit.
    Certificate,
}

/// Detection rules for one block. Rule 1: an action outside the support of
/// `y_i` fires at once. Rule 2: from stage `n_min` on, the empirical
/// distribution of player `i` must stay within `radius(i, n)` of `y_i` in
/// the sup norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub enabled: bool,
    pub eta: f64,
    pub n_min: u64,
    pub horizon: u64,
    /// `ln(2 |A_i| T / eta)` per player.
    pub log_terms: Vec<f64>,
}

impl TestConfig {
    pub fn new(action_counts: &[usize], horizon: u64, eta: f64, n_min: u64) -> Self {
        TestConfig {
            enabled: true,
            eta,
            n_min,
            horizon,
            log_terms: action_counts
                .iter()
                .map(|&a| (2.0 * a as f64 * horizon as f64 / eta).ln())
                .collect(),
        }
    }

    pub fn disabled(n_players: usize, horizon: u64) -> Self {
        TestConfig {
            enabled: false,
            eta: 0.0,
            n_min: u64::MAX,
            horizon,
            log_terms: vec![0.0; n_players],
        }
    }

    /// `sqrt(ln(2 |A_i| T / eta) / (2 n))`.
    pub fn radius(&self, i: usize, n: u64) -> f64 {
        (self.log_terms[i] / (2.0 * n as f64)).sqrt()
    }

    /// Whether player `i` is flagged after stage `n` (1-based) of the block,
    /// having just played `action`, with cumulative `counts`.
    pub fn fires(&self, i: usize, y_i: &[f64], counts: &[u64], n: u64, action: usize) -> bool {
        if !self.enabled {
            return false;
        }
        if y_i[action] <= 0.0 {
            return true;
        }
        if n < self.n_min {
            return false;
        }
        let nf = n as f64;
        let dev = counts
            .iter()
            .zip(y_i)
            .map(|(&c, &y)| (c as f64 / nf - y).abs())
            .fold(0.0, f64::max);
        dev > self.radius(i, n)
    }

    /// Number of stages after stage `n` at which the frequency rule cannot
    /// fire, whatever is played. Scaled by `n`, the gap `|c_a - n y_a|` moves
    /// by at most one per stage while the threshold `sqrt(n ln(..) / 2)` only
    /// grows.
    pub fn quiet_stages(&self, i: usize, y_i: &[f64], counts: &[u64], n: u64) -> u64 {
        if !self.enabled {
            return u64::MAX;
        }
        if n < self.n_min {
            return self.n_min - n - 1;
        }
        let nf = n as f64;
        let gap = counts
            .iter()
            .zip(y_i)
            .map(|(&c, &y)| (c as f64 - nf * y).abs())
            .fold(0.0, f64::max);
        let slack = (nf * self.log_terms[i] / 2.0).sqrt() - gap - 1e-6;
        if slack < 1.0 {
            0
        } else {
            slack as u64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub case: BlockCase,
    /// Stationary profile played throughout the block.
    pub y: MixedProfile,
    /// Nonabsorbing profile `y` is built from (the equilibrium itself for
    /// one-shot blocks).
    pub base: MixedProfile,
    pub horizon: u64,
    pub beta: Option<f64>,
    /// Players shifting weight onto an absorbing action, with those actions.
    pub exit_players: Vec<usize>,
    pub exit_actions: Vec<usize>,
    /// `p(y)`.
    pub stage_absorption: f64,
    /// `r(y)`.
    pub absorbing_payoff: PayoffVector,
    pub target_mass: f64,
    /// `1 - (1 - p(y))^T`.
    pub realized_mass: f64,
    pub eta: f64,
    pub test: TestConfig,
    /// Continuation target at the start of the block.
    pub w_start: PayoffVector,
    /// Terminal payoff the block was designed against.
    pub w_end: PayoffVector,
    /// Stages played before this block.
    pub start: u64,
}

impl BlockSpec {
    /// `m r(y) + (1 - m) w_end`.
    pub fn implemented(&self) -> PayoffVector {
        self.w_end.lerp(&self.absorbing_payoff, self.realized_mass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailKind {
    /// Base profile of the last block.
    LastBlockBase,
    /// Lowest-index nonabsorbing pure profile.
    LowestNonabsorbing,
    /// The last block's profile, no nonabsorbing profile being available.
    LastBlockProfile,
    /// The certificate profile, played forever.
    Certificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub epsilon: f64,
    pub delta: Option<f64>,
    pub blocks: Vec<BlockSpec>,
    /// Profile played against each detected deviator.
    pub punish: Vec<MixedProfile>,
    /// Best-reply value of each player against its punishment profile.
    pub punish_values: Vec<f64>,
    pub tail: MixedProfile,
    pub tail_kind: TailKind,
    pub total_horizon: u64,
    pub eta_total: f64,
    /// Target payoff `w^(0)`.
    pub target: PayoffVector,
}

impl StrategySpec {
    pub fn n_players(&self) -> usize {
        self.punish.len()
    }

    /// Block containing global stage `stage` (0-based), or `None` in the
    /// tail.
    pub fn block_at(&self, stage: u64) -> Option<usize> {
        if stage >= self.total_horizon {
            return None;
        }
        Some(self.blocks.partition_point(|b| b.start + b.horizon <= stage))
    }

    /// Stage of block `k` (1-based) at which a pure stationary play of `b`
    /// by player `i` is flagged, if within the block.
    pub fn pure_detection_stage(&self, k: usize, i: usize, b: usize) -> Option<u64> {
        let block = &self.blocks[k];
        let t = &block.test;
        if !t.enabled {
            return None;
        }
        let y = block.y.player(i);
        if y[b] <= 0.0 {
            return Some(1);
        }
        let gap = y
            .iter()
            .enumerate()
            .map(|(a, &ya)| if a == b { (1.0 - ya).abs() } else { ya.abs() })
            .fold(0.0, f64::max);
        if gap <= 0.0 {
            return None;
        }
        let guess = (t.log_terms[i] / (2.0 * gap * gap)).floor() as u64;
        let mut n = guess.saturating_sub(2).max(t.n_min).max(1);
        while n <= block.horizon {
            if gap > t.radius(i, n) {
                return Some(n);
            }
            n += 1;
        }
        None
    }
}

fn mixed_onto(x: &MixedProfile, players: &[usize], actions: &[usize], beta: f64) -> MixedProfile {
    let mut v: Vec<Vec<f64>> = x.as_vecs().to_vec();
    for (&j, &a) in players.iter().zip(actions) {
        for w in v[j].iter_mut() {
            *w *= 1.0 - beta;
        }
        v[j][a] += beta;
    }
    MixedProfile::from_vecs(v)
}

fn horizon_for(target: f64, p: f64) -> f64 {
    if p >= 1.0 {
        return 1.0;
    }
    ((1.0 - target).ln() / (1.0 - p).ln()).round().max(1.0)
}

fn realized(p: f64, t: u64) -> f64 {
    1.0 - (1.0 - p).powf(t as f64)
}

struct Mixing {
    beta: f64,
    y: MixedProfile,
    p: f64,
    r: PayoffVector,
    horizon: u64,
    realized: f64,
}

/// Largest `beta = 2^-k` meeting the mass, horizon and exit-play bounds.
#[allow(clippy::too_many_arguments)]
fn choose_beta(
    g: &Game,
    x: &MixedProfile,
    players: &[usize],
    actions: &[usize],
    target: f64,
    eta: f64,
    joint: bool,
    cfg: &SynthesisConfig,
) -> Result<Mixing> {
    let mass_tol = (eta / 4.0).min(cfg.tol_block);
    let mut last = String::from("no candidate");
    for pow in cfg.beta_pow_min..=cfg.beta_pow_max {
        let beta = 0.5f64.powi(pow);
        let y = mixed_onto(x, players, actions, beta);
        let j = g.joint(&y, &[]);
        let Some(r) = j.payoff() else {
            last = format!("beta {beta} does not absorb");
            continue;
        };
        let t = horizon_for(target, j.p);
        if t > cfg.max_horizon as f64 {
            last = format!("beta {beta} needs {t} stages");
            break;
        }
        let horizon = t as u64;
        let m = realized(j.p, horizon);
        if (m - target).abs() > mass_tol {
            last = format!("beta {beta} realizes mass {m} against {target}");
            continue;
        }
        if joint && (horizon as f64) * beta < cfg.min_exit_plays {
            last = format!("beta {beta} gives {} exit plays", horizon as f64 * beta);
            continue;
        }
        return Ok(Mixing {
            beta,
            y,
            p: j.p,
            r,
            horizon,
            realized: m,
        });
    }
    Err(Error::HorizonOverflow(last))
}

/// Block implementing one orbit step. `w_start` is `w^(k)`, the step maps
/// `w^(k+1)` to it.
pub fn block_for_step(
    g: &Game,
    s: &DynamicsStep,
    w_start: &PayoffVector,
    eta: f64,
    cfg: &SynthesisConfig,
) -> Result<BlockSpec> {
    let n = g.n_players();
    let counts = g.action_counts();
    let (case, base, mixing, players, actions, target) = match (&s.classification.witness, &s.detail) {
        (Witness::WL { x_hat, .. }, StepDetail::WL { .. }) => {
            let j = g.joint(x_hat, &[]);
            let r = j
                .payoff()
                .ok_or_else(|| Error::InvalidWitness("one-shot equilibrium does not absorb".into()))?;
            let mix = Mixing {
                beta: 0.0,
                y: x_hat.clone(),
                p: j.p,
                r,
                horizon: 1,
                realized: j.p,
            };
            (BlockCase::OneShot, x_hat.clone(), mix, vec![], vec![], s.mu)
        }
        (Witness::W { x, .. }, StepDetail::W { player, action, .. }) => {
            let mix = choose_beta(g, x, &[*player], &[*action], s.mu, eta, false, cfg)?;
            (BlockCase::Unilateral, x.clone(), mix, vec![*player], vec![*action], s.mu)
        }
        (Witness::WH { x, exit, .. }, StepDetail::WH { alpha, .. }) => {
            let mix = choose_beta(g, x, &exit.coalition, &exit.actions, *alpha, eta, true, cfg)?;
            (
                BlockCase::JointExit,
                x.clone(),
                mix,
                exit.coalition.clone(),
                exit.actions.clone(),
                *alpha,
            )
        }
        _ => return Err(Error::InvalidWitness("witness and step detail disagree".into())),
    };
    let test = if case == BlockCase::OneShot {
        TestConfig::disabled(n, 1)
    } else {
        TestConfig::new(&counts, mixing.horizon, eta, cfg.n_min)
    };
    Ok(BlockSpec {
        case,
        y: mixing.y,
        base,
        horizon: mixing.horizon,
        beta: (case != BlockCase::OneShot).then_some(mixing.beta),
        exit_players: players,
        exit_actions: actions,
        stage_absorption: mixing.p,
        absorbing_payoff: mixing.r,
        target_mass: target,
        realized_mass: mixing.realized,
        eta: if case == BlockCase::OneShot { 0.0 } else { eta },
        test,
        w_start: w_start.clone(),
        w_end: s.w.clone(),
        start: 0,
    })
}

fn punishments(g: &Game, threats: &ThreatValues) -> (Vec<MixedProfile>, Vec<f64>) {
    let punish: Vec<MixedProfile> = (0..g.n_players()).map(|i| threats.punish(i).clone()).collect();
    let values = punish
        .iter()
        .enumerate()
        .map(|(i, x)| best_reply_value(g, i, x))
        .collect();
    (punish, values)
}

fn assign_starts(blocks: &mut [BlockSpec]) -> Result<u64> {
    let mut start: u64 = 0;
    for b in blocks.iter_mut() {
        b.start = start;
        start = start
            .checked_add(b.horizon)
            .filter(|s| *s < HORIZON_LIMIT)
            .ok_or_else(|| Error::HorizonOverflow("cumulative horizon".into()))?;
    }
    Ok(start)
}

/// The block profile: block `k` implements the orbit step from `w^(k+1)` to
/// `w^(k)` with test budget `eta = epsilon / (2 K_0)`.
pub fn synthesize(g: &Game, orbit: &Orbit, threats: &ThreatValues, cfg: &SynthesisConfig) -> Result<StrategySpec> {
    if orbit.k0 == 0 {
        return Err(Error::Config("orbit has no steps".into()));
    }
    let eta = orbit.epsilon / (2.0 * orbit.k0 as f64);
    let mut blocks = orbit
        .steps
        .iter()
        .enumerate()
        .map(|(k, s)| block_for_step(g, s, &orbit.points[k], eta, cfg))
        .collect::<Result<Vec<_>>>()?;
    let total_horizon = assign_starts(&mut blocks)?;
    let last = blocks.last().expect("k0 > 0");
    let (tail, tail_kind) = if g.absorb_prob_mixed(&last.base) == 0.0 {
        (last.base.clone(), TailKind::LastBlockBase)
    } else if let Some(idx) = (0..g.n_profiles()).find(|&k| !g.is_absorbing(k)) {
        (MixedProfile::pure(g, &g.decode(idx)), TailKind::LowestNonabsorbing)
    } else {
        (last.y.clone(), TailKind::LastBlockProfile)
    };
    let eta_total = blocks.iter().map(|b| b.eta).sum();
    let (punish, punish_values) = punishments(g, threats);
    Ok(StrategySpec {
        epsilon: orbit.epsilon,
        delta: Some(orbit.delta),
        blocks,
        punish,
        punish_values,
        tail,
        tail_kind,
        total_horizon,
        eta_total,
        target: orbit.points[0].clone(),
    })
}

/// A single monitored block playing the certificate profile until at most
/// `epsilon / 10` of the mass is unabsorbed, followed by the same profile
/// forever. The test budget is `epsilon / 2`.
pub fn synthesize_certificate(
    g: &Game,
    cert: &Certificate,
    threats: &ThreatValues,
    epsilon: f64,
    cfg: &SynthesisConfig,
) -> Result<StrategySpec> {
    let j = g.joint(&cert.xi, &[]);
    let r = j
        .payoff()
        .ok_or_else(|| Error::InvalidWitness("certificate profile does not absorb".into()))?;
    let t = if j.p >= 1.0 {
        1.0
    } else {
        ((epsilon / 10.0).ln() / (1.0 - j.p).ln()).ceil().max(1.0)
    };
    if t > cfg.max_horizon as f64 {
        return Err(Error::HorizonOverflow(format!("certificate needs {t} stages")));
    }
    let horizon = t as u64;
    let eta = epsilon / 2.0;
    let n = g.n_players();
    let block = BlockSpec {
        case: BlockCase::Certificate,
        y: cert.xi.clone(),
        base: cert.x.clone(),
        horizon,
        beta: Some(cert.beta),
        exit_players: cert.exit.coalition.clone(),
        exit_actions: cert.exit.actions.clone(),
        stage_absorption: j.p,
        absorbing_payoff: r.clone(),
        target_mass: 1.0 - epsilon / 10.0,
        realized_mass: realized(j.p, horizon),
        eta,
        test: TestConfig::new(&g.action_counts(), horizon, eta, cfg.n_min),
        w_start: r.clone(),
        w_end: r.clone(),
        start: 0,
    };
    let (punish, punish_values) = punishments(g, threats);
    debug_assert_eq!(punish.len(), n);
    Ok(StrategySpec {
        epsilon,
        delta: None,
        blocks: vec![block],
        punish,
        punish_values,
        tail: cert.xi.clone(),
        tail_kind: TailKind::Certificate,
        total_horizon: horizon,
        eta_total: eta,
        target: r,
    })
}

/// Where play stands after a history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Block(usize),
    Tail,
    /// Punishing the given player from the recorded stage on.
    Punish { player: usize, since: u64 },
}

/// Incremental replay of the detection rules.
#[derive(Debug, Clone)]
pub struct Monitor<'a> {
    spec: &'a StrategySpec,
    stage: u64,
    block: usize,
    in_block: u64,
    counts: Vec<Vec<u64>>,
    phase: Phase,
}

impl<'a> Monitor<'a> {
    pub fn new(spec: &'a StrategySpec) -> Self {
        let counts = spec.blocks.first().map_or_else(Vec::new, |b| {
            b.y.as_vecs().iter().map(|v| vec![0; v.len()]).collect()
        });
        let phase = if spec.blocks.is_empty() { Phase::Tail } else { Phase::Block(0) };
        Monitor {
            spec,
            stage: 0,
            block: 0,
            in_block: 0,
            counts,
            phase,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Stages observed so far.
    pub fn stage(&self) -> u64 {
        self.stage
    }

    /// Profile prescribed for the next stage.
    pub fn profile(&self) -> &'a MixedProfile {
        match self.phase {
            Phase::Block(k) => &self.spec.blocks[k].y,
            Phase::Tail => &self.spec.tail,
            Phase::Punish { player, .. } => &self.spec.punish[player],
        }
    }

    /// Records one stage of play. Returns the deviator flagged at this stage,
    /// lowest index first.
    pub fn observe(&mut self, actions: &[usize]) -> Option<usize> {
        self.stage += 1;
        let Phase::Block(k) = self.phase else {
            return None;
        };
        let block = &self.spec.blocks[k];
        self.in_block += 1;
        let mut flagged = None;
        for (i, &a) in actions.iter().enumerate() {
            self.counts[i][a] += 1;
            if flagged.is_none() && block.test.fires(i, block.y.player(i), &self.counts[i], self.in_block, a) {
                flagged = Some(i);
            }
        }
        if let Some(i) = flagged {
            self.phase = Phase::Punish {
                player: i,
                since: self.stage + 1,
            };
            return flagged;
        }
        if self.in_block == block.horizon {
            self.block = k + 1;
            self.in_block = 0;
            for c in self.counts.iter_mut() {
                c.iter_mut().for_each(|v| *v = 0);
            }
            self.phase = if self.block < self.spec.blocks.len() {
                Phase::Block(self.block)
            } else {
                Phase::Tail
            };
        }
        None
    }
}

/// The profile prescribed after `history`, a list of stage action profiles
/// with no absorption.
pub fn strategy_at<'a>(spec: &'a StrategySpec, history: &[Vec<usize>]) -> (Phase, &'a MixedProfile) {
    let mut m = Monitor::new(spec);
    for a in history {
        m.observe(a);
    }
    (m.phase(), m.profile())
}
