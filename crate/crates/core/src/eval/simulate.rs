//! Seeded Monte Carlo replay of a block strategy profile, statistical tests
//! and punishment included.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{exact_eval, stationary_value};
use crate::game::{Game, PayoffVector};
use crate::par::{map_chunks, Exec};
use crate::synthesis::{Monitor, Phase, StrategySpec};

pub const CHUNK: usize = 4096;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub episodes: u64,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            episodes: 100_000,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub episodes: u64,
    pub seed: u64,
    pub mean: PayoffVector,
    pub se: Vec<f64>,
    /// Fraction of episodes absorbed before the blocks end.
    pub absorbed_in_blocks: f64,
    /// Fraction of episodes in which some player is flagged before
    /// absorption.
    pub detection_rate: f64,
    pub detection_se: f64,
    pub mean_stages: f64,
    pub exact: PayoffVector,
    pub detection_bound: f64,
    /// `|mean - exact| <= detection_bound + 3 se` in every coordinate.
    pub agrees: bool,
}

/// Inverse-CDF table for one mixed action; zero-weight actions are never
/// drawn.
#[derive(Debug, Clone)]
pub(crate) struct Sampler {
    cum: Vec<f64>,
}

impl Sampler {
    pub(crate) fn new(dist: &[f64]) -> Self {
        let last = dist.iter().rposition(|p| *p > 0.0).unwrap_or(0);
        let mut acc = 0.0;
        let cum = dist
            .iter()
            .enumerate()
            .map(|(a, p)| {
                acc += p;
                if a >= last {
                    1.0
                } else {
                    acc
                }
            })
            .collect();
        Sampler { cum }
    }

    #[inline]
    pub(crate) fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cum.iter().position(|c| u < *c).unwrap_or(self.cum.len() - 1)
    }
}

/// Per-episode generator: stream `episode` of the ChaCha8 generator seeded
/// with `seed`, so results do not depend on how episodes are scheduled.
pub(crate) fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

struct Outcome {
    payoff: PayoffVector,
    absorbed: bool,
    detected: bool,
    stages: u64,
}

struct Ctx<'a> {
    g: &'a Game,
    spec: &'a StrategySpec,
    samplers: Vec<Vec<Sampler>>,
    punish_values: Vec<PayoffVector>,
    tail_value: PayoffVector,
}

fn play(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Outcome {
    let g = ctx.g;
    let n = g.n_players();
    let mut m = Monitor::new(ctx.spec);
    let mut actions = vec![0usize; n];
    loop {
        match m.phase() {
            Phase::Block(k) => {
                let mut idx = 0;
                for (i, s) in ctx.samplers[k].iter().enumerate() {
                    actions[i] = s.draw(rng);
                    idx += g.stride(i) * actions[i];
                }
                let p = g.prob(idx);
                if p > 0.0 && (p >= 1.0 || rng.random::<f64>() < p) {
                    return Outcome {
                        payoff: PayoffVector(g.payoff(idx).to_vec()),
                        absorbed: true,
                        detected: false,
                        stages: m.stage() + 1,
                    };
                }
                if let Some(i) = m.observe(&actions) {
                    return Outcome {
                        payoff: ctx.punish_values[i].clone(),
                        absorbed: false,
                        detected: true,
                        stages: m.stage(),
                    };
                }
            }
            Phase::Tail => {
                return Outcome {
                    payoff: ctx.tail_value.clone(),
                    absorbed: false,
                    detected: false,
                    stages: m.stage(),
                };
            }
            Phase::Punish { player, .. } => {
                return Outcome {
                    payoff: ctx.punish_values[player].clone(),
                    absorbed: false,
                    detected: true,
                    stages: m.stage(),
                };
            }
        }
    }
}

#[derive(Default)]
struct Acc {
    sum: Vec<f64>,
    sq: Vec<f64>,
    absorbed: u64,
    detected: u64,
    stages: f64,
}

/// Plays `episodes` independent episodes of `spec`.
pub fn simulate(g: &Game, spec: &StrategySpec, cfg: &SimConfig) -> Result<SimReport> {
    if cfg.episodes == 0 {
        return Err(Error::Config("episodes must be at least 1".into()));
    }
    let n = g.n_players();
    let ctx = Ctx {
        g,
        spec,
        samplers: spec
            .blocks
            .iter()
            .map(|b| b.y.as_vecs().iter().map(|d| Sampler::new(d)).collect())
            .collect(),
        punish_values: spec.punish.iter().map(|x| stationary_value(g, x)).collect(),
        tail_value: stationary_value(g, &spec.tail),
    };
    let chunks = map_chunks(cfg.exec, cfg.episodes as usize, CHUNK, |s, e| {
        let mut acc = Acc {
            sum: vec![0.0; n],
            sq: vec![0.0; n],
            ..Acc::default()
        };
        for ep in s..e {
            let mut rng = episode_rng(cfg.seed, ep as u64);
            let o = play(&ctx, &mut rng);
            for i in 0..n {
                acc.sum[i] += o.payoff[i];
                acc.sq[i] += o.payoff[i] * o.payoff[i];
            }
            acc.absorbed += o.absorbed as u64;
            acc.detected += o.detected as u64;
            acc.stages += o.stages as f64;
        }
        acc
    });
    let mut total = Acc {
        sum: vec![0.0; n],
        sq: vec![0.0; n],
        ..Acc::default()
    };
    for c in chunks {
        for i in 0..n {
            total.sum[i] += c.sum[i];
            total.sq[i] += c.sq[i];
        }
        total.absorbed += c.absorbed;
        total.detected += c.detected;
        total.stages += c.stages;
    }
    let ne = cfg.episodes as f64;
    let mean: Vec<f64> = total.sum.iter().map(|s| s / ne).collect();
    let se: Vec<f64> = total
        .sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| ((sq / ne - m * m).max(0.0) / ne).sqrt())
        .collect();
    let rate = total.detected as f64 / ne;
    let exact = exact_eval(g, spec);
    let agrees = (0..n).all(|i| (mean[i] - exact.gamma[i]).abs() <= exact.detection_bound + 3.0 * se[i] + 1e-12);
    Ok(SimReport {
        episodes: cfg.episodes,
        seed: cfg.seed,
        mean: PayoffVector(mean),
        se,
        absorbed_in_blocks: total.absorbed as f64 / ne,
        detection_rate: rate,
        detection_se: (rate * (1.0 - rate) / ne).sqrt(),
        mean_stages: total.stages / ne,
        exact: exact.gamma,
        detection_bound: exact.detection_bound,
        agrees,
    })
}
