//! Minmax values and stationary punishment profiles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Game, MixedProfile, PayoffVector};
use crate::lp::{Lp, LpError};
use crate::par::{map_indexed, Exec};
use crate::structure::product_iter;

/// Best absorbing reply of player `i` against `x_{-i}`: the largest
/// `r_i(a_i, x_{-i})` over actions with `p(a_i, x_{-i}) > 0`, lowest index on
/// ties. `None` when no action of `i` absorbs.
pub fn absorbing_reply(g: &Game, i: usize, x: &MixedProfile) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (a, j) in g.reply_table(i, x).iter().enumerate() {
        if j.p > 0.0 {
            let r = j.weighted[i] / j.p;
            if best.is_none_or(|(v, _)| r > v) {
                best = Some((r, a));
            }
        }
    }
    best
}

/// Optimal undiscounted payoff of player `i` against the stationary `x_{-i}`.
pub fn best_reply_value(g: &Game, i: usize, x: &MixedProfile) -> f64 {
    absorbing_reply(g, i, x).map_or(0.0, |(v, _)| v)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinmaxConfig {
    pub tol_v: f64,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Run the discounted cross-check.
    pub discounted: bool,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for MinmaxConfig {
    fn default() -> Self {
        MinmaxConfig {
            tol_v: 1e-6,
            restarts: 64,
            max_iters: 200,
            seed: 0,
            discounted: true,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountedCheck {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    /// Linear extrapolation to `lambda = 0` from the two smallest lambdas.
    pub extrapolated: f64,
    pub difference: f64,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerThreat {
    pub player: usize,
    /// Best reply value against `punish`; an upper bound on the minmax value.
    pub value: f64,
    /// Largest level shown (2 players) or believed (3+) to be infeasible.
    pub lower_bound: f64,
    pub certified: bool,
    /// Full profile: opponents minmax, the punished player best-replies.
    pub punish: MixedProfile,
    pub method: String,
    pub iterations: usize,
    pub restarts: usize,
    pub residual: f64,
    pub discounted: Option<DiscountedCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreatValues {
    pub players: Vec<PlayerThreat>,
}

impl ThreatValues {
    pub fn values(&self) -> PayoffVector {
        PayoffVector(self.players.iter().map(|p| p.value).collect())
    }

    pub fn punish(&self, i: usize) -> &MixedProfile {
        &self.players[i].punish
    }
}

pub fn minmax_all(g: &Game, cfg: &MinmaxConfig) -> Result<ThreatValues> {
    let players = (0..g.n_players())
        .map(|i| minmax(g, i, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(ThreatValues { players })
}

pub fn minmax(g: &Game, i: usize, cfg: &MinmaxConfig) -> Result<PlayerThreat> {
    let mut out = if g.n_players() == 2 {
        minmax_two(g, i, cfg)?
    } else {
        minmax_multi(g, i, cfg)
    };
    if cfg.discounted {
        out.discounted = Some(discounted_check(g, i, out.value, cfg)?);
    }
    Ok(out)
}

fn with_reply(g: &Game, i: usize, x: MixedProfile) -> MixedProfile {
    let a = absorbing_reply(g, i, &x).map_or(0, |(_, a)| a);
    x.with_pure(i, a)
}

/// Coefficients `M[a][b] = p(a, b) (r_i(a, b) - v)` with `b` the opponent's
/// action.
fn two_player_rows(g: &Game, i: usize, v: f64) -> Vec<Vec<f64>> {
    let j = 1 - i;
    (0..g.n_actions(i))
        .map(|a| {
            (0..g.n_actions(j))
                .map(|b| {
                    let mut prof = [0usize; 2];
                    prof[i] = a;
                    prof[j] = b;
                    let idx = g.index(&prof);
                    g.prob(idx) * (g.payoff(idx)[i] - v)
                })
                .collect()
        })
        .collect()
}

/// Opponent mixed action with `sum_b y_b p(a,b)(r_i(a,b) - v) <= 0` for
/// every `a`, if one exists.
fn feasible_two(g: &Game, i: usize, v: f64) -> std::result::Result<Option<Vec<f64>>, LpError> {
    let m = g.n_actions(1 - i);
    let mut lp = Lp::new(m);
    for row in two_player_rows(g, i, v) {
        lp.add_le(row, 0.0);
    }
    lp.add_eq(vec![1.0; m], 1.0);
    match lp.solve() {
        Ok(s) => Ok(Some(normalise(s.x))),
        Err(LpError::Infeasible) => Ok(None),
        Err(e) => Err(e),
    }
}

fn normalise(mut x: Vec<f64>) -> Vec<f64> {
    for v in x.iter_mut() {
        if *v < 1e-12 {
            *v = 0.0;
        }
    }
    let s: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= s);
    x
}

fn opponent_profile(g: &Game, i: usize, y: Vec<f64>) -> MixedProfile {
    let mut v: Vec<Vec<f64>> = (0..g.n_players())
        .map(|k| {
            let mut e = vec![0.0; g.n_actions(k)];
            e[0] = 1.0;
            e
        })
        .collect();
    v[1 - i] = y;
    MixedProfile::from_vecs(v)
}

fn minmax_two(g: &Game, i: usize, cfg: &MinmaxConfig) -> Result<PlayerThreat> {
    let budget = |_| Error::SearchBudgetExceeded {
        player: i,
        bound: 1.0,
    };
    let mut iterations = 1;
    if let Some(y) = feasible_two(g, i, 0.0).map_err(budget)? {
        let x = opponent_profile(g, i, y);
        return Ok(PlayerThreat {
            player: i,
            value: best_reply_value(g, i, &x),
            lower_bound: 0.0,
            certified: true,
            punish: with_reply(g, i, x),
            method: "lp-bisection".into(),
            iterations,
            restarts: 0,
            residual: 0.0,
            discounted: None,
        });
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best = feasible_two(g, i, 1.0)
        .map_err(budget)?
        .ok_or(Error::SearchBudgetExceeded { player: i, bound: 1.0 })?;
    while hi - lo > cfg.tol_v / 4.0 && iterations < 200 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        match feasible_two(g, i, mid).map_err(|_| Error::SearchBudgetExceeded {
            player: i,
            bound: hi,
        })? {
            Some(y) => {
                hi = mid;
                best = y;
            }
            None => lo = mid,
        }
    }
    let x = opponent_profile(g, i, best);
    let value = best_reply_value(g, i, &x);
    let residual = (value - lo).max(0.0);
    Ok(PlayerThreat {
        player: i,
        value,
        lower_bound: lo,
        certified: residual <= cfg.tol_v,
        punish: with_reply(g, i, x),
        method: "lp-bisection".into(),
        iterations,
        restarts: 0,
        residual,
        discounted: None,
    })
}

/// `max_a (W_a(x) - v P_a(x))` where `P_a = p(a, x_{-i})` and
/// `W_a = p(a, x_{-i}) r_i(a, x_{-i})`, with its maximising action.
fn gap(g: &Game, i: usize, x: &MixedProfile, v: f64) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (a, j) in g.reply_table(i, x).iter().enumerate() {
        let val = j.weighted[i] - v * j.p;
        if val > best.0 {
            best = (val, a);
        }
    }
    best
}

pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Projected subgradient descent on `gap(., v)` over the opponents'
/// simplices with step halving.
fn descend(g: &Game, i: usize, start: &MixedProfile, v: f64, max_iters: usize) -> MixedProfile {
    let n = g.n_players();
    let mut x = start.clone();
    let (mut cur, mut arg) = gap(g, i, &x, v);
    let mut step = 0.5;
    for _ in 0..max_iters {
        if cur < -1e-12 || step < 1e-9 {
            break;
        }
        let mut next = x.clone();
        for j in (0..n).filter(|&j| j != i) {
            let grad: Vec<f64> = (0..g.n_actions(j))
                .map(|c| {
                    let t = g.reply_table(i, &x.with_pure(j, c));
                    t[arg].weighted[i] - v * t[arg].p
                })
                .collect();
            let moved: Vec<f64> = x
                .player(j)
                .iter()
                .zip(&grad)
                .map(|(xj, gj)| xj - step * gj)
                .collect();
            next = next.with_player(j, project_simplex(&moved));
        }
        let (val, a) = gap(g, i, &next, v);
        if val < cur - 1e-15 {
            x = next;
            cur = val;
            arg = a;
            step *= 1.5;
        } else {
            step *= 0.5;
        }
    }
    x
}

/// Drops weights below `1e-6` of each player's largest weight.
fn clean(x: &MixedProfile) -> MixedProfile {
    MixedProfile::from_vecs(
        x.as_vecs()
            .iter()
            .map(|d| {
                let top = d.iter().cloned().fold(0.0, f64::max);
                let kept: Vec<f64> = d.iter().map(|&w| if w < 1e-6 * top { 0.0 } else { w }).collect();
                let s: f64 = kept.iter().sum();
                kept.iter().map(|w| w / s).collect()
            })
            .collect(),
    )
}

fn dirichlet(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let gamma = Gamma::new(1.0, 1.0).expect("valid gamma");
    let draws: Vec<f64> = (0..m).map(|_| gamma.sample(rng)).collect();
    let s: f64 = draws.iter().sum();
    draws.iter().map(|d| d / s).collect()
}

/// Starting points for the local search: uniform, Dirichlet(1) draws, and
/// pure opponent profiles when there are few of them.
fn starts(g: &Game, i: usize, restarts: usize, seed: u64) -> Vec<MixedProfile> {
    let n = g.n_players();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)));
    let all: Vec<Vec<usize>> = (0..n).map(|k| (0..g.n_actions(k)).collect()).collect();
    let mut out = vec![MixedProfile::uniform(g, &all)];
    for _ in 0..restarts {
        out.push(MixedProfile::from_vecs(
            (0..n).map(|k| dirichlet(&mut rng, g.n_actions(k))).collect(),
        ));
    }
    let mut sets: Vec<Vec<usize>> = all.clone();
    sets[i] = vec![0];
    let pure_count: usize = sets.iter().map(Vec::len).product();
    if pure_count <= 256 {
        out.extend(product_iter(&sets).map(|p| MixedProfile::pure(g, &p)));
    }
    out
}

fn minmax_multi(g: &Game, i: usize, cfg: &MinmaxConfig) -> PlayerThreat {
    let mut points = starts(g, i, cfg.restarts, cfg.seed);
    let restarts = points.len();
    let eval = |x: &MixedProfile| {
        let c = clean(x);
        let (a, b) = (best_reply_value(g, i, x), best_reply_value(g, i, &c));
        if b <= a {
            (b, c)
        } else {
            (a, x.clone())
        }
    };
    let (mut hi, mut best) = points
        .iter()
        .map(eval)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one start");
    let mut lo = 0.0f64;
    let mut iterations = 0;
    while hi - lo > cfg.tol_v / 2.0 && iterations < 60 {
        iterations += 1;
        let v = 0.5 * (lo + hi);
        let moved = map_indexed(cfg.exec, points.len(), |k| {
            let x = descend(g, i, &points[k], v, cfg.max_iters);
            let e = eval(&x);
            (x, e)
        });
        let mut round_best: Option<(f64, MixedProfile)> = None;
        for (k, (x, e)) in moved.into_iter().enumerate() {
            points[k] = x;
            if round_best.as_ref().is_none_or(|b| e.0 < b.0) {
                round_best = Some(e);
            }
        }
        let (rv, rx) = round_best.expect("nonempty");
        if rv < hi {
            hi = rv;
            best = rx;
        }
        if hi > v {
            lo = v;
        }
    }
    PlayerThreat {
        player: i,
        value: hi,
        lower_bound: lo,
        certified: false,
        punish: with_reply(g, i, best),
        method: "multistart-descent".into(),
        iterations,
        restarts,
        residual: hi - lo,
        discounted: None,
    }
}

/// `min over x_{-i}` of `gap(x, v)`; exact for two players.
fn min_gap(g: &Game, i: usize, v: f64, cfg: &MinmaxConfig, points: &[MixedProfile]) -> Result<f64> {
    if g.n_players() == 2 {
        let m = g.n_actions(1 - i);
        let shift = 1.0;
        let mut lp = Lp::new(m + 1);
        let mut c = vec![0.0; m + 1];
        c[m] = 1.0;
        lp.minimize(c);
        for row in two_player_rows(g, i, v) {
            // row . y - (t - shift) <= 0 keeps the epigraph variable nonnegative.
            let mut r = row;
            r.push(-1.0);
            lp.add_le(r, -shift);
        }
        let mut ones = vec![1.0; m + 1];
        ones[m] = 0.0;
        lp.add_eq(ones, 1.0);
        let s = lp.solve().map_err(|_| Error::SearchBudgetExceeded {
            player: i,
            bound: v,
        })?;
        return Ok(s.x[m] - shift);
    }
    let vals = map_indexed(cfg.exec, points.len(), |k| {
        let x = descend(g, i, &points[k], v, cfg.max_iters);
        gap(g, i, &x, v).0.min(gap(g, i, &clean(&x), v).0)
    });
    Ok(vals.into_iter().fold(f64::INFINITY, f64::min))
}

/// Discounted values `V_lambda` solving `V = (1 - lambda)(V + min_x gap(x, V))`,
/// found by bisection since the right side minus `V` is strictly decreasing.
pub fn discounted_value(g: &Game, i: usize, lambda: f64, cfg: &MinmaxConfig) -> Result<f64> {
    let points = if g.n_players() == 2 {
        Vec::new()
    } else {
        starts(g, i, cfg.restarts.min(8), cfg.seed)
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..48 {
        let v = 0.5 * (lo + hi);
        let h = (1.0 - lambda) * (v + min_gap(g, i, v, cfg, &points)?) - v;
        if h > 0.0 {
            lo = v;
        } else {
            hi = v;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn discounted_check(g: &Game, i: usize, v: f64, cfg: &MinmaxConfig) -> Result<DiscountedCheck> {
    let lambdas = vec![1e-2, 1e-3, 1e-4];
    let values = lambdas
        .iter()
        .map(|&l| discounted_value(g, i, l, cfg))
        .collect::<Result<Vec<_>>>()?;
    let (l1, l2) = (lambdas[1], lambdas[2]);
    let (v1, v2) = (values[1], values[2]);
    let extrapolated = (v2 * l1 - v1 * l2) / (l1 - l2);
    let difference = (extrapolated - v).abs();
    Ok(DiscountedCheck {
        lambdas,
        values,
        extrapolated,
        difference,
        agrees: difference <= 1e-3,
    })
}
