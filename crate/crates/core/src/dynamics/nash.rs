//! Equilibria of the one-shot game `G(w)` with payoffs
//! `u_i(a) = p(a) r_i(a) + (1 - p(a)) w_i`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Game, MixedProfile, PayoffVector};
use crate::lp::Lp;
use crate::structure::product_iter;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NashConfig {
    /// Largest admissible gain from a unilateral deviation.
    pub tolerance: f64,
    /// Equilibria absorbing with probability at most this are skipped.
    pub min_absorption: f64,
    pub regret_iterations: usize,
    pub newton_starts: usize,
    pub seed: u64,
}

impl Default for NashConfig {
    fn default() -> Self {
        NashConfig {
            tolerance: 1e-6,
            min_absorption: 1e-6,
            regret_iterations: 20_000,
            newton_starts: 4,
            seed: 0,
        }
    }
}

/// Largest gain any player obtains by a pure deviation from `x` in `G(w)`.
pub fn nash_gap(g: &Game, w: &PayoffVector, x: &MixedProfile) -> f64 {
    let own = g.one_shot_payoff(w, x);
    (0..g.n_players())
        .map(|i| {
            g.reply_table(i, x)
                .iter()
                .map(|j| j.weighted[i] + (1.0 - j.p) * w[i] - own[i])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(0.0, f64::max)
}

fn accept(g: &Game, w: &PayoffVector, x: &MixedProfile, cfg: &NashConfig) -> bool {
    g.absorb_prob_mixed(x) > cfg.min_absorption && nash_gap(g, w, x) <= cfg.tolerance
}

/// Some equilibrium of `G(w)` with positive absorption probability.
pub fn solve_one_shot_nash(g: &Game, w: &PayoffVector, cfg: &NashConfig) -> Result<MixedProfile> {
    let found = if g.n_players() == 2 {
        support_enumeration_two(g, w, cfg)
    } else {
        pure_equilibrium(g, w, cfg)
            .or_else(|| regret_matching(g, w, cfg))
            .or_else(|| support_enumeration_newton(g, w, cfg))
    };
    found.ok_or(Error::NashNotFound {
        tolerance: cfg.tolerance,
    })
}

/// Nonempty subsets of `0..m`, smallest first.
fn subsets(m: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (1u32..(1 << m))
        .map(|mask| (0..m).filter(|a| mask & (1 << a) != 0).collect())
        .collect();
    out.sort_by_key(|s| s.len());
    out
}

/// `u_i` at every pure profile, shifted by one so all entries are positive.
fn shifted_payoffs(g: &Game, w: &PayoffVector, i: usize) -> Vec<f64> {
    (0..g.n_profiles())
        .map(|idx| g.prob(idx) * g.payoff(idx)[i] + (1.0 - g.prob(idx)) * w[i] + 1.0)
        .collect()
}

/// Mixed action of player `other` on `support` that makes every action in
/// `own_support` a best reply of `me`, if one exists.
fn indifference_lp(
    g: &Game,
    u: &[f64],
    me: usize,
    own_support: &[usize],
    support: &[usize],
) -> Option<Vec<f64>> {
    let other = 1 - me;
    let k = support.len();
    let mut lp = Lp::new(k + 1);
    for a in 0..g.n_actions(me) {
        let mut row: Vec<f64> = support
            .iter()
            .map(|&b| {
                let mut prof = [0usize; 2];
                prof[me] = a;
                prof[other] = b;
                u[g.index(&prof)]
            })
            .collect();
        row.push(-1.0);
        if own_support.contains(&a) {
            lp.add_eq(row, 0.0);
        } else {
            lp.add_le(row, 0.0);
        }
    }
    let mut ones = vec![1.0; k + 1];
    ones[k] = 0.0;
    lp.add_eq(ones, 1.0);
    let sol = lp.solve().ok()?;
    let mut y = vec![0.0; g.n_actions(other)];
    for (&b, &v) in support.iter().zip(&sol.x) {
        y[b] = v.max(0.0);
    }
    let s: f64 = y.iter().sum();
    y.iter_mut().for_each(|v| *v /= s);
    Some(y)
}

fn support_enumeration_two(g: &Game, w: &PayoffVector, cfg: &NashConfig) -> Option<MixedProfile> {
    let u0 = shifted_payoffs(g, w, 0);
    let u1 = shifted_payoffs(g, w, 1);
    let s0 = subsets(g.n_actions(0));
    let s1 = subsets(g.n_actions(1));
    let mut pairs: Vec<(&Vec<usize>, &Vec<usize>)> =
        s0.iter().flat_map(|a| s1.iter().map(move |b| (a, b))).collect();
    pairs.sort_by_key(|(a, b)| a.len() + b.len());
    for (a, b) in pairs {
        let Some(y) = indifference_lp(g, &u0, 0, a, b) else {
            continue;
        };
        let Some(x) = indifference_lp(g, &u1, 1, b, a) else {
            continue;
        };
        let prof = MixedProfile::from_vecs(vec![x, y]);
        if accept(g, w, &prof, cfg) {
            return Some(prof);
        }
    }
    None
}

fn pure_equilibrium(g: &Game, w: &PayoffVector, cfg: &NashConfig) -> Option<MixedProfile> {
    (0..g.n_profiles())
        .map(|idx| MixedProfile::pure(g, &g.decode(idx)))
        .find(|x| accept(g, w, x, cfg))
}

/// Regret matching; the time-averaged profile is checked periodically.
fn regret_matching(g: &Game, w: &PayoffVector, cfg: &NashConfig) -> Option<MixedProfile> {
    let n = g.n_players();
    let mut regrets: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; g.n_actions(i)]).collect();
    let mut sums: Vec<Vec<f64>> = regrets.clone();
    let mut x = MixedProfile::from_vecs(
        (0..n)
            .map(|i| vec![1.0 / g.n_actions(i) as f64; g.n_actions(i)])
            .collect(),
    );
    for t in 1..=cfg.regret_iterations {
        let own = g.one_shot_payoff(w, &x);
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            for (a, j) in g.reply_table(i, &x).iter().enumerate() {
                let ua = j.weighted[i] + (1.0 - j.p) * w[i];
                regrets[i][a] = (regrets[i][a] + ua - own[i]).max(0.0);
            }
            let total: f64 = regrets[i].iter().sum();
            let xi: Vec<f64> = if total > 0.0 {
                regrets[i].iter().map(|r| r / total).collect()
            } else {
                vec![1.0 / g.n_actions(i) as f64; g.n_actions(i)]
            };
            for (s, v) in sums[i].iter_mut().zip(&xi) {
                *s += v;
            }
            next.push(xi);
        }
        x = MixedProfile::from_vecs(next);
        if t % 1000 == 0 {
            if accept(g, w, &x, cfg) {
                return Some(x);
            }
            let avg = MixedProfile::from_vecs(
                sums.iter()
                    .map(|s| s.iter().map(|v| v / t as f64).collect())
                    .collect(),
            );
            if accept(g, w, &avg, cfg) {
                return Some(avg);
            }
        }
    }
    None
}

/// Expected payoff of player `i` with the listed pins, everyone else mixing
/// according to `x`.
fn pinned_payoff(g: &Game, w: &PayoffVector, x: &MixedProfile, i: usize, pins: &[Option<usize>]) -> f64 {
    let j = g.joint(x, pins);
    j.weighted[i] + (1.0 - j.p) * w[i]
}

/// Solves the indifference equations on each support profile with damped
/// Gauss-Newton steps, smallest supports first.
fn support_enumeration_newton(g: &Game, w: &PayoffVector, cfg: &NashConfig) -> Option<MixedProfile> {
    let n = g.n_players();
    let per_player: Vec<Vec<Vec<usize>>> = (0..n).map(|i| subsets(g.n_actions(i))).collect();
    let idx_sets: Vec<Vec<usize>> = per_player.iter().map(|p| (0..p.len()).collect()).collect();
    let mut combos: Vec<Vec<Vec<usize>>> = product_iter(&idx_sets)
        .map(|c| c.iter().zip(&per_player).map(|(&k, p)| p[k].clone()).collect())
        .collect();
    combos.sort_by_key(|s: &Vec<Vec<usize>>| s.iter().map(Vec::len).sum::<usize>());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for support in combos {
        if support.iter().all(|s| s.len() == 1) {
            continue;
        }
        for start in 0..cfg.newton_starts.max(1) {
            let init: Vec<Vec<f64>> = support
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let mut v = vec![0.0; g.n_actions(i)];
                    let weights: Vec<f64> = if start == 0 {
                        vec![1.0; s.len()]
                    } else {
                        (0..s.len()).map(|_| rng.random::<f64>() + 0.05).collect()
                    };
                    let tot: f64 = weights.iter().sum();
                    for (&a, wt) in s.iter().zip(&weights) {
                        v[a] = wt / tot;
                    }
                    v
                })
                .collect();
            if let Some(x) = newton(g, w, &support, MixedProfile::from_vecs(init)) {
                if accept(g, w, &x, cfg) {
                    return Some(x);
                }
            }
        }
    }
    None
}

fn newton(g: &Game, w: &PayoffVector, support: &[Vec<usize>], mut x: MixedProfile) -> Option<MixedProfile> {
    let n = g.n_players();
    let offsets: Vec<usize> = support
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s.len();
            Some(o)
        })
        .collect();
    let nx: usize = support.iter().map(Vec::len).sum();
    let dim = nx + n;
    let mut u: Vec<f64> = g.one_shot_payoff(w, &x).0;
    let residual = |x: &MixedProfile, u: &[f64]| -> DVector<f64> {
        let mut r = DVector::zeros(dim);
        let mut row = 0;
        for i in 0..n {
            let mut pins = vec![None; n];
            for &a in &support[i] {
                pins[i] = Some(a);
                r[row] = pinned_payoff(g, w, x, i, &pins) - u[i];
                row += 1;
            }
        }
        for i in 0..n {
            r[nx + i] = support[i].iter().map(|&a| x.player(i)[a]).sum::<f64>() - 1.0;
        }
        r
    };
    let mut r = residual(&x, &u);
    let mut damping = 1e-6;
    for _ in 0..200 {
        let norm = r.norm();
        if norm < 1e-13 {
            break;
        }
        let mut jac = DMatrix::zeros(dim, dim);
        let mut row = 0;
        for i in 0..n {
            for &a in &support[i] {
                for j in (0..n).filter(|&j| j != i) {
                    for (k, &c) in support[j].iter().enumerate() {
                        let mut pins = vec![None; n];
                        pins[i] = Some(a);
                        pins[j] = Some(c);
                        jac[(row, offsets[j] + k)] = pinned_payoff(g, w, &x, i, &pins);
                    }
                }
                jac[(row, nx + i)] = -1.0;
                row += 1;
            }
        }
        for i in 0..n {
            for k in 0..support[i].len() {
                jac[(nx + i, offsets[i] + k)] = 1.0;
            }
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * &r;
        let mut improved = false;
        for _ in 0..12 {
            let mut m = jtj.clone();
            for d in 0..dim {
                m[(d, d)] += damping * (1.0 + jtj[(d, d)]);
            }
            let Some(step) = m.lu().solve(&(-&grad)) else {
                damping *= 10.0;
                continue;
            };
            let mut cand: Vec<Vec<f64>> = x.as_vecs().to_vec();
            for i in 0..n {
                for (k, &a) in support[i].iter().enumerate() {
                    cand[i][a] += step[offsets[i] + k];
                }
            }
            let cand = MixedProfile::from_vecs(cand);
            let cu: Vec<f64> = (0..n).map(|i| u[i] + step[nx + i]).collect();
            let cr = residual(&cand, &cu);
            if cr.norm() < norm {
                x = cand;
                u = cu;
                r = cr;
                damping = (damping * 0.3).max(1e-12);
                improved = true;
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if r.norm() > 1e-10 {
        return None;
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let xi = x.player(i);
        if xi.iter().any(|&v| v < -1e-9) {
            return None;
        }
        let clipped: Vec<f64> = xi.iter().map(|v| v.max(0.0)).collect();
        let s: f64 = clipped.iter().sum();
        out.push(clipped.iter().map(|v| v / s).collect());
    }
    Some(MixedProfile::from_vecs(out))
}
