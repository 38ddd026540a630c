//! Joint exits that weakly dominate the maximal absorbing responses, which
//! yield an equilibrium payoff directly.

use serde::{Deserialize, Serialize};

use crate::dynamics::grid::SearchGrid;
use crate::dynamics::RhoProfile;
use crate::game::{Game, MixedProfile, PayoffVector};
use crate::structure::Exit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `r(a_J, x_{-J})`.
    pub payoff: PayoffVector,
    pub x: MixedProfile,
    pub rho: RhoProfile,
    pub exit: Exit,
    pub grid_point: usize,
    pub beta: f64,
    /// `x` with every coalition member shifting weight `beta` to its exit
    /// action.
    pub xi: MixedProfile,
    /// Per player, the largest gain available from a single absorbing
    /// deviation against `xi` before detection.
    pub deviation_margin: Vec<f64>,
}

/// `xi_i = (1 - beta) x_i + beta a_i` for coalition members, `x_i` otherwise.
pub fn xi_profile(x: &MixedProfile, exit: &Exit, beta: f64) -> MixedProfile {
    let mut v: Vec<Vec<f64>> = x.as_vecs().to_vec();
    for (&j, &a) in exit.coalition.iter().zip(&exit.actions) {
        for w in v[j].iter_mut() {
            *w *= 1.0 - beta;
        }
        v[j][a] += beta;
    }
    MixedProfile::from_vecs(v)
}

/// Worst-case gain of player `i` from deviating against `xi`: an
/// out-of-support absorbing action pays off at once or is caught and
/// punished down to `v_i`; an in-support action is compared with the target.
fn deviation_margin(g: &Game, xi: &MixedProfile, target: &PayoffVector, v: &[f64], i: usize) -> f64 {
    let support = xi.support(i);
    g.reply_table(i, xi)
        .iter()
        .enumerate()
        .filter(|(_, j)| j.p > 0.0)
        .map(|(b, j)| {
            let r = j.weighted[i] / j.p;
            if support.contains(&b) {
                r - target[i]
            } else {
                j.p * r + (1.0 - j.p) * v[i] - target[i]
            }
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Searches grid points and their joint exits for `r_i(a_J, x_{-J}) >=
/// rho_i(x)` for every player. Among all hits the one with the largest
/// smallest coordinate wins, then the largest sum, then grid order. `v` are
/// the punishment levels used to size `beta`.
pub fn lemma_multi_check(g: &Game, grid: &SearchGrid, v: &PayoffVector, epsilon: f64) -> Option<Certificate> {
    let n = g.n_players();
    let mut best: Option<(f64, f64, usize, &Exit, PayoffVector)> = None;
    for (k, p) in grid.points.iter().enumerate() {
        for exit in grid.faces[p.face].joint_exits() {
            let Some(e) = g.joint(&p.x, &exit.pins(n)).payoff() else {
                continue;
            };
            let dominates = (0..n).all(|i| p.rho.get(i).value().is_none_or(|r| e[i] >= r));
            if !dominates {
                continue;
            }
            let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
            let sum: f64 = e.iter().sum();
            let better = best
                .as_ref()
                .is_none_or(|b| lo > b.0 || (lo == b.0 && sum > b.1));
            if better {
                best = Some((lo, sum, k, exit, e));
            }
        }
    }
    let (_, _, k, exit, payoff) = best?;
    let point = &grid.points[k];
    let mut chosen = None;
    for pow in 3..=40 {
        let beta = 0.5f64.powi(pow);
        let xi = xi_profile(&point.x, exit, beta);
        let margins: Vec<f64> = (0..n).map(|i| deviation_margin(g, &xi, &payoff, v, i)).collect();
        let ok = margins.iter().all(|m| *m <= epsilon / 2.0);
        if ok || pow == 40 {
            chosen = Some((beta, xi, margins));
            break;
        }
    }
    let (beta, xi, deviation_margin) = chosen.expect("loop always chooses");
    Some(Certificate {
        payoff,
        x: point.x.clone(),
        rho: point.rho.clone(),
        exit: exit.clone(),
        grid_point: k,
        beta,
        xi,
        deviation_margin,
    })
}
