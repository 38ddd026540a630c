//! Maximal absorbing responses, the W / W_H / W_L partition of payoff
//! vectors, and the map `f` with absorption mass `mu`.

pub mod certificate;
pub mod grid;
pub mod nash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Game, MixedProfile, PayoffVector};
use crate::par::{map_indexed, Exec};
use crate::structure::Exit;
use crate::threat::absorbing_reply;

pub use certificate::{lemma_multi_check, Certificate};
pub use grid::SearchGrid;
pub use nash::{nash_gap, solve_one_shot_nash, NashConfig};

/// `rho_i(x)` with its maximising action, or the absence of any absorbing
/// reply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Rho {
    Finite { value: f64, action: usize },
    NoAbsorbingReply,
}

impl Rho {
    pub fn value(&self) -> Option<f64> {
        match self {
            Rho::Finite { value, .. } => Some(*value),
            Rho::NoAbsorbingReply => None,
        }
    }

    pub fn action(&self) -> Option<usize> {
        match self {
            Rho::Finite { action, .. } => Some(*action),
            Rho::NoAbsorbingReply => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RhoProfile(pub Vec<Rho>);

impl RhoProfile {
    /// `min_i (w_i - rho_i)`, players without an absorbing reply ignored;
    /// `+inf` when no player has one.
    pub fn slack(&self, w: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(w)
            .filter_map(|(r, wi)| r.value().map(|v| wi - v))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn all_infinite(&self) -> bool {
        self.0.iter().all(|r| r.value().is_none())
    }

    pub fn get(&self, i: usize) -> Rho {
        self.0[i]
    }
}

pub(crate) fn rho_unchecked(g: &Game, x: &MixedProfile) -> RhoProfile {
    RhoProfile(
        (0..g.n_players())
            .map(|i| match absorbing_reply(g, i, x) {
                Some((value, action)) => Rho::Finite { value, action },
                None => Rho::NoAbsorbingReply,
            })
            .collect(),
    )
}

/// Best absorbing response payoffs at a nonabsorbing profile.
pub fn rho(g: &Game, x: &MixedProfile) -> Result<RhoProfile> {
    let p = g.absorb_prob_mixed(x);
    if p > 0.0 {
        return Err(Error::AbsorbingProfile(p));
    }
    Ok(rho_unchecked(g, x))
}

/// The box `prod_i [v_i - eps, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffBox {
    pub lower: Vec<f64>,
}

impl PayoffBox {
    pub fn new(v: &PayoffVector, epsilon: f64) -> Self {
        PayoffBox {
            lower: v.iter().map(|vi| vi - epsilon).collect(),
        }
    }

    pub fn contains(&self, w: &[f64], tol: f64) -> bool {
        w.len() == self.lower.len()
            && w.iter()
                .zip(&self.lower)
                .all(|(wi, lo)| *wi >= lo - tol && *wi <= 1.0 + tol)
    }

    pub fn upper_corner(&self) -> PayoffVector {
        PayoffVector::splat(self.lower.len(), 1.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub epsilon: f64,
    pub tol_class: f64,
    /// Accepted `|s|` for a refined equality witness.
    pub root_tol: f64,
    pub pairs_per_face: usize,
    pub bisection_iters: usize,
    pub nash: NashConfig,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            epsilon: 0.1,
            tol_class: 1e-6,
            root_tol: 1e-8,
            pairs_per_face: 6,
            bisection_iters: 80,
            nash: NashConfig::default(),
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    #[serde(rename = "CaseW")]
    W,
    #[serde(rename = "CaseWH")]
    WH,
    #[serde(rename = "CaseWL")]
    WL,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case")]
pub enum Witness {
    #[serde(rename = "CaseW")]
    W {
        x: MixedProfile,
        rho: RhoProfile,
        /// The player whose coordinate is tight.
        player: usize,
        /// Found on a segment between grid points rather than at one.
        refined: bool,
        slack: f64,
    },
    #[serde(rename = "CaseWH")]
    WH {
        x: MixedProfile,
        rho: RhoProfile,
        exit: Exit,
        exit_payoff: PayoffVector,
        /// Player with the largest shortfall `rho_i - r_i(exit)`.
        player: usize,
        violation: f64,
        /// Whether the shortfall exceeds `epsilon`.
        margin_met: bool,
        grid_point: usize,
    },
    #[serde(rename = "CaseWL")]
    WL {
        x_hat: MixedProfile,
        absorption: f64,
        nash_gap: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub witness: Witness,
    /// Largest grid value of `min_i (w_i - rho_i(x))`.
    pub max_slack: f64,
    pub argmax_point: Option<usize>,
}

impl Classification {
    pub fn case(&self) -> Case {
        match self.witness {
            Witness::W { .. } => Case::W,
            Witness::WH { .. } => Case::WH,
            Witness::WL { .. } => Case::WL,
        }
    }
}

fn support_union(a: &[Vec<usize>], b: &[Vec<usize>]) -> Vec<Vec<usize>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let mut u: Vec<usize> = x.iter().chain(y).copied().collect();
            u.sort_unstable();
            u.dedup();
            u
        })
        .collect()
}

/// Lowest-index player attaining the minimum in the slack within `tol`.
fn tight_player(rho: &RhoProfile, w: &[f64], tol: f64) -> Option<usize> {
    let s = rho.slack(w);
    (0..w.len()).find(|&i| rho.get(i).value().is_some_and(|v| w[i] - v <= s + tol))
}

/// Searches the grid for `x` with `min_i (w_i - rho_i(x)) = 0`: exact grid
/// hits first, then bisection along segments between grid points of
/// opposite sign whose interior lies on one face.
fn find_root(
    g: &Game,
    grid: &SearchGrid,
    w: &[f64],
    slack: &[f64],
    cfg: &DynamicsConfig,
) -> Option<(MixedProfile, RhoProfile, f64, bool)> {
    let mut order: Vec<usize> = (0..grid.faces.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (&grid.faces[a], &grid.faces[b]);
        (fa.component, fa.dimension, &fa.support).cmp(&(fb.component, fb.dimension, &fb.support))
    });
    for &f in &order {
        let face = &grid.faces[f];
        if let Some(k) = (face.start..face.end).find(|&k| slack[k].abs() <= cfg.root_tol) {
            let p = &grid.points[k];
            return Some((p.x.clone(), p.rho.clone(), slack[k], false));
        }
        if face.dimension == 0 {
            continue;
        }
        let mut pos: Vec<usize> = Vec::new();
        let mut neg: Vec<usize> = Vec::new();
        for &c in &face.closure {
            let cf = &grid.faces[c];
            for (k, &s) in slack.iter().enumerate().take(cf.end).skip(cf.start) {
                if s > cfg.root_tol {
                    pos.push(k);
                } else if s < -cfg.root_tol {
                    neg.push(k);
                }
            }
        }
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        pos.sort_by(|&a, &b| slack[a].total_cmp(&slack[b]).then(a.cmp(&b)));
        neg.sort_by(|&a, &b| slack[b].total_cmp(&slack[a]).then(a.cmp(&b)));
        pos.truncate(cfg.pairs_per_face);
        neg.truncate(cfg.pairs_per_face);
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for &a in &pos {
            for &b in &neg {
                let u = support_union(
                    &grid.faces[grid.points[a].face].support,
                    &grid.faces[grid.points[b].face].support,
                );
                if u == face.support {
                    pairs.push((a, b));
                }
            }
        }
        pairs.sort_by(|&(a, b), &(c, d)| {
            (slack[a] - slack[b])
                .total_cmp(&(slack[c] - slack[d]))
                .then((a, b).cmp(&(c, d)))
        });
        pairs.truncate(cfg.pairs_per_face);
        for (a, b) in pairs {
            let (xa, xb) = (&grid.points[a].x, &grid.points[b].x);
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..cfg.bisection_iters {
                let t = 0.5 * (lo + hi);
                let x = xa.lerp(xb, t);
                let r = rho_unchecked(g, &x);
                let s = r.slack(w);
                if s.abs() <= cfg.root_tol {
                    return Some((x, r, s, true));
                }
                if s > 0.0 {
                    lo = t;
                } else {
                    hi = t;
                }
            }
        }
    }
    None
}

/// Witness for `w` strictly above `rho(x)` at a point with a joint exit.
fn find_wh_witness(
    g: &Game,
    grid: &SearchGrid,
    slack: &[f64],
    cfg: &DynamicsConfig,
) -> Option<Witness> {
    let n = g.n_players();
    for (k, p) in grid.points.iter().enumerate() {
        if slack[k] <= cfg.tol_class || p.rho.all_infinite() {
            continue;
        }
        let face = &grid.faces[p.face];
        let mut best: Option<(f64, usize, &Exit, PayoffVector)> = None;
        for exit in face.joint_exits() {
            let Some(e) = g.joint(&p.x, &exit.pins(n)).payoff() else {
                continue;
            };
            let mut violation = f64::NEG_INFINITY;
            let mut player = 0;
            for i in 0..n {
                if let Some(r) = p.rho.get(i).value() {
                    if r - e[i] > violation {
                        violation = r - e[i];
                        player = i;
                    }
                }
            }
            if violation <= cfg.tol_class {
                continue;
            }
            if violation > cfg.epsilon {
                best = Some((violation, player, exit, e));
                break;
            }
            if best.as_ref().is_none_or(|b| violation > b.0) {
                best = Some((violation, player, exit, e));
            }
        }
        if let Some((violation, player, exit, e)) = best {
            return Some(Witness::WH {
                x: p.x.clone(),
                rho: p.rho.clone(),
                exit: exit.clone(),
                exit_payoff: e,
                player,
                violation,
                margin_met: violation > cfg.epsilon,
                grid_point: k,
            });
        }
    }
    None
}

/// Places `w` in the partition, with a witness for its case.
pub fn classify(
    g: &Game,
    grid: &SearchGrid,
    w: &PayoffVector,
    ybox: &PayoffBox,
    cfg: &DynamicsConfig,
) -> Result<Classification> {
    if !ybox.contains(w, cfg.tol_class) {
        return Err(Error::OutsideBox(format!("{w}")));
    }
    let slack = map_indexed(cfg.exec, grid.len(), |k| grid.points[k].rho.slack(w));
    let mut argmax: Option<usize> = None;
    for (k, &s) in slack.iter().enumerate() {
        if argmax.is_none_or(|a| s > slack[a]) {
            argmax = Some(k);
        }
    }
    let max_slack = argmax.map_or(f64::NEG_INFINITY, |k| slack[k]);
    let done = |witness| {
        Ok(Classification {
            witness,
            max_slack,
            argmax_point: argmax,
        })
    };

    if max_slack >= -cfg.root_tol {
        if let Some((x, rho, s, refined)) = find_root(g, grid, w, &slack, cfg) {
            let player = tight_player(&rho, w, cfg.root_tol).expect("a finite coordinate is tight");
            return done(Witness::W {
                x,
                rho,
                player,
                refined,
                slack: s,
            });
        }
    }
    if max_slack.abs() <= cfg.tol_class {
        let p = &grid.points[argmax.expect("grid is nonempty")];
        let player = tight_player(&p.rho, w, cfg.tol_class).expect("a finite coordinate is tight");
        return done(Witness::W {
            x: p.x.clone(),
            rho: p.rho.clone(),
            player,
            refined: false,
            slack: max_slack,
        });
    }
    if max_slack > cfg.tol_class {
        return match find_wh_witness(g, grid, &slack, cfg) {
            Some(wit) => done(wit),
            None => Err(Error::WitnessNotFound { mesh: grid.mesh }),
        };
    }
    let x_hat = solve_one_shot_nash(g, w, &cfg.nash)?;
    let absorption = g.absorb_prob_mixed(&x_hat);
    let gap = nash_gap(g, w, &x_hat);
    done(Witness::WL {
        x_hat,
        absorption,
        nash_gap: gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case")]
pub enum StepDetail {
    #[serde(rename = "CaseW")]
    W {
        player: usize,
        action: usize,
        /// `q = p(a_{i0}(x), x_{-i0})`.
        q: f64,
        /// `r(a_{i0}(x), x_{-i0})`.
        target: PayoffVector,
    },
    #[serde(rename = "CaseWH")]
    WH {
        alpha: f64,
        /// Coordinate where `f(w) = rho(x)` holds with equality.
        binding: usize,
        exit_payoff: PayoffVector,
        /// `p(a_J, x_{-J})`.
        exit_absorption: f64,
    },
    #[serde(rename = "CaseWL")]
    WL { absorption: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsStep {
    pub w: PayoffVector,
    pub classification: Classification,
    pub f: PayoffVector,
    pub mu: f64,
    pub detail: StepDetail,
}

fn invalid(msg: String) -> Error {
    Error::InvalidWitness(msg)
}

/// `f(w)` and `mu(w)` from a classification of `w`.
pub fn step_f(
    g: &Game,
    cls: Classification,
    w: &PayoffVector,
    ybox: &PayoffBox,
    cfg: &DynamicsConfig,
) -> Result<DynamicsStep> {
    let n = g.n_players();
    let eps = cfg.epsilon;
    let tol = cfg.tol_class;
    let (f, mu, detail) = match &cls.witness {
        Witness::W { x, rho, player, .. } => {
            let (rv, action) = match rho.get(*player) {
                Rho::Finite { value, action } => (value, action),
                Rho::NoAbsorbingReply => return Err(invalid("tight player has no absorbing reply".into())),
            };
            for i in 0..n {
                if let Some(v) = rho.get(i).value() {
                    if w[i] < v - tol {
                        return Err(invalid(format!("w_{i} = {} below rho = {v}", w[i])));
                    }
                }
            }
            if (w[*player] - rv).abs() > tol {
                return Err(invalid(format!("player {player} is not tight")));
            }
            let mut pins = vec![None; n];
            pins[*player] = Some(action);
            let j = g.joint(x, &pins);
            let target = j.payoff().ok_or_else(|| invalid("best reply does not absorb".into()))?;
            let q = j.p;
            let mu = eps * q;
            let f = target.lerp(w, 1.0 - mu);
            (
                f,
                mu,
                StepDetail::W {
                    player: *player,
                    action,
                    q,
                    target,
                },
            )
        }
        Witness::WH {
            x,
            rho,
            exit,
            exit_payoff,
            ..
        } => {
            let mut alpha = f64::INFINITY;
            let mut binding = None;
            for i in 0..n {
                let Some(r) = rho.get(i).value() else { continue };
                if w[i] <= r {
                    return Err(invalid(format!("w_{i} = {} not above rho = {r}", w[i])));
                }
                if w[i] > exit_payoff[i] {
                    let a = (w[i] - r) / (w[i] - exit_payoff[i]);
                    if a < alpha {
                        alpha = a;
                        binding = Some(i);
                    }
                }
            }
            let binding = binding.ok_or_else(|| invalid("no coordinate bounds alpha".into()))?;
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(invalid(format!("alpha = {alpha} outside (0, 1)")));
            }
            let f = w.lerp(exit_payoff, alpha);
            let exit_absorption = g.joint(x, &exit.pins(n)).p;
            (
                f,
                alpha,
                StepDetail::WH {
                    alpha,
                    binding,
                    exit_payoff: exit_payoff.clone(),
                    exit_absorption,
                },
            )
        }
        Witness::WL { x_hat, .. } => {
            let joint = g.joint(x_hat, &[]);
            if joint.p <= 0.0 {
                return Err(invalid("equilibrium of G(w) does not absorb".into()));
            }
            (joint.one_shot(w), joint.p, StepDetail::WL { absorption: joint.p })
        }
    };
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(invalid(format!("mu = {mu} outside (0, 1]")));
    }
    if !ybox.contains(&f, tol) {
        return Err(invalid(format!("f(w) = {f} leaves the box")));
    }
    Ok(DynamicsStep {
        w: w.clone(),
        classification: cls,
        f,
        mu,
        detail,
    })
}

/// Classification followed by the step.
pub fn step(
    g: &Game,
    grid: &SearchGrid,
    w: &PayoffVector,
    ybox: &PayoffBox,
    cfg: &DynamicsConfig,
) -> Result<DynamicsStep> {
    let cls = classify(g, grid, w, ybox, cfg)?;
    step_f(g, cls, w, ybox, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::structure::build_structure;

    fn hard_grid() -> (Game, SearchGrid) {
        let g = instances::ex1_hard();
        let s = build_structure(&g);
        let grid = SearchGrid::build(&g, &s, 0.05, grid::DEFAULT_POINT_LIMIT, Exec::Sequential).unwrap();
        (g, grid)
    }

    fn hard_box() -> PayoffBox {
        PayoffBox::new(&PayoffVector(vec![0.0, 0.6]), 0.1)
    }

    #[test]
    fn rho_examples() {
        let g = instances::example1();
        let r = rho(&g, &MixedProfile::pure(&g, &[0, 0])).unwrap();
        assert_eq!(r.0, vec![Rho::NoAbsorbingReply, Rho::Finite { value: 0.25, action: 3 }]);
        let r = rho(&g, &MixedProfile::pure(&g, &[1, 0])).unwrap();
        assert_eq!(r.get(1), Rho::Finite { value: 0.6, action: 3 });
        assert!(matches!(
            rho(&g, &MixedProfile::pure(&g, &[1, 1])),
            Err(Error::AbsorbingProfile(_))
        ));
    }

    #[test]
    fn ex1_hard_equality_witness() {
        let (g, grid) = hard_grid();
        let w = PayoffVector(vec![0.9, 0.9]);
        let cfg = DynamicsConfig::default();
        let cls = classify(&g, &grid, &w, &hard_box(), &cfg).unwrap();
        let Witness::W { x, player, rho, .. } = &cls.witness else {
            panic!("expected CaseW, got {:?}", cls.case());
        };
        assert_eq!(*player, 1);
        assert!((x.player(0)[0] - 6.0 / 7.0).abs() < 1e-7);
        assert!((x.player(0)[1] - 1.0 / 7.0).abs() < 1e-7);
        assert_eq!(x.player(1), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(rho.get(0), Rho::NoAbsorbingReply);
        let st = step_f(&g, cls, &w, &hard_box(), &cfg).unwrap();
        assert!((st.f[0] - (0.9 - 0.1 * (0.9 - 10.0 / 21.0))).abs() < 1e-7);
        assert!((st.f[1] - 0.9).abs() < 1e-8);
        assert!((st.mu - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ex1_hard_top_corner_is_wh() {
        let (g, grid) = hard_grid();
        let w = PayoffVector(vec![1.0, 1.0]);
        let cfg = DynamicsConfig::default();
        let st = step(&g, &grid, &w, &hard_box(), &cfg).unwrap();
        assert_eq!(st.classification.case(), Case::WH);
        assert!((st.mu - 0.075).abs() < 1e-12);
        assert!((st.f[0] - 0.94375).abs() < 1e-12);
        assert!((st.f[1] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn low_vector_is_wl() {
        let (g, grid) = hard_grid();
        let w = PayoffVector(vec![0.0, 0.55]);
        let cfg = DynamicsConfig::default();
        let st = step(&g, &grid, &w, &hard_box(), &cfg).unwrap();
        assert_eq!(st.classification.case(), Case::WL);
        assert!(st.mu > 0.0);
    }

    #[test]
    fn wh_alpha_arithmetic() {
        // e = (0.3, 0.6), rho = (0.5, 0.2), w = (1, 1): alpha = 5/7.
        let w = [1.0, 1.0];
        let e = [0.3, 0.6];
        let r = [0.5, 0.2];
        let alpha = (0..2)
            .filter(|&i| w[i] > e[i])
            .map(|i| (w[i] - r[i]) / (w[i] - e[i]))
            .fold(f64::INFINITY, f64::min);
        assert!((alpha - 5.0 / 7.0).abs() < 1e-15);
        let f = PayoffVector(w.to_vec()).lerp(&PayoffVector(e.to_vec()), alpha);
        assert!((f[0] - 0.5).abs() < 1e-15);
        assert!((f[1] - (5.0 / 7.0 * 0.6 + 2.0 / 7.0)).abs() < 1e-15);
    }

    #[test]
    fn outside_box_rejected() {
        let (g, grid) = hard_grid();
        let w = PayoffVector(vec![0.5, 0.2]);
        let err = classify(&g, &grid, &w, &hard_box(), &DynamicsConfig::default()).unwrap_err();
        assert!(matches!(err, Error::OutsideBox(_)));
    }
}
