//! Positive recursive absorbing games and multilinear evaluation of mixed
//! profiles.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Tolerance on simplex constraints of mixed actions.
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Tolerance for generic floating point comparisons.
pub const CMP_TOL: f64 = 1e-9;

/// Upper bound on the number of pure action profiles a game may have.
pub const MAX_PROFILES: usize = 1 << 22;

/// One real per player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PayoffVector(pub Vec<f64>);

impl PayoffVector {
    pub fn splat(n: usize, value: f64) -> Self {
        PayoffVector(vec![value; n])
    }

    /// `(1 - t) * self + t * other`.
    pub fn lerp(&self, other: &PayoffVector, t: f64) -> PayoffVector {
        PayoffVector(
            self.iter()
                .zip(other.iter())
                .map(|(a, b)| (1.0 - t) * a + t * b)
                .collect(),
        )
    }

    pub fn dist_inf(&self, other: &PayoffVector) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl Deref for PayoffVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl fmt::Display for PayoffVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:.6}")?;
        }
        write!(f, ")")
    }
}

/// One probability vector per player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MixedProfile(Vec<Vec<f64>>);

impl MixedProfile {
    /// Validates shape and simplex constraints against `game`.
    pub fn new(game: &Game, probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.len() != game.n_players() {
            return Err(Error::InvalidProfile(format!(
                "expected {} players, got {}",
                game.n_players(),
                probs.len()
            )));
        }
        for (i, x) in probs.iter().enumerate() {
            if x.len() != game.n_actions(i) {
                return Err(Error::InvalidProfile(format!(
                    "player {i}: expected {} actions, got {}",
                    game.n_actions(i),
                    x.len()
                )));
            }
            if x.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidProfile(format!(
                    "player {i}: negative or non-finite weight"
                )));
            }
            let total: f64 = x.iter().sum();
            if (total - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidProfile(format!(
                    "player {i}: weights sum to {total}"
                )));
            }
        }
        Ok(MixedProfile(probs))
    }

    /// Builds a profile without validation; callers guarantee the invariants.
    pub(crate) fn from_vecs(probs: Vec<Vec<f64>>) -> Self {
        MixedProfile(probs)
    }

    pub fn pure(game: &Game, actions: &[usize]) -> Self {
        MixedProfile(
            actions
                .iter()
                .enumerate()
                .map(|(i, &a)| {
                    let mut v = vec![0.0; game.n_actions(i)];
                    v[a] = 1.0;
                    v
                })
                .collect(),
        )
    }

    /// Uniform mixture over each player's listed actions.
    pub fn uniform(game: &Game, support: &[Vec<usize>]) -> Self {
        MixedProfile(
            support
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let mut v = vec![0.0; game.n_actions(i)];
                    for &a in s {
                        v[a] = 1.0 / s.len() as f64;
                    }
                    v
                })
                .collect(),
        )
    }

    pub fn n_players(&self) -> usize {
        self.0.len()
    }

    pub fn player(&self, i: usize) -> &[f64] {
        &self.0[i]
    }

    pub fn as_vecs(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn support(&self, i: usize) -> Vec<usize> {
        self.0[i]
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(a, _)| a)
            .collect()
    }

    pub fn supports(&self) -> Vec<Vec<usize>> {
        (0..self.n_players()).map(|i| self.support(i)).collect()
    }

    pub fn with_player(&self, i: usize, dist: Vec<f64>) -> Self {
        let mut v = self.0.clone();
        v[i] = dist;
        MixedProfile(v)
    }

    pub fn with_pure(&self, i: usize, action: usize) -> Self {
        let mut dist = vec![0.0; self.0[i].len()];
        dist[action] = 1.0;
        self.with_player(i, dist)
    }

    pub fn is_pure(&self) -> bool {
        self.0.iter().all(|x| x.iter().filter(|w| **w > 0.0).count() == 1)
    }

    /// `(1 - t) * self + t * other`, player by player.
    pub fn lerp(&self, other: &MixedProfile, t: f64) -> MixedProfile {
        MixedProfile(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(a, b)| {
                    a.iter()
                        .zip(b.iter())
                        .map(|(x, y)| {
                            let v = (1.0 - t) * x + t * y;
                            if v < 0.0 {
                                0.0
                            } else {
                                v
                            }
                        })
                        .collect()
                })
                .collect(),
        )
    }

    /// Largest absolute difference between two profiles.
    pub fn dist_inf(&self, other: &MixedProfile) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Absorption probability and absorption-weighted payoff sums of a profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    /// `p(x)`.
    pub p: f64,
    /// `sum_a p(a) r(a) prod_j x_j(a_j)`, one entry per player.
    pub weighted: Vec<f64>,
}

impl Joint {
    /// Expected absorbing payoff given absorption, if `p > 0`.
    pub fn payoff(&self) -> Option<PayoffVector> {
        (self.p > 0.0).then(|| PayoffVector(self.weighted.iter().map(|v| v / self.p).collect()))
    }

    /// Payoff of the one-shot game with continuation `w`.
    pub fn one_shot(&self, w: &[f64]) -> PayoffVector {
        PayoffVector(
            self.weighted
                .iter()
                .zip(w.iter())
                .map(|(pr, wi)| pr + (1.0 - self.p) * wi)
                .collect(),
        )
    }
}

/// A positive recursive absorbing game with a single nonabsorbing state.
#[derive(Debug, Clone, PartialEq)]
pub struct Game {
    players: Vec<String>,
    actions: Vec<Vec<String>>,
    strides: Vec<usize>,
    prob: Vec<f64>,
    /// `n_profiles * n_players`, zero where `p = 0`.
    payoff: Vec<f64>,
    metadata: Option<serde_json::Value>,
}

/// On-disk representation of a game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameFile {
    pub players: Vec<String>,
    pub actions: Vec<Vec<String>>,
    pub entries: Vec<EntryFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryFile {
    pub profile: Vec<usize>,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
}

/// Incremental construction of a [`Game`]; profiles not set are
/// nonabsorbing.
#[derive(Debug, Clone)]
pub struct GameBuilder {
    file: GameFile,
}

impl GameBuilder {
    /// Players named `1..=n`, actions named `a0, a1, ...`.
    pub fn new(action_counts: &[usize]) -> Self {
        GameBuilder {
            file: GameFile {
                players: (1..=action_counts.len()).map(|i| i.to_string()).collect(),
                actions: action_counts
                    .iter()
                    .map(|&m| (0..m).map(|a| format!("a{a}")).collect())
                    .collect(),
                entries: Vec::new(),
                metadata: None,
            },
        }
    }

    pub fn absorbing(mut self, profile: &[usize], p: f64, r: &[f64]) -> Self {
        self.file.entries.push(EntryFile {
            profile: profile.to_vec(),
            p,
            r: Some(r.to_vec()),
        });
        self
    }

    pub fn metadata(mut self, value: serde_json::Value) -> Self {
        self.file.metadata = Some(value);
        self
    }

    pub fn build(self) -> Result<Game> {
        validate_game(self.file)
    }
}

/// Validates a parsed game file and returns the canonical game.
pub fn validate_game(file: GameFile) -> Result<Game> {
    let n = file.players.len();
    if n < 2 {
        return Err(Error::Malformed(format!("need at least 2 players, got {n}")));
    }
    if file.actions.len() != n {
        return Err(Error::Malformed(format!(
            "{} action lists for {n} players",
            file.actions.len()
        )));
    }
    if let Some(i) = file.actions.iter().position(|a| a.is_empty()) {
        return Err(Error::Malformed(format!("player {i} has no actions")));
    }
    let counts: Vec<usize> = file.actions.iter().map(Vec::len).collect();
    let mut total: usize = 1;
    for &m in &counts {
        total = total
            .checked_mul(m)
            .filter(|t| *t <= MAX_PROFILES)
            .ok_or_else(|| Error::Malformed("too many action profiles".into()))?;
    }
    let mut strides = vec![1usize; n];
    for i in (0..n.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * counts[i + 1];
    }
    let mut prob = vec![0.0; total];
    let mut payoff = vec![0.0; total * n];
    let mut seen = vec![false; total];
    for entry in &file.entries {
        let profile = &entry.profile;
        if profile.len() != n || profile.iter().zip(&counts).any(|(a, m)| a >= m) {
            return Err(Error::Malformed(format!("bad profile {profile:?}")));
        }
        let idx: usize = profile.iter().zip(&strides).map(|(a, s)| a * s).sum();
        if seen[idx] {
            return Err(Error::Malformed(format!("duplicate profile {profile:?}")));
        }
        seen[idx] = true;
        if !entry.p.is_finite() || entry.p < 0.0 || entry.p > 1.0 {
            return Err(Error::ProbabilityOutOfRange {
                profile: profile.clone(),
                p: entry.p,
            });
        }
        if entry.p == 0.0 {
            continue;
        }
        let r = entry.r.as_ref().ok_or_else(|| Error::MissingPayoff {
            profile: profile.clone(),
        })?;
        if r.len() != n {
            return Err(Error::Malformed(format!(
                "payoff at {profile:?} has {} entries",
                r.len()
            )));
        }
        for (player, &value) in r.iter().enumerate() {
            if value.is_nan() || value <= 0.0 {
                return Err(Error::NonPositivePayoff {
                    profile: profile.clone(),
                    player,
                    value,
                });
            }
            if value > 1.0 {
                return Err(Error::PayoffOutOfRange {
                    profile: profile.clone(),
                    player,
                    value,
                });
            }
        }
        prob[idx] = entry.p;
        payoff[idx * n..(idx + 1) * n].copy_from_slice(r);
    }
    Ok(Game {
        players: file.players,
        actions: file.actions,
        strides,
        prob,
        payoff,
        metadata: file.metadata,
    })
}

impl Game {
    pub fn from_json(text: &str) -> Result<Game> {
        let file: GameFile =
            serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        validate_game(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("game serializes")
    }

    /// Canonical file form: absorbing entries only, sorted by profile.
    pub fn to_file(&self) -> GameFile {
        let entries = (0..self.n_profiles())
            .filter(|&idx| self.prob[idx] > 0.0)
            .map(|idx| EntryFile {
                profile: self.decode(idx),
                p: self.prob[idx],
                r: Some(self.payoff(idx).to_vec()),
            })
            .collect();
        GameFile {
            players: self.players.clone(),
            actions: self.actions.clone(),
            entries,
            metadata: self.metadata.clone(),
        }
    }

    /// SHA-256 of the canonical compact serialization.
    pub fn content_hash(&self) -> String {
        let text = serde_json::to_string(&self.to_file()).expect("game serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn players(&self) -> &[String] {
        &self.players
    }

    pub fn action_names(&self, i: usize) -> &[String] {
        &self.actions[i]
    }

    pub fn metadata(&self) -> Option<&serde_json::Value> {
        self.metadata.as_ref()
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    pub fn n_actions(&self, i: usize) -> usize {
        self.actions[i].len()
    }

    pub fn action_counts(&self) -> Vec<usize> {
        self.actions.iter().map(Vec::len).collect()
    }

    pub fn n_profiles(&self) -> usize {
        self.prob.len()
    }

    pub fn stride(&self, i: usize) -> usize {
        self.strides[i]
    }

    /// Flat index of a pure profile; lexicographic order of profiles.
    pub fn index(&self, profile: &[usize]) -> usize {
        profile.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    pub fn decode(&self, mut idx: usize) -> Vec<usize> {
        self.strides
            .iter()
            .map(|s| {
                let a = idx / s;
                idx %= s;
                a
            })
            .collect()
    }

    pub fn prob(&self, idx: usize) -> f64 {
        self.prob[idx]
    }

    pub fn payoff(&self, idx: usize) -> &[f64] {
        let n = self.n_players();
        &self.payoff[idx * n..(idx + 1) * n]
    }

    pub fn is_absorbing(&self, idx: usize) -> bool {
        self.prob[idx] > 0.0
    }

    /// All pure profiles in lexicographic order.
    pub fn profiles(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.n_profiles()).map(|idx| self.decode(idx))
    }

    /// Calls `f(index, weight)` for every pure profile in the support of `x`,
    /// with players listed in `fixed` pinned to the given action.
    pub fn for_each_weighted<F: FnMut(usize, f64)>(
        &self,
        x: &MixedProfile,
        fixed: &[Option<usize>],
        mut f: F,
    ) {
        let n = self.n_players();
        let lists: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|j| match fixed.get(j).copied().flatten() {
                Some(a) => vec![(a * self.strides[j], 1.0)],
                None => x
                    .player(j)
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(a, &w)| (a * self.strides[j], w))
                    .collect(),
            })
            .collect();
        if lists.iter().any(Vec::is_empty) {
            return;
        }
        let mut pos = vec![0usize; n];
        loop {
            let mut idx = 0;
            let mut w = 1.0;
            for (list, &k) in lists.iter().zip(&pos) {
                let (offset, wj) = list[k];
                idx += offset;
                w *= wj;
            }
            f(idx, w);
            let mut j = n;
            loop {
                if j == 0 {
                    return;
                }
                j -= 1;
                pos[j] += 1;
                if pos[j] < lists[j].len() {
                    break;
                }
                pos[j] = 0;
            }
        }
    }

    /// Absorption statistics of `x` with some players pinned to pure actions.
    pub fn joint(&self, x: &MixedProfile, fixed: &[Option<usize>]) -> Joint {
        let n = self.n_players();
        let mut p = 0.0;
        let mut weighted = vec![0.0; n];
        self.for_each_weighted(x, fixed, |idx, w| {
            let pa = self.prob[idx];
            if pa > 0.0 {
                let wp = w * pa;
                p += wp;
                for (acc, r) in weighted.iter_mut().zip(self.payoff(idx)) {
                    *acc += wp * r;
                }
            }
        });
        Joint { p, weighted }
    }

    /// `p(x)`.
    pub fn absorb_prob_mixed(&self, x: &MixedProfile) -> f64 {
        let mut p = 0.0;
        self.for_each_weighted(x, &[], |idx, w| p += w * self.prob[idx]);
        p
    }

    /// `r(x)`, the expected absorbing payoff conditional on absorption.
    pub fn absorb_payoff_mixed(&self, x: &MixedProfile) -> Result<PayoffVector> {
        self.joint(x, &[]).payoff().ok_or(Error::NonAbsorbingProfile)
    }

    /// Payoff of `x` in the one-shot game whose nonabsorbing outcome pays `w`.
    pub fn one_shot_payoff(&self, w: &PayoffVector, x: &MixedProfile) -> PayoffVector {
        self.joint(x, &[]).one_shot(w)
    }

    /// Absorption statistics of each pure action of player `i` against
    /// `x_{-i}`.
    pub fn reply_table(&self, i: usize, x: &MixedProfile) -> Vec<Joint> {
        let n = self.n_players();
        let m = self.n_actions(i);
        let stride = self.strides[i];
        let mut table = vec![
            Joint {
                p: 0.0,
                weighted: vec![0.0; n],
            };
            m
        ];
        let mut fixed = vec![None; n];
        fixed[i] = Some(0);
        self.for_each_weighted(x, &fixed, |base, w| {
            for (a, entry) in table.iter_mut().enumerate() {
                let idx = base + a * stride;
                let pa = self.prob[idx];
                if pa > 0.0 {
                    let wp = w * pa;
                    entry.p += wp;
                    for (acc, r) in entry.weighted.iter_mut().zip(self.payoff(idx)) {
                        *acc += wp * r;
                    }
                }
            }
        });
        table
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;

    #[test]
    fn rejects_nonpositive_payoff() {
        let err = GameBuilder::new(&[2, 2])
            .absorbing(&[1, 1], 1.0, &[0.0, 0.5])
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::NonPositivePayoff { player: 0, .. }));
    }

    #[test]
    fn rejects_probability_above_one() {
        let err = GameBuilder::new(&[2, 2])
            .absorbing(&[0, 1], 1.2, &[0.5, 0.5])
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::ProbabilityOutOfRange { .. }));
    }

    #[test]
    fn rejects_missing_payoff() {
        let file = GameFile {
            players: vec!["1".into(), "2".into()],
            actions: vec![vec!["a".into()], vec!["b".into()]],
            entries: vec![EntryFile {
                profile: vec![0, 0],
                p: 0.5,
                r: None,
            }],
            metadata: None,
        };
        assert!(matches!(validate_game(file), Err(Error::MissingPayoff { .. })));
    }

    #[test]
    fn rejects_single_player_and_duplicates() {
        assert!(GameBuilder::new(&[2]).build().is_err());
        let err = GameBuilder::new(&[2, 2])
            .absorbing(&[0, 1], 1.0, &[0.5, 0.5])
            .absorbing(&[0, 1], 1.0, &[0.5, 0.5])
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::Malformed(_)));
    }

    #[test]
    fn example1_pure_and_mixed_evaluation() {
        let g = instances::example1();
        assert_eq!(g.absorb_prob_mixed(&MixedProfile::pure(&g, &[0, 0])), 0.0);
        let x = MixedProfile::new(&g, vec![vec![0.0, 1.0, 0.0], vec![0.5, 0.5, 0.0, 0.0]]).unwrap();
        assert!((g.absorb_prob_mixed(&x) - 0.5).abs() < 1e-15);

        let r = g
            .absorb_payoff_mixed(&MixedProfile::pure(&g, &[1, 2]))
            .unwrap();
        assert_eq!(r.0, vec![0.5, 0.5]);
        let x = MixedProfile::new(&g, vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.5, 0.5, 0.0]]).unwrap();
        let r = g.absorb_payoff_mixed(&x).unwrap();
        assert!((r[0] - 3.0 / 8.0).abs() < 1e-15);
        assert!((r[1] - 5.0 / 12.0).abs() < 1e-15);

        let na = MixedProfile::pure(&g, &[0, 1]);
        assert_eq!(g.absorb_payoff_mixed(&na), Err(Error::NonAbsorbingProfile));
    }

    #[test]
    fn one_shot_cases() {
        let g = instances::example1();
        let w = PayoffVector(vec![0.3, 0.7]);
        assert_eq!(g.one_shot_payoff(&w, &MixedProfile::pure(&g, &[0, 0])), w);
        let zero = PayoffVector::splat(2, 0.0);
        let u = g.one_shot_payoff(&zero, &MixedProfile::pure(&g, &[0, 3]));
        assert_eq!(u.0, vec![0.5, 0.25]);
        let u = g.one_shot_payoff(&w, &MixedProfile::pure(&g, &[2, 2]));
        assert_eq!(u.0, vec![0.4, 0.6]);
    }

    #[test]
    fn profile_validation() {
        let g = instances::example1();
        assert!(MixedProfile::new(&g, vec![vec![0.5, 0.5, 0.0], vec![1.0, 0.0, 0.0, 0.0]]).is_ok());
        assert!(MixedProfile::new(&g, vec![vec![0.5, 0.4, 0.0], vec![1.0, 0.0, 0.0, 0.0]]).is_err());
        assert!(MixedProfile::new(&g, vec![vec![1.0, 0.0], vec![1.0, 0.0, 0.0, 0.0]]).is_err());
        assert!(MixedProfile::new(&g, vec![vec![1.5, -0.5, 0.0], vec![1.0, 0.0, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn canonical_form_round_trips() {
        for g in [instances::example1(), instances::example2(), instances::ex1_hard()] {
            let back = Game::from_json(&g.to_json()).unwrap();
            assert_eq!(back, g);
            assert_eq!(back.content_hash(), g.content_hash());
            let file = g.to_file();
            let mut sorted = file.entries.clone();
            sorted.sort_by(|a, b| a.profile.cmp(&b.profile));
            assert_eq!(sorted, file.entries);
        }
    }

    #[test]
    fn index_decode_inverse() {
        let g = instances::example2();
        for idx in 0..g.n_profiles() {
            assert_eq!(g.index(&g.decode(idx)), idx);
        }
        assert_eq!(g.decode(1), vec![0, 0, 1]);
    }
}
