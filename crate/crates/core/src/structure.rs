//! Nonabsorbing set, its connected components, and exits at product supports.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Game, MixedProfile};

/// Largest player count for which coalition enumeration is attempted.
pub const MAX_PLAYERS: usize = 8;
/// Largest number of candidate product supports enumerated per component.
pub const MAX_SUPPORT_CANDIDATES: usize = 1 << 20;

/// One sorted action set per player.
pub type Support = Vec<Vec<usize>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RectangularityWitness {
    /// The component has exactly as many profiles as the product of its
    /// projections.
    Product { size: usize },
    /// A profile of the product of projections that is not in the component.
    Missing { profile: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    /// Members in lexicographic order.
    pub profiles: Vec<Vec<usize>>,
    pub projections: Vec<Vec<usize>>,
    pub rectangular: bool,
    pub witness: RectangularityWitness,
}

impl Component {
    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionStructure {
    /// Nonabsorbing pure profiles in lexicographic order.
    pub nonabsorbing: Vec<Vec<usize>>,
    /// Components ordered by their smallest member.
    pub components: Vec<Component>,
    #[serde(skip)]
    component_of: Vec<Option<usize>>,
}

impl AbsorptionStructure {
    /// Component containing the pure profile with flat index `idx`.
    pub fn component_of(&self, idx: usize) -> Option<usize> {
        self.component_of.get(idx).copied().flatten()
    }
}

/// Coalition deviation `(J, a_J)`; `actions[k]` is played by `coalition[k]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Exit {
    pub coalition: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Exit {
    pub fn is_joint(&self) -> bool {
        self.coalition.len() >= 2
    }

    /// Pins of the coalition members, usable with [`Game::joint`].
    pub fn pins(&self, n_players: usize) -> Vec<Option<usize>> {
        let mut fixed = vec![None; n_players];
        for (&j, &a) in self.coalition.iter().zip(&self.actions) {
            fixed[j] = Some(a);
        }
        fixed
    }
}

/// Breadth-first search over single-player moves inside B.
pub fn build_structure(g: &Game) -> AbsorptionStructure {
    let n = g.n_players();
    let total = g.n_profiles();
    let mut component_of: Vec<Option<usize>> = vec![None; total];
    let mut components = Vec::new();
    let counts = g.action_counts();
    for start in 0..total {
        if g.is_absorbing(start) || component_of[start].is_some() {
            continue;
        }
        let id = components.len();
        component_of[start] = Some(id);
        let mut members = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(idx) = queue.pop_front() {
            let profile = g.decode(idx);
            for i in 0..n {
                let stride = g.stride(i);
                let base = idx - profile[i] * stride;
                for a in 0..counts[i] {
                    let nb = base + a * stride;
                    if !g.is_absorbing(nb) && component_of[nb].is_none() {
                        component_of[nb] = Some(id);
                        members.push(nb);
                        queue.push_back(nb);
                    }
                }
            }
        }
        members.sort_unstable();
        components.push(describe_component(g, &members));
    }
    let nonabsorbing = (0..total)
        .filter(|&idx| !g.is_absorbing(idx))
        .map(|idx| g.decode(idx))
        .collect();
    AbsorptionStructure {
        nonabsorbing,
        components,
        component_of,
    }
}

fn describe_component(g: &Game, members: &[usize]) -> Component {
    let n = g.n_players();
    let profiles: Vec<Vec<usize>> = members.iter().map(|&idx| g.decode(idx)).collect();
    let mut projections: Vec<Vec<usize>> = vec![Vec::new(); n];
    for p in &profiles {
        for (proj, &a) in projections.iter_mut().zip(p) {
            proj.push(a);
        }
    }
    for proj in projections.iter_mut() {
        proj.sort_unstable();
        proj.dedup();
    }
    let product: usize = projections.iter().map(Vec::len).product();
    let (rectangular, witness) = if product == profiles.len() {
        (
            true,
            RectangularityWitness::Product {
                size: profiles.len(),
            },
        )
    } else {
        let missing = product_iter(&projections)
            .find(|p| profiles.binary_search(p).is_err())
            .expect("a product larger than the component has a missing member");
        (false, RectangularityWitness::Missing { profile: missing })
    };
    Component {
        profiles,
        projections,
        rectangular,
        witness,
    }
}

/// Lexicographic iteration over `sets[0] x sets[1] x ...`.
pub fn product_iter(sets: &[Vec<usize>]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let empty = sets.iter().any(Vec::is_empty);
    let mut pos: Option<Vec<usize>> = if empty { None } else { Some(vec![0; sets.len()]) };
    std::iter::from_fn(move || {
        let cur = pos.as_mut()?;
        let item: Vec<usize> = cur.iter().zip(sets).map(|(&k, s)| s[k]).collect();
        let mut j = sets.len();
        loop {
            if j == 0 {
                pos = None;
                break;
            }
            j -= 1;
            cur[j] += 1;
            if cur[j] < sets[j].len() {
                break;
            }
            cur[j] = 0;
        }
        Some(item)
    })
}

/// `Ok(())` when every component is non-rectangular.
pub fn check_precondition(s: &AbsorptionStructure) -> Result<()> {
    match s.components.iter().position(|c| c.rectangular) {
        Some(l) => Err(Error::RectangularComponentFound(l)),
        None => Ok(()),
    }
}

/// True when every profile of `prod S_i` is nonabsorbing.
pub fn support_is_nonabsorbing(g: &Game, support: &[Vec<usize>]) -> bool {
    product_iter(support).all(|p| !g.is_absorbing(g.index(&p)))
}

/// True when some profile `(a_J, b_{-J})` with `b in S_{-J}` absorbs.
fn reaches(g: &Game, support: &[Vec<usize>], pins: &[(usize, usize)]) -> bool {
    let mut sets: Vec<Vec<usize>> = support.to_vec();
    for &(j, a) in pins {
        sets[j] = vec![a];
    }
    let hit = product_iter(&sets).any(|p| g.is_absorbing(g.index(&p)));
    hit
}

/// All exits at the product support `support`, ordered by coalition size,
/// then coalition, then actions.
pub fn exits_at_support(g: &Game, support: &[Vec<usize>]) -> Result<Vec<Exit>> {
    let n = g.n_players();
    if n > MAX_PLAYERS {
        return Err(Error::TooManyPlayers(n, MAX_PLAYERS));
    }
    if support.len() != n || support.iter().any(Vec::is_empty) {
        return Err(Error::InvalidProfile("support needs one nonempty set per player".into()));
    }
    if !support_is_nonabsorbing(g, support) {
        return Err(Error::SupportNotNonabsorbing);
    }
    let outside: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..g.n_actions(i))
                .filter(|a| support[i].binary_search(a).is_err())
                .collect()
        })
        .collect();
    let mut masks: Vec<u32> = (1..(1u32 << n)).collect();
    masks.sort_by_key(|m| (m.count_ones(), members(*m, n)));
    let mut exits = Vec::new();
    for mask in masks {
        let coalition = members(mask, n);
        let sets: Vec<Vec<usize>> = coalition.iter().map(|&j| outside[j].clone()).collect();
        for actions in product_iter(&sets) {
            let pins: Vec<(usize, usize)> = coalition.iter().copied().zip(actions.iter().copied()).collect();
            if !reaches(g, support, &pins) {
                continue;
            }
            let minimal = strict_submasks(mask).all(|sub| {
                let sub_pins: Vec<(usize, usize)> = pins
                    .iter()
                    .copied()
                    .filter(|(j, _)| sub & (1 << j) != 0)
                    .collect();
                !reaches(g, support, &sub_pins)
            });
            if minimal {
                exits.push(Exit {
                    coalition: coalition.clone(),
                    actions,
                });
            }
        }
    }
    Ok(exits)
}

fn members(mask: u32, n: usize) -> Vec<usize> {
    (0..n).filter(|j| mask & (1 << j) != 0).collect()
}

/// Nonempty strict submasks of `mask`.
fn strict_submasks(mask: u32) -> impl Iterator<Item = u32> {
    let mut sub = mask;
    std::iter::from_fn(move || {
        sub = (sub.wrapping_sub(1)) & mask;
        (sub != 0).then_some(sub)
    })
}

/// Every product support contained in component `l`, in lexicographic order
/// of the per-player subset masks.
pub fn supports_in_component(
    g: &Game,
    s: &AbsorptionStructure,
    l: usize,
) -> Result<Vec<Support>> {
    let proj = &s.components[l].projections;
    let mut candidates: usize = 1;
    for p in proj {
        let c = (1usize << p.len().min(usize::BITS as usize - 1)) - 1;
        candidates = candidates.saturating_mul(c);
    }
    if candidates > MAX_SUPPORT_CANDIDATES {
        return Err(Error::GridTooLarge {
            points: candidates,
            limit: MAX_SUPPORT_CANDIDATES,
        });
    }
    let subset_lists: Vec<Vec<Vec<usize>>> = proj
        .iter()
        .map(|p| {
            (1u64..(1u64 << p.len()))
                .map(|m| {
                    p.iter()
                        .enumerate()
                        .filter(|(k, _)| m & (1 << k) != 0)
                        .map(|(_, &a)| a)
                        .collect()
                })
                .collect()
        })
        .collect();
    let index_sets: Vec<Vec<usize>> = subset_lists.iter().map(|l| (0..l.len()).collect()).collect();
    let out = product_iter(&index_sets)
        .map(|choice| -> Support {
            choice
                .iter()
                .zip(&subset_lists)
                .map(|(&k, l)| l[k].clone())
                .collect()
        })
        .filter(|sup| support_is_nonabsorbing(g, sup))
        .collect();
    Ok(out)
}

/// Product supports in component `l` not strictly contained in another one.
pub fn maximal_supports(g: &Game, s: &AbsorptionStructure, l: usize) -> Result<Vec<Support>> {
    let proj = &s.components[l].projections;
    let all = supports_in_component(g, s, l)?;
    Ok(all
        .into_iter()
        .filter(|sup| {
            !(0..sup.len()).any(|i| {
                proj[i].iter().any(|a| {
                    if sup[i].binary_search(a).is_ok() {
                        return false;
                    }
                    let mut bigger = sup.clone();
                    bigger[i].push(*a);
                    bigger[i].sort_unstable();
                    support_is_nonabsorbing(g, &bigger)
                })
            })
        })
        .collect())
}

/// True when component `l` has no joint exit at any product support inside
/// it; agrees with the direct product test on non-degenerate inputs.
pub fn rectangular_via_exits(g: &Game, s: &AbsorptionStructure, l: usize) -> Result<bool> {
    for sup in supports_in_component(g, s, l)? {
        if exits_at_support(g, &sup)?.iter().any(Exit::is_joint) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A nonabsorbing profile against which no player has an absorbing reply,
/// if one exists. Such a support can always be shrunk to a single profile,
/// so the search runs over pure profiles.
pub fn find_nonabsorbing_equilibrium(g: &Game, s: &AbsorptionStructure) -> Option<MixedProfile> {
    let n = g.n_players();
    s.nonabsorbing
        .iter()
        .find(|b| {
            (0..n).all(|i| {
                (0..g.n_actions(i)).all(|a| {
                    let mut p = (*b).clone();
                    p[i] = a;
                    !g.is_absorbing(g.index(&p))
                })
            })
        })
        .map(|b| MixedProfile::pure(g, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::GameBuilder;
    use crate::instances;

    fn exit(coalition: &[usize], actions: &[usize]) -> Exit {
        Exit {
            coalition: coalition.to_vec(),
            actions: actions.to_vec(),
        }
    }

    #[test]
    fn example1_single_l_shaped_component() {
        let g = instances::example1();
        let s = build_structure(&g);
        assert_eq!(s.components.len(), 1);
        let c = &s.components[0];
        assert_eq!(
            c.profiles,
            vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![1, 0], vec![2, 0]]
        );
        assert!(!c.rectangular);
        assert_eq!(c.projections, vec![vec![0, 1, 2], vec![0, 1, 2]]);
        assert_eq!(
            c.witness,
            RectangularityWitness::Missing {
                profile: vec![1, 1]
            }
        );
        assert!(check_precondition(&s).is_ok());
        assert!(!rectangular_via_exits(&g, &s, 0).unwrap());
    }

    #[test]
    fn example1_exit_catalogue() {
        let g = instances::example1();
        let e = exits_at_support(&g, &[vec![0], vec![0]]).unwrap();
        let joint: Vec<_> = e.iter().filter(|x| x.is_joint()).cloned().collect();
        assert_eq!(
            joint,
            vec![
                exit(&[0, 1], &[1, 1]),
                exit(&[0, 1], &[1, 2]),
                exit(&[0, 1], &[2, 1]),
                exit(&[0, 1], &[2, 2]),
            ]
        );
        assert_eq!(e.iter().filter(|x| !x.is_joint()).collect::<Vec<_>>(), vec![&exit(&[1], &[3])]);
        let e = exits_at_support(&g, &[vec![1], vec![0]]).unwrap();
        assert!(e.iter().all(|x| !x.is_joint()));
        assert_eq!(
            exits_at_support(&g, &[vec![0, 1], vec![0, 1]]),
            Err(Error::SupportNotNonabsorbing)
        );
    }

    #[test]
    fn example2_components() {
        let g = instances::example2();
        let s = build_structure(&g);
        assert_eq!(s.components.len(), 3);
        let flags: Vec<bool> = s.components.iter().map(|c| c.rectangular).collect();
        assert_eq!(flags, vec![false, true, true]);
        assert_eq!(s.components[1].profiles, vec![vec![1, 1, 2]]);
        assert_eq!(s.components[2].len(), 6);
        assert_eq!(check_precondition(&s), Err(Error::RectangularComponentFound(1)));
        assert!(rectangular_via_exits(&g, &s, 1).unwrap());
        assert!(rectangular_via_exits(&g, &s, 2).unwrap());
        assert!(!rectangular_via_exits(&g, &s, 0).unwrap());
    }

    #[test]
    fn empty_nonabsorbing_set() {
        let g = GameBuilder::new(&[1, 1])
            .absorbing(&[0, 0], 1.0, &[0.5, 0.5])
            .build()
            .unwrap();
        let s = build_structure(&g);
        assert!(s.components.is_empty());
        assert!(check_precondition(&s).is_ok());
        assert!(find_nonabsorbing_equilibrium(&g, &s).is_none());
    }

    #[test]
    fn nonabsorbing_equilibrium_search() {
        let g = instances::example1();
        let s = build_structure(&g);
        assert!(find_nonabsorbing_equilibrium(&g, &s).is_none());
        // Row 0 and column 0 nonabsorbing, and all deviations from (0, 0) stay in B.
        let g = GameBuilder::new(&[2, 2])
            .absorbing(&[1, 1], 1.0, &[0.5, 0.5])
            .build()
            .unwrap();
        let s = build_structure(&g);
        let x = find_nonabsorbing_equilibrium(&g, &s).unwrap();
        assert_eq!(x, MixedProfile::pure(&g, &[0, 0]));
    }

    #[test]
    fn maximal_supports_of_example1() {
        let g = instances::example1();
        let s = build_structure(&g);
        let m = maximal_supports(&g, &s, 0).unwrap();
        assert_eq!(m, vec![vec![vec![0], vec![0, 1, 2]], vec![vec![0, 1, 2], vec![0]]]);
        assert_eq!(supports_in_component(&g, &s, 0).unwrap().len(), 13);
    }

    #[test]
    fn submask_enumeration() {
        let subs: Vec<u32> = strict_submasks(0b101).collect();
        assert_eq!(subs, vec![0b100, 0b001]);
        assert_eq!(strict_submasks(0b1).count(), 0);
    }
}
