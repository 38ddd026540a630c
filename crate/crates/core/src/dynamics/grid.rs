//! Discretisation of the nonabsorbing mixed profiles.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::dynamics::{rho_unchecked, RhoProfile};
use crate::error::{Error, Result};
use crate::game::{Game, MixedProfile};
use crate::par::{map_indexed, Exec};
use crate::structure::{exits_at_support, maximal_supports, AbsorptionStructure, Exit, Support};

/// Default cap on the number of grid points.
pub const DEFAULT_POINT_LIMIT: usize = 2_000_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridPoint {
    pub face: usize,
    pub x: MixedProfile,
    pub rho: RhoProfile,
}

/// Grid points sharing one exact support.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Face {
    pub component: usize,
    pub support: Support,
    pub dimension: usize,
    /// Exits at this support (unilateral and joint).
    pub exits: Vec<Exit>,
    /// Range of point indices belonging to this face.
    pub start: usize,
    pub end: usize,
    /// Faces whose support is contained in this one, this face included.
    pub closure: Vec<usize>,
}

impl Face {
    pub fn joint_exits(&self) -> impl Iterator<Item = &Exit> {
        self.exits.iter().filter(|e| e.is_joint())
    }
}

/// Simplex grid of mesh `1/divisions` over every maximal product support of
/// every component, deduplicated and ordered by component, support, then
/// generation order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchGrid {
    pub mesh: f64,
    pub divisions: usize,
    pub maximal: Vec<(usize, Support)>,
    pub faces: Vec<Face>,
    pub points: Vec<GridPoint>,
}

/// All ways of writing `total` as an ordered sum of `parts` nonnegative
/// integers, first part descending.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for mut rest in compositions(total - first, parts - 1) {
            let mut v = Vec::with_capacity(parts);
            v.push(first);
            v.append(&mut rest);
            out.push(v);
        }
    }
    out
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r.min(usize::MAX as u128) as usize
}

impl SearchGrid {
    pub fn build(
        g: &Game,
        s: &AbsorptionStructure,
        mesh: f64,
        point_limit: usize,
        exec: Exec,
    ) -> Result<SearchGrid> {
        if !(mesh > 0.0 && mesh <= 1.0) {
            return Err(Error::Config(format!("mesh {mesh} must lie in (0, 1]")));
        }
        let divisions = (1.0 / mesh - 1e-9).ceil().max(1.0) as usize;
        let n = g.n_players();

        let mut maximal = Vec::new();
        for l in 0..s.components.len() {
            for sup in maximal_supports(g, s, l)? {
                maximal.push((l, sup));
            }
        }
        let estimate: usize = maximal
            .iter()
            .map(|(_, sup)| {
                sup.iter()
                    .map(|si| binomial(divisions + si.len() - 1, si.len() - 1))
                    .fold(1usize, |a, b| a.saturating_mul(b))
            })
            .fold(0usize, |a, b| a.saturating_add(b));
        if estimate > point_limit {
            return Err(Error::GridTooLarge {
                points: estimate,
                limit: point_limit,
            });
        }

        // (component, support, counts, generation index)
        let mut raw: Vec<(usize, Support, Vec<Vec<usize>>)> = Vec::new();
        let mut seen: HashSet<Vec<Vec<usize>>> = HashSet::new();
        for (l, sup) in &maximal {
            let per_player: Vec<Vec<Vec<usize>>> = sup
                .iter()
                .enumerate()
                .map(|(i, si)| {
                    compositions(divisions, si.len())
                        .into_iter()
                        .map(|c| {
                            let mut full = vec![0usize; g.n_actions(i)];
                            for (&a, &k) in si.iter().zip(&c) {
                                full[a] = k;
                            }
                            full
                        })
                        .collect()
                })
                .collect();
            let idx_sets: Vec<Vec<usize>> = per_player.iter().map(|p| (0..p.len()).collect()).collect();
            for choice in crate::structure::product_iter(&idx_sets) {
                let counts: Vec<Vec<usize>> = choice
                    .iter()
                    .zip(&per_player)
                    .map(|(&k, p)| p[k].clone())
                    .collect();
                if seen.insert(counts.clone()) {
                    let support: Support = counts
                        .iter()
                        .map(|c| c.iter().enumerate().filter(|(_, k)| **k > 0).map(|(a, _)| a).collect())
                        .collect();
                    raw.push((*l, support, counts));
                }
            }
        }
        // Stable sort keeps generation order inside each face.
        raw.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));

        let mut faces: Vec<Face> = Vec::new();
        let mut xs = Vec::with_capacity(raw.len());
        let mut face_of = Vec::with_capacity(raw.len());
        for (k, (l, support, counts)) in raw.into_iter().enumerate() {
            let new_face = faces
                .last()
                .is_none_or(|f| f.component != l || f.support != support);
            if new_face {
                if let Some(f) = faces.last_mut() {
                    f.end = k;
                }
                let dimension = support.iter().map(|s| s.len() - 1).sum();
                faces.push(Face {
                    component: l,
                    support,
                    dimension,
                    exits: Vec::new(),
                    start: k,
                    end: k,
                    closure: Vec::new(),
                });
            }
            face_of.push(faces.len() - 1);
            let probs: Vec<Vec<f64>> = counts
                .iter()
                .map(|c| c.iter().map(|&k| k as f64 / divisions as f64).collect())
                .collect();
            xs.push(MixedProfile::from_vecs(probs));
        }
        let total = xs.len();
        if let Some(f) = faces.last_mut() {
            f.end = total;
        }

        let exits = map_indexed(exec, faces.len(), |k| exits_at_support(g, &faces[k].support));
        for (f, e) in faces.iter_mut().zip(exits) {
            f.exits = e?;
        }
        let closures: Vec<Vec<usize>> = (0..faces.len())
            .map(|k| {
                (0..faces.len())
                    .filter(|&m| {
                        faces[m].component == faces[k].component
                            && (0..n).all(|i| {
                                faces[m].support[i]
                                    .iter()
                                    .all(|a| faces[k].support[i].binary_search(a).is_ok())
                            })
                    })
                    .collect()
            })
            .collect();
        for (f, c) in faces.iter_mut().zip(closures) {
            f.closure = c;
        }

        let rhos = map_indexed(exec, total, |k| rho_unchecked(g, &xs[k]));
        let points = xs
            .into_iter()
            .zip(rhos)
            .zip(face_of)
            .map(|((x, rho), face)| GridPoint { face, x, rho })
            .collect();
        Ok(SearchGrid {
            mesh: 1.0 / divisions as f64,
            divisions,
            maximal,
            faces,
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::structure::build_structure;

    #[test]
    fn composition_counts() {
        assert_eq!(compositions(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(compositions(20, 3).len(), 231);
        assert_eq!(binomial(22, 2), 231);
    }

    #[test]
    fn example1_grid_layout() {
        let g = instances::example1();
        let s = build_structure(&g);
        let grid = SearchGrid::build(&g, &s, 0.5, DEFAULT_POINT_LIMIT, Exec::Sequential).unwrap();
        // Two maximal supports {a1} x A2' and A1' x {a2}, each 1 x 6 points
        // at mesh 1/2, sharing the vertex (a1, a2).
        assert_eq!(grid.len(), 11);
        assert_eq!(grid.faces[0].support, vec![vec![0], vec![0]]);
        assert_eq!(grid.faces[0].joint_exits().count(), 4);
        for p in &grid.points {
            assert_eq!(g.absorb_prob_mixed(&p.x), 0.0);
            let f = &grid.faces[p.face];
            assert_eq!(p.x.supports(), f.support);
        }
        let faces: Vec<_> = grid.faces.iter().map(|f| f.support.clone()).collect();
        let mut sorted = faces.clone();
        sorted.sort();
        assert_eq!(faces, sorted);
    }

    #[test]
    fn rejects_oversized_grid() {
        let g = instances::example1();
        let s = build_structure(&g);
        let err = SearchGrid::build(&g, &s, 0.001, 100, Exec::Sequential).unwrap_err();
        assert!(matches!(err, Error::GridTooLarge { .. }));
    }
}
