//! End-to-end drivers: structure and threat analysis, and the solver that
//! returns either a dominating-exit certificate or an orbit-based block
//! profile.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dynamics::{lemma_multi_check, step, Certificate, DynamicsStep, PayoffBox, SearchGrid};
use crate::error::{Error, Result};
use crate::eval::{exact_eval, EvalReport};
use crate::game::{Game, MixedProfile, PayoffVector};
use crate::orbit::{build_orbit, Orbit};
use crate::structure::{
    build_structure, check_precondition, exits_at_support, find_nonabsorbing_equilibrium, maximal_supports,
    rectangular_via_exits, AbsorptionStructure, Exit, Support,
};
use crate::synthesis::{synthesize, synthesize_certificate, StrategySpec};
use crate::threat::{minmax_all, ThreatValues};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportExits {
    pub component: usize,
    pub support: Support,
    pub exits: Vec<Exit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Precondition {
    pub passed: bool,
    /// First rectangular component, if any.
    pub rectangular_component: Option<usize>,
    pub nonabsorbing_equilibrium: Option<MixedProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub structure: AbsorptionStructure,
    /// Per component, whether no joint exit exists at any of its supports.
    pub rectangular_via_exits: Vec<bool>,
    pub exits: Vec<SupportExits>,
    pub precondition: Precondition,
    pub threats: ThreatValues,
}

/// Structure, exit catalogue and minmax values. Never fails on a violated
/// precondition; the outcome is recorded instead.
pub fn analyze(g: &Game, cfg: &RunConfig) -> Result<Analysis> {
    let structure = build_structure(g);
    let mut exits = Vec::new();
    let mut via_exits = Vec::new();
    for l in 0..structure.components.len() {
        for support in maximal_supports(g, &structure, l)? {
            let e = exits_at_support(g, &support)?;
            exits.push(SupportExits {
                component: l,
                support,
                exits: e,
            });
        }
        via_exits.push(rectangular_via_exits(g, &structure, l)?);
    }
    let rectangular_component = match check_precondition(&structure) {
        Ok(()) => None,
        Err(Error::RectangularComponentFound(l)) => Some(l),
        Err(e) => return Err(e),
    };
    let nonabsorbing_equilibrium = find_nonabsorbing_equilibrium(g, &structure);
    let precondition = Precondition {
        passed: rectangular_component.is_none() && nonabsorbing_equilibrium.is_none(),
        rectangular_component,
        nonabsorbing_equilibrium,
    };
    let threats = minmax_all(g, &cfg.minmax())?;
    Ok(Analysis {
        structure,
        rectangular_via_exits: via_exits,
        exits,
        precondition,
        threats,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Solution {
    Certificate { certificate: Certificate },
    Orbit { orbit: Orbit },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solved {
    pub threats: ThreatValues,
    /// Mesh of the grid that produced the solution.
    pub mesh: f64,
    pub refinements: usize,
    pub solution: Solution,
    pub strategy: StrategySpec,
    pub eval: EvalReport,
}

/// Preconditions shared by every solver entry point.
pub fn require_in_class(g: &Game) -> Result<AbsorptionStructure> {
    let s = build_structure(g);
    check_precondition(&s)?;
    if find_nonabsorbing_equilibrium(g, &s).is_some() {
        return Err(Error::NonabsorbingEquilibriumExists);
    }
    Ok(s)
}

/// Runs the full construction, halving the mesh up to
/// `cfg.mesh_refinements` times when the grid yields no witness.
pub fn solve(g: &Game, cfg: &RunConfig) -> Result<Solved> {
    cfg.validate()?;
    let s = require_in_class(g)?;
    let threats = minmax_all(g, &cfg.minmax())?;
    let v = threats.values();
    let dyn_cfg = cfg.dynamics();
    let mut mesh = cfg.mesh;
    let mut refinements = 0;
    loop {
        let grid = SearchGrid::build(g, &s, mesh, cfg.point_limit, cfg.exec)?;
        if let Some(certificate) = lemma_multi_check(g, &grid, &v, cfg.epsilon) {
            let strategy = synthesize_certificate(g, &certificate, &threats, cfg.epsilon, &cfg.synthesis())?;
            let eval = exact_eval(g, &strategy);
            return Ok(Solved {
                threats,
                mesh: grid.mesh,
                refinements,
                solution: Solution::Certificate { certificate },
                strategy,
                eval,
            });
        }
        let ybox = PayoffBox::new(&v, cfg.epsilon);
        match build_orbit(g, &grid, &ybox, &dyn_cfg, cfg.delta(), cfg.k_max) {
            Ok(orbit) => {
                let strategy = synthesize(g, &orbit, &threats, &cfg.synthesis())?;
                let eval = exact_eval(g, &strategy);
                return Ok(Solved {
                    threats,
                    mesh: grid.mesh,
                    refinements,
                    solution: Solution::Orbit { orbit },
                    strategy,
                    eval,
                });
            }
            Err(Error::WitnessNotFound { .. }) if refinements < cfg.mesh_refinements => {
                mesh /= 2.0;
                refinements += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Classifies `w` and applies `f`, on the configured grid.
pub fn classify_point(g: &Game, cfg: &RunConfig, w: &PayoffVector) -> Result<DynamicsStep> {
    cfg.validate()?;
    if w.len() != g.n_players() {
        return Err(Error::Config(format!("w has {} entries for {} players", w.len(), g.n_players())));
    }
    let s = require_in_class(g)?;
    let threats = minmax_all(g, &cfg.minmax())?;
    let ybox = PayoffBox::new(&threats.values(), cfg.epsilon);
    let grid = SearchGrid::build(g, &s, cfg.mesh, cfg.point_limit, cfg.exec)?;
    step(g, &grid, w, &ybox, &cfg.dynamics())
}

/// The orbit alone, with the same mesh refinement as [`solve`].
pub fn orbit_only(g: &Game, cfg: &RunConfig) -> Result<Orbit> {
    cfg.validate()?;
    let s = require_in_class(g)?;
    let threats = minmax_all(g, &cfg.minmax())?;
    let ybox = PayoffBox::new(&threats.values(), cfg.epsilon);
    let mut mesh = cfg.mesh;
    let mut refinements = 0;
    loop {
        let grid = SearchGrid::build(g, &s, mesh, cfg.point_limit, cfg.exec)?;
        match build_orbit(g, &grid, &ybox, &cfg.dynamics(), cfg.delta(), cfg.k_max) {
            Err(Error::WitnessNotFound { .. }) if refinements < cfg.mesh_refinements => {
                mesh /= 2.0;
                refinements += 1;
            }
            other => return other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::par::Exec;

    fn cfg(epsilon: f64) -> RunConfig {
        RunConfig {
            epsilon,
            discounted_check: false,
            exec: Exec::Sequential,
            ..RunConfig::default()
        }
    }

    #[test]
    fn example2_analysis_records_failure() {
        let g = instances::example2();
        let a = analyze(&g, &cfg(0.1)).unwrap();
        assert_eq!(a.structure.components.len(), 3);
        assert!(!a.precondition.passed);
        assert_eq!(a.precondition.rectangular_component, Some(1));
        let flags: Vec<bool> = a.structure.components.iter().map(|c| c.rectangular).collect();
        assert_eq!(flags, a.rectangular_via_exits);
        assert!(matches!(solve(&g, &cfg(0.1)), Err(Error::RectangularComponentFound(1))));
    }

    #[test]
    fn example1_solves_by_certificate() {
        let g = instances::example1();
        let s = solve(&g, &cfg(0.05)).unwrap();
        assert!(matches!(s.solution, Solution::Certificate { .. }));
        assert!(s.eval.gamma.dist_inf(&crate::PayoffVector(vec![0.5, 0.5])) <= 1e-12);
    }

    #[test]
    fn ex1_hard_solves_by_orbit() {
        let g = instances::ex1_hard();
        let c = RunConfig {
            delta: Some(0.4),
            ..cfg(0.1)
        };
        let s = solve(&g, &c).unwrap();
        let Solution::Orbit { orbit } = &s.solution else {
            panic!("expected an orbit");
        };
        assert_eq!(orbit.k0, s.strategy.blocks.len());
        assert!(s.eval.within_bound);
        assert!(s.eval.residuals_ok);
    }
}
