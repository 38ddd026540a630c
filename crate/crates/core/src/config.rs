//! Run-wide configuration and its projection onto the module configs.

use serde::{Deserialize, Serialize};

use crate::dynamics::grid::DEFAULT_POINT_LIMIT;
use crate::dynamics::{DynamicsConfig, NashConfig};
use crate::error::{Error, Result};
use crate::eval::{DeviationConfig, Family, SimConfig};
use crate::orbit::{default_delta, validate_delta, DEFAULT_K_MAX};
use crate::par::Exec;
use crate::synthesis::SynthesisConfig;
use crate::threat::MinmaxConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub epsilon: f64,
    /// `-0.8 / ln(epsilon)` when `None`.
    pub delta: Option<f64>,
    pub mesh: f64,
    /// Times the mesh is halved when no witness is found.
    pub mesh_refinements: usize,
    pub point_limit: usize,
    pub tol_class: f64,
    pub tol_v: f64,
    pub seed: u64,
    pub episodes: u64,
    pub k_max: usize,
    pub restarts: usize,
    pub discounted_check: bool,
    pub families: Vec<Family>,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            epsilon: 0.1,
            delta: None,
            mesh: 0.05,
            mesh_refinements: 2,
            point_limit: DEFAULT_POINT_LIMIT,
            tol_class: 1e-6,
            tol_v: 1e-6,
            seed: 0,
            episodes: 100_000,
            k_max: DEFAULT_K_MAX,
            restarts: 64,
            discounted_check: true,
            families: Family::ALL.to_vec(),
            exec: Exec::default(),
        }
    }
}

impl RunConfig {
    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or_else(|| default_delta(self.epsilon))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon {} must lie in (0, 1)", self.epsilon)));
        }
        validate_delta(self.epsilon, self.delta())?;
        if !(self.mesh > 0.0 && self.mesh <= 1.0) {
            return Err(Error::Config(format!("mesh {} must lie in (0, 1]", self.mesh)));
        }
        if !(self.tol_class > 0.0 && self.tol_v > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn dynamics(&self) -> DynamicsConfig {
        DynamicsConfig {
            epsilon: self.epsilon,
            tol_class: self.tol_class,
            nash: NashConfig {
                seed: self.seed,
                ..NashConfig::default()
            },
            exec: self.exec,
            ..DynamicsConfig::default()
        }
    }

    pub fn minmax(&self) -> MinmaxConfig {
        MinmaxConfig {
            tol_v: self.tol_v,
            restarts: self.restarts,
            seed: self.seed,
            discounted: self.discounted_check,
            exec: self.exec,
            ..MinmaxConfig::default()
        }
    }

    pub fn synthesis(&self) -> SynthesisConfig {
        SynthesisConfig::default()
    }

    pub fn simulation(&self) -> SimConfig {
        SimConfig {
            episodes: self.episodes,
            seed: self.seed,
            exec: self.exec,
        }
    }

    pub fn deviations(&self) -> DeviationConfig {
        DeviationConfig {
            families: self.families.clone(),
            episodes: self.episodes,
            seed: self.seed,
            exec: self.exec,
            ..DeviationConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert!((c.delta() - 0.8 / 10f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_delta_and_epsilon() {
        let mut c = RunConfig {
            delta: Some(0.5),
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        c.delta = None;
        c.epsilon = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"epsilon": 0.05}"#).unwrap();
        assert_eq!(c.epsilon, 0.05);
        assert_eq!(c.mesh, 0.05);
    }
}
