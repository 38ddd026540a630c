//! Finite orbit of `f` ending at the all-ones vector.

use serde::{Deserialize, Serialize};

use crate::dynamics::{step, step_f, DynamicsConfig, DynamicsStep, PayoffBox, SearchGrid};
use crate::error::{Error, Result};
use crate::game::{Game, PayoffVector};

/// Steps closer than this to a fixed point are repeated instead of iterated.
pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const DEFAULT_K_MAX: usize = 100_000;

/// Largest admissible `delta` for a given `epsilon`, exclusive.
pub fn delta_bound(epsilon: f64) -> f64 {
    -1.0 / epsilon.ln()
}

/// `-0.8 / ln(epsilon)`.
pub fn default_delta(epsilon: f64) -> f64 {
    0.8 * delta_bound(epsilon)
}

pub fn validate_delta(epsilon: f64, delta: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!("epsilon {epsilon} must lie in (0, 1)")));
    }
    let hi = delta_bound(epsilon);
    if !(delta > 0.0 && delta < hi) {
        return Err(Error::Config(format!("delta {delta} must lie in (0, {hi})")));
    }
    Ok(())
}

/// `points[k] = w^(k)` for `k = 0..=k0`, with `points[k0] = (1, ..., 1)`.
/// `steps[k]` maps `w^(k+1)` to `w^(k)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Orbit {
    pub epsilon: f64,
    pub delta: f64,
    pub k0: usize,
    pub points: Vec<PayoffVector>,
    pub steps: Vec<DynamicsStep>,
    pub mu_sum: f64,
    /// Number of steps that repeat a fixed point.
    pub fixed_point_repeats: usize,
}

impl Orbit {
    /// `prod_k (1 - mu_k)`.
    pub fn survival(&self) -> f64 {
        self.steps.iter().map(|s| 1.0 - s.mu).product()
    }

    /// `max_k ||w^(k) - f(w^(k+1))||` with `f` recomputed from the stored
    /// witnesses.
    pub fn max_defect(&self, g: &Game, ybox: &PayoffBox, cfg: &DynamicsConfig) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (k, s) in self.steps.iter().enumerate() {
            let again = step_f(g, s.classification.clone(), &self.points[k + 1], ybox, cfg)?;
            worst = worst.max(again.f.dist_inf(&self.points[k]));
        }
        Ok(worst)
    }
}

/// Iterates `u^{m+1} = f(u^m)` from the all-ones vector until the absorption
/// masses sum to `1/delta`, then stores the sequence reversed.
pub fn build_orbit(
    g: &Game,
    grid: &SearchGrid,
    ybox: &PayoffBox,
    cfg: &DynamicsConfig,
    delta: f64,
    k_max: usize,
) -> Result<Orbit> {
    validate_delta(cfg.epsilon, delta)?;
    let target = 1.0 / delta;
    let mut u = ybox.upper_corner();
    let mut forward: Vec<DynamicsStep> = Vec::new();
    let mut mu_sum = 0.0;
    let mut repeats = 0;
    while mu_sum < target {
        if forward.len() >= k_max {
            return Err(Error::OrbitBudgetExceeded {
                steps: forward.len(),
                mass: mu_sum,
                target,
            });
        }
        let s = step(g, grid, &u, ybox, cfg)?;
        if s.f.dist_inf(&u) <= FIXED_POINT_TOL {
            while mu_sum < target {
                if forward.len() >= k_max {
                    return Err(Error::OrbitBudgetExceeded {
                        steps: forward.len(),
                        mass: mu_sum,
                        target,
                    });
                }
                mu_sum += s.mu;
                repeats += 1;
                let mut copy = s.clone();
                copy.f = u.clone();
                forward.push(copy);
            }
            break;
        }
        mu_sum += s.mu;
        u = s.f.clone();
        forward.push(s);
    }

    let k0 = forward.len();
    let mut points = Vec::with_capacity(k0 + 1);
    points.push(forward.last().map_or_else(|| u.clone(), |s| s.f.clone()));
    for s in forward.iter().rev() {
        points.push(s.w.clone());
    }
    forward.reverse();
    Ok(Orbit {
        epsilon: cfg.epsilon,
        delta,
        k0,
        points,
        steps: forward,
        mu_sum,
        fixed_point_repeats: repeats,
    })
}
