//! Certification of a block strategy profile: exact payoff evaluation on the
//! no-detection path, Monte Carlo replay, and deviation testing.

pub mod deviation;
pub mod simulate;

use serde::{Deserialize, Serialize};

use crate::game::{Game, MixedProfile, PayoffVector};
use crate::synthesis::StrategySpec;

pub use deviation::{deviation_suite, DeviationConfig, DeviationReport, Family};
pub use simulate::{simulate, SimConfig, SimReport};

/// Payoff of playing `x` forever: `r(x)` if it absorbs, zero otherwise.
pub fn stationary_value(g: &Game, x: &MixedProfile) -> PayoffVector {
    g.joint(x, &[])
        .payoff()
        .unwrap_or_else(|| PayoffVector::splat(g.n_players(), 0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `gamma(sigma*)` on the no-detection path.
    pub gamma: PayoffVector,
    /// `Z^(k)` for `k = 0..=K_0`; `Z^(K_0)` is the tail value.
    pub z: Vec<PayoffVector>,
    pub block_masses: Vec<f64>,
    /// Probability of absorbing within the blocks.
    pub total_absorption: f64,
    pub tail_value: PayoffVector,
    pub target: PayoffVector,
    /// `||gamma - w^(0)||`.
    pub distance: f64,
    /// `4 epsilon`.
    pub distance_bound: f64,
    /// `sum_k eta^(k) |I|`, the probability mass that detection can move.
    pub detection_bound: f64,
    /// `||w^(k) - (m_k r(y_k) + (1 - m_k) w^(k+1))||` per block.
    pub block_residuals: Vec<f64>,
    /// Every residual is within its block's `eta`.
    pub residuals_ok: bool,
    pub within_bound: bool,
}

/// Backward recursion `Z^(k) = m_k r(y_k) + (1 - m_k) Z^(k+1)`.
pub fn exact_eval(g: &Game, spec: &StrategySpec) -> EvalReport {
    let n = g.n_players();
    let tail_value = stationary_value(g, &spec.tail);
    let k0 = spec.blocks.len();
    let mut z = vec![tail_value.clone(); k0 + 1];
    for k in (0..k0).rev() {
        let b = &spec.blocks[k];
        z[k] = z[k + 1].lerp(&b.absorbing_payoff, b.realized_mass);
    }
    let block_masses: Vec<f64> = spec.blocks.iter().map(|b| b.realized_mass).collect();
    let total_absorption = 1.0 - block_masses.iter().map(|m| 1.0 - m).product::<f64>();
    let block_residuals: Vec<f64> = spec
        .blocks
        .iter()
        .map(|b| b.implemented().dist_inf(&b.w_start))
        .collect();
    let residuals_ok = spec
        .blocks
        .iter()
        .zip(&block_residuals)
        .all(|(b, r)| *r <= b.eta + 1e-12);
    let gamma = z[0].clone();
    let distance = gamma.dist_inf(&spec.target);
    let distance_bound = 4.0 * spec.epsilon;
    EvalReport {
        detection_bound: spec.eta_total * n as f64,
        within_bound: distance <= distance_bound,
        gamma,
        z,
        block_masses,
        total_absorption,
        tail_value,
        target: spec.target.clone(),
        distance,
        distance_bound,
        block_residuals,
        residuals_ok,
    }
}
