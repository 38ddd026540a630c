//! Random positive recursive absorbing games by rejection sampling of
//! absorption patterns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Game, GameBuilder, MAX_PROFILES};
use crate::structure::{build_structure, check_precondition, find_nonabsorbing_equilibrium};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub players: usize,
    /// Actions per player; a single entry applies to every player.
    pub actions: Vec<usize>,
    pub seed: u64,
    /// Probability that a profile is absorbing.
    pub density: f64,
    /// Absorption probabilities are drawn uniformly from this range.
    pub p_range: (f64, f64),
    /// Absorbing payoffs are drawn uniformly from this range.
    pub payoff_range: (f64, f64),
    pub allow_rectangular: bool,
    pub allow_nonabsorbing_equilibrium: bool,
    /// Accept games without nonabsorbing profiles.
    pub allow_empty: bool,
    pub max_attempts: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            players: 2,
            actions: vec![3],
            seed: 0,
            density: 0.5,
            p_range: (1.0, 1.0),
            payoff_range: (0.05, 1.0),
            allow_rectangular: false,
            allow_nonabsorbing_equilibrium: false,
            allow_empty: false,
            max_attempts: 10_000,
        }
    }
}

impl GenConfig {
    fn action_counts(&self) -> Result<Vec<usize>> {
        if self.players < 2 {
            return Err(Error::Config("at least two players are required".into()));
        }
        let counts = match self.actions.len() {
            1 => vec![self.actions[0]; self.players],
            n if n == self.players => self.actions.clone(),
            n => {
                return Err(Error::Config(format!(
                    "{n} action counts given for {} players",
                    self.players
                )))
            }
        };
        if counts.contains(&0) {
            return Err(Error::Config("every player needs an action".into()));
        }
        let total = counts.iter().try_fold(1usize, |a, &c| a.checked_mul(c));
        if total.is_none_or(|t| t > MAX_PROFILES) {
            return Err(Error::Config("too many action profiles".into()));
        }
        let (lo, hi) = self.payoff_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Config("payoff range must lie in (0, 1]".into()));
        }
        let (plo, phi) = self.p_range;
        if !(plo > 0.0 && plo <= phi && phi <= 1.0) {
            return Err(Error::Config("absorption range must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(Error::Config("density must lie in [0, 1]".into()));
        }
        Ok(counts)
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn draw<R: Rng>(rng: &mut R, counts: &[usize], cfg: &GenConfig) -> Result<Game> {
    let total: usize = counts.iter().product();
    let mut builder = GameBuilder::new(counts);
    for idx in 0..total {
        if rng.random::<f64>() < cfg.density {
            let mut profile = vec![0; counts.len()];
            let mut rest = idx;
            for i in (0..counts.len()).rev() {
                profile[i] = rest % counts[i];
                rest /= counts[i];
            }
            let p = uniform(rng, cfg.p_range);
            let r: Vec<f64> = (0..counts.len()).map(|_| uniform(rng, cfg.payoff_range)).collect();
            builder = builder.absorbing(&profile, p, &r);
        }
    }
    builder.build()
}

/// Whether `g` meets the constraints of `cfg`.
pub fn accepts(g: &Game, cfg: &GenConfig) -> bool {
    let s = build_structure(g);
    if s.nonabsorbing.is_empty() && !cfg.allow_empty {
        return false;
    }
    if !cfg.allow_rectangular && check_precondition(&s).is_err() {
        return false;
    }
    cfg.allow_nonabsorbing_equilibrium || find_nonabsorbing_equilibrium(g, &s).is_none()
}

/// Samples games until one meets the constraints.
pub fn generate_instance(cfg: &GenConfig) -> Result<Game> {
    let counts = cfg.action_counts()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.max_attempts {
        let g = draw(&mut rng, &counts, cfg)?;
        if accepts(&g, cfg) {
            let meta = serde_json::json!({
                "generator": {
                    "seed": cfg.seed,
                    "density": cfg.density,
                    "p_range": [cfg.p_range.0, cfg.p_range.1],
                    "payoff_range": [cfg.payoff_range.0, cfg.payoff_range.1],
                }
            });
            return Ok(with_metadata(g, meta));
        }
    }
    Err(Error::GenerationBudgetExceeded(cfg.max_attempts))
}

fn with_metadata(g: Game, meta: serde_json::Value) -> Game {
    let mut file = g.to_file();
    file.metadata = Some(meta);
    crate::game::validate_game(file).expect("regenerated game is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_instances_are_in_class() {
        for seed in 0..50 {
            let g = generate_instance(&GenConfig {
                seed,
                ..GenConfig::default()
            })
            .unwrap();
            let s = build_structure(&g);
            assert!(check_precondition(&s).is_ok());
            assert!(find_nonabsorbing_equilibrium(&g, &s).is_none());
            assert_eq!(Game::from_json(&g.to_json()).unwrap(), g);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let c = GenConfig {
            players: 3,
            actions: vec![2, 3, 2],
            seed: 11,
            ..GenConfig::default()
        };
        assert_eq!(generate_instance(&c).unwrap(), generate_instance(&c).unwrap());
    }

    #[test]
    fn degenerate_all_absorbing() {
        let c = GenConfig {
            actions: vec![1],
            density: 1.0,
            allow_empty: true,
            ..GenConfig::default()
        };
        let g = generate_instance(&c).unwrap();
        assert!(build_structure(&g).nonabsorbing.is_empty());
    }

    #[test]
    fn budget_and_config_errors() {
        let c = GenConfig {
            density: 1.0,
            max_attempts: 5,
            ..GenConfig::default()
        };
        assert!(matches!(generate_instance(&c), Err(Error::GenerationBudgetExceeded(5))));
        let c = GenConfig {
            players: 1,
            ..GenConfig::default()
        };
        assert!(matches!(generate_instance(&c), Err(Error::Config(_))));
    }
}
