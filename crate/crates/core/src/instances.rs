//! Bundled instances.

use crate::game::Game;

pub const EXAMPLE1_JSON: &str = include_str!("../instances/example1.json");
pub const EXAMPLE2_JSON: &str = include_str!("../instances/example2.json");
pub const EX1_HARD_JSON: &str = include_str!("../instances/ex1_hard.json");

/// Names accepted by [`by_name`].
pub const NAMES: [&str; 3] = ["example1", "example2", "ex1_hard"];

/// Two-player game whose single nonabsorbing component is an L-shape.
pub fn example1() -> Game {
    Game::from_json(EXAMPLE1_JSON).expect("bundled instance is valid")
}

/// Three-player game with three components, two of them rectangular.
pub fn example2() -> Game {
    Game::from_json(EXAMPLE2_JSON).expect("bundled instance is valid")
}

/// `example1` with the payoff of `(a1, a2''')` raised to `(0.5, 0.95)`.
pub fn ex1_hard() -> Game {
    Game::from_json(EX1_HARD_JSON).expect("bundled instance is valid")
}

pub fn by_name(name: &str) -> Option<Game> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    match name {
        "example1" => Some(example1()),
        "example2" => Some(example2()),
        "ex1_hard" => Some(ex1_hard()),
        _ => None,
    }
}
