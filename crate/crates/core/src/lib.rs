//! Solver and verifier for multiplayer positive recursive absorbing games.

pub mod config;
pub mod dynamics;
pub mod eval;
pub mod error;
pub mod game;
pub mod generate;
pub mod instances;
pub mod lp;
pub mod orbit;
pub mod par;
pub mod pipeline;
pub mod report;
pub mod structure;
pub mod synthesis;
pub mod threat;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use game::{Game, GameBuilder, MixedProfile, PayoffVector};
pub use par::Exec;
