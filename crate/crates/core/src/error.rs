use thiserror::Error;

/// Errors produced anywhere in the solver pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed game: {0}")]
    Malformed(String),
    #[error("absorbing payoff of player {player} at profile {profile:?} is {value}, must be > 0")]
    NonPositivePayoff {
        profile: Vec<usize>,
        player: usize,
        value: f64,
    },
    #[error("absorbing payoff of player {player} at profile {profile:?} is {value}, must be <= 1")]
    PayoffOutOfRange {
        profile: Vec<usize>,
        player: usize,
        value: f64,
    },
    #[error("absorption probability {p} at profile {profile:?} is outside [0, 1]")]
    ProbabilityOutOfRange { profile: Vec<usize>, p: f64 },
    #[error("profile {profile:?} has p > 0 but no payoff vector")]
    MissingPayoff { profile: Vec<usize> },
    #[error("invalid mixed profile: {0}")]
    InvalidProfile(String),
    #[error("profile is nonabsorbing (p(x) = 0)")]
    NonAbsorbingProfile,
    #[error("profile is absorbing (p(x) = {0})")]
    AbsorbingProfile(f64),
    #[error("support is not contained in the nonabsorbing set")]
    SupportNotNonabsorbing,
    #[error("{0} players exceeds the supported maximum of {1}")]
    TooManyPlayers(usize, usize),
    #[error("component {0} is rectangular")]
    RectangularComponentFound(usize),
    #[error("a nonabsorbing equilibrium exists; the dynamics require its absence")]
    NonabsorbingEquilibriumExists,
    #[error("minmax search for player {player} did not certify a bound (best bound {bound})")]
    SearchBudgetExceeded { player: usize, bound: f64 },
    #[error("no witness found on the grid (mesh {mesh}); refine the mesh")]
    WitnessNotFound { mesh: f64 },
    #[error("no equilibrium of the one-shot game found within tolerance {tolerance}")]
    NashNotFound { tolerance: f64 },
    #[error("witness fails its defining inequalities: {0}")]
    InvalidWitness(String),
    #[error("orbit reached {steps} steps with cumulative mass {mass} < {target}")]
    OrbitBudgetExceeded {
        steps: usize,
        mass: f64,
        target: f64,
    },
    #[error("no block horizon fits the limits: {0}")]
    HorizonOverflow(String),
    #[error("payoff vector outside the box Y: {0}")]
    OutsideBox(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("grid too large: {points} points exceeds limit {limit}")]
    GridTooLarge { points: usize, limit: usize },
    #[error("instance generation failed after {0} attempts")]
    GenerationBudgetExceeded(usize),
    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 4,
            Error::SearchBudgetExceeded { .. }
            | Error::WitnessNotFound { .. }
            | Error::NashNotFound { .. }
            | Error::OrbitBudgetExceeded { .. }
            | Error::HorizonOverflow(_)
            | Error::GenerationBudgetExceeded(_)
            | Error::InvalidWitness(_)
            | Error::GridTooLarge { .. } => 3,
            _ => 2,
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Malformed(_) => "Malformed",
            Error::NonPositivePayoff { .. } => "NonPositivePayoff",
            Error::PayoffOutOfRange { .. } => "PayoffOutOfRange",
            Error::ProbabilityOutOfRange { .. } => "ProbabilityOutOfRange",
            Error::MissingPayoff { .. } => "MissingPayoff",
            Error::InvalidProfile(_) => "InvalidProfile",
            Error::NonAbsorbingProfile => "NonAbsorbingProfile",
            Error::AbsorbingProfile(_) => "AbsorbingProfile",
            Error::SupportNotNonabsorbing => "SupportNotNonabsorbing",
            Error::TooManyPlayers(..) => "TooManyPlayers",
            Error::RectangularComponentFound(_) => "RectangularComponentFound",
            Error::NonabsorbingEquilibriumExists => "NonabsorbingEquilibriumExists",
            Error::SearchBudgetExceeded { .. } => "SearchBudgetExceeded",
            Error::WitnessNotFound { .. } => "WitnessNotFound",
            Error::NashNotFound { .. } => "NashNotFound",
            Error::InvalidWitness(_) => "InvalidWitness",
            Error::OrbitBudgetExceeded { .. } => "OrbitBudgetExceeded",
            Error::HorizonOverflow(_) => "HorizonOverflow",
            Error::OutsideBox(_) => "OutsideBox",
            Error::Config(_) => "Config",
            Error::GridTooLarge { .. } => "GridTooLarge",
            Error::GenerationBudgetExceeded(_) => "GenerationBudgetExceeded",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
