use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use absorb_core::eval::{deviation_suite, simulate, Family};
use absorb_core::generate::{generate_instance, GenConfig};
use absorb_core::pipeline::{analyze, classify_point, orbit_only, solve};
use absorb_core::report::{ErrorReport, Report};
use absorb_core::synthesis::StrategySpec;
use absorb_core::{instances, par, Error, Exec, Game, PayoffVector, Result, RunConfig};

#[derive(Parser)]
#[command(name = "absorb", version, about = "Equilibria of positive recursive absorbing games")]
struct Cli {
    /// Worker threads for data-parallel loops (0 = rayon default).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// JSON file with a RunConfig; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    mesh: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Components, exits and minmax values.
    Analyze {
        instance: String,
        #[command(flatten)]
        common: Common,
    },
    /// Classify a payoff vector and apply one step of the dynamics.
    Classify {
        instance: String,
        /// Comma separated payoff vector.
        #[arg(long, value_delimiter = ',', required = true)]
        w: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Certificate or orbit, strategy profile and exact evaluation.
    Solve {
        instance: String,
        #[command(flatten)]
        common: Common,
    },
    /// The orbit with per-step classifications.
    Orbit {
        instance: String,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Deviation suite against the solved strategy profile.
    Verify {
        instance: String,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episodes: Option<u64>,
        /// Comma separated families (d1..d5).
        #[arg(long, value_delimiter = ',')]
        deviations: Option<Vec<Family>>,
        /// Restrict to these players.
        #[arg(long, value_delimiter = ',')]
        player: Option<Vec<usize>>,
        /// Strategy profile from a previous `solve` report or a bare spec.
        #[arg(long)]
        strategy: Option<PathBuf>,
        /// Gain bound (default 7 epsilon).
        #[arg(long)]
        bound: Option<f64>,
    },
    /// Monte Carlo play of the solved strategy profile.
    Simulate {
        instance: String,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episodes: Option<u64>,
        #[arg(long)]
        strategy: Option<PathBuf>,
    },
    /// Random in-class instance.
    Gen {
        #[arg(long, default_value_t = 2)]
        players: usize,
        /// Actions per player; one value applies to all players.
        #[arg(long, value_delimiter = ',', default_values_t = vec![3])]
        actions: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long)]
        allow_rectangular: bool,
        #[arg(long)]
        allow_nonabsorbing_equilibrium: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn load_instance(name: &str) -> Result<Game> {
    let path = Path::new(name);
    if path.exists() {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        return Game::from_json(&text);
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(name);
    instances::by_name(stem).ok_or_else(|| {
        Error::Io(format!(
            "{name}: no such file and no bundled instance (bundled: {})",
            instances::NAMES.join(", ")
        ))
    })
}

fn load_config(cli: &Cli, common: &Common) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(e) = common.epsilon {
        cfg.epsilon = e;
    }
    if common.delta.is_some() {
        cfg.delta = common.delta;
    }
    if let Some(h) = common.mesh {
        cfg.mesh = h;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    cfg.validate()?;
    Ok(cfg)
}

fn load_strategy(path: &Path) -> Result<StrategySpec> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| io_err(path, e))?;
    let spec = v.pointer("/result/strategy").cloned().unwrap_or(v);
    serde_json::from_value(spec).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
}

fn strategy_for(g: &Game, cfg: &RunConfig, file: Option<&PathBuf>) -> Result<StrategySpec> {
    match file {
        Some(path) => load_strategy(path),
        None => Ok(solve(g, cfg)?.strategy),
    }
}

fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.output {
        Some(path) => fs::write(path, format!("{text}\n")).map_err(|e| io_err(path, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if cli.workers > 0 {
        par::set_workers(cli.workers);
    }
    let text = match &cli.command {
        Command::Analyze { instance, common } => {
            let g = load_instance(instance)?;
            let cfg = load_config(cli, common)?;
            Report::new("analyze", Some(&g), &cfg, analyze(&g, &cfg)?).to_json()
        }
        Command::Classify { instance, w, common } => {
            let g = load_instance(instance)?;
            let cfg = load_config(cli, common)?;
            let step = classify_point(&g, &cfg, &PayoffVector(w.clone()))?;
            Report::new("classify", Some(&g), &cfg, step).to_json()
        }
        Command::Solve { instance, common } => {
            let g = load_instance(instance)?;
            let cfg = load_config(cli, common)?;
            Report::new("solve", Some(&g), &cfg, solve(&g, &cfg)?).to_json()
        }
        Command::Orbit { instance, common, k_max } => {
            let g = load_instance(instance)?;
            let mut cfg = load_config(cli, common)?;
            if let Some(k) = k_max {
                cfg.k_max = *k;
            }
            Report::new("orbit", Some(&g), &cfg, orbit_only(&g, &cfg)?).to_json()
        }
        Command::Verify {
            instance,
            common,
            episodes,
            deviations,
            player,
            strategy,
            bound,
        } => {
            let g = load_instance(instance)?;
            let mut cfg = load_config(cli, common)?;
            if let Some(n) = episodes {
                cfg.episodes = *n;
            }
            if let Some(f) = deviations {
                cfg.families = f.clone();
            }
            let spec = strategy_for(&g, &cfg, strategy.as_ref())?;
            let mut dcfg = cfg.deviations();
            dcfg.players = player.clone();
            dcfg.bound = *bound;
            Report::new("verify", Some(&g), &cfg, deviation_suite(&g, &spec, &dcfg)?).to_json()
        }
        Command::Simulate {
            instance,
            common,
            episodes,
            strategy,
        } => {
            let g = load_instance(instance)?;
            let mut cfg = load_config(cli, common)?;
            if let Some(n) = episodes {
                cfg.episodes = *n;
            }
            let spec = strategy_for(&g, &cfg, strategy.as_ref())?;
            Report::new("simulate", Some(&g), &cfg, simulate(&g, &spec, &cfg.simulation())?).to_json()
        }
        Command::Gen {
            players,
            actions,
            seed,
            density,
            allow_rectangular,
            allow_nonabsorbing_equilibrium,
            out,
        } => {
            let gcfg = GenConfig {
                players: *players,
                actions: actions.clone(),
                seed: *seed,
                density: *density,
                allow_rectangular: *allow_rectangular,
                allow_nonabsorbing_equilibrium: *allow_nonabsorbing_equilibrium,
                ..GenConfig::default()
            };
            let g = generate_instance(&gcfg)?;
            let text = g.to_json();
            if let Some(path) = out {
                fs::write(path, format!("{text}\n")).map_err(|e| io_err(path, e))?;
                return Ok(());
            }
            text
        }
    };
    emit(cli, &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = ErrorReport::new(&e);
            eprintln!("error: {e}");
            println!("{}", report.to_json());
            ExitCode::from(report.exit_code as u8)
        }
    }
}
