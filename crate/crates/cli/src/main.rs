use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use potgame::experiment::{run_experiment, ExperimentSpec, Padding};
use potgame::graph::{admits_ordinal_potential, DagEdge, DeviationGraph};
use potgame::potential::{
    check_proposition, potentialize, verify_potential, PropositionReport, VerificationReport,
};
use potgame::replicator::{random_policy, simulate, Policy, SimulationConfig};
use potgame::{normalize_rewards, random_game, Game};

#[derive(Parser)]
#[command(name = "potgame", version, about = "Ordinal-potential approximation of normal-form games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Potentialize a game and write the common-interest game plus a report.
    Potentialize {
        game: PathBuf,
        /// Output game [default: <game>.potentialized.json]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sidecar report [default: <game>.report.json]
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Integrate the replicator dynamics of a game.
    Simulate {
        game: PathBuf,
        /// Game in which average reward is measured [default: the simulated game]
        #[arg(long)]
        reward_game: Option<PathBuf>,
        /// Seed of the random start policy
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Start policy JSON (nested arrays); overrides --seed
        #[arg(long)]
        start: Option<PathBuf>,
        /// Maximum number of RK4 steps
        #[arg(long, default_value_t = 100_000)]
        steps: usize,
        #[arg(long, default_value_t = 1e-2)]
        step_size: f64,
        /// Use utilities as given instead of rescaling them to [0, 1]
        #[arg(long)]
        raw: bool,
        /// Output prefix for <prefix>.trace.csv and <prefix>.policy.json
        #[arg(long)]
        out_prefix: Option<PathBuf>,
    },
    /// Paired convergence experiment on random games.
    Experiment {
        /// Action counts joined by 'x', e.g. 10x10 or 4x4x4
        #[arg(long)]
        shape: String,
        #[arg(long, default_value_t = 100)]
        games: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        independent_starts: bool,
        #[arg(long, default_value_t = 100_000)]
        max_steps: usize,
        #[arg(long, value_enum, default_value_t = PaddingArg::HoldFinal)]
        padding: PaddingArg,
    },
    /// Generate a random game with integer utilities in 1..=|A|.
    Random {
        #[arg(long)]
        shape: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the nonnegative deviation graph in DOT format.
    Dot {
        game: PathBuf,
        /// Include negative edges
        #[arg(long)]
        all_edges: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PaddingArg {
    HoldFinal,
    ActiveOnly,
}

impl From<PaddingArg> for Padding {
    fn from(p: PaddingArg) -> Self {
        match p {
            PaddingArg::HoldFinal => Padding::HoldFinal,
            PaddingArg::ActiveOnly => Padding::ActiveOnly,
        }
    }
}

fn parse_shape(shape: &str) -> Result<Vec<usize>> {
    let counts = shape
        .split(['x', 'X'])
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("invalid shape '{shape}'"))?;
    if counts.is_empty() || counts.contains(&0) {
        bail!("invalid shape '{shape}'");
    }
    Ok(counts)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn load(path: &Path) -> Result<Game> {
    Game::load(path).with_context(|| format!("reading game {}", path.display()))
}

#[derive(Serialize)]
struct PotentialReport<'a> {
    admits_ordinal_potential: bool,
    potential: &'a [f64],
    component_of: &'a [usize],
    components: &'a [Vec<usize>],
    component_values: &'a [f64],
    dag_edges: &'a [DagEdge],
    verification: VerificationReport,
    proposition: PropositionReport,
}

fn cmd_potentialize(game: &Path, out: Option<PathBuf>, report: Option<PathBuf>) -> Result<()> {
    let g = load(game)?;
    let p = potentialize(&g);
    let potentialized = Game::common_interest(g.action_counts().to_vec(), p.potential.values.clone())?;
    let out = out.unwrap_or_else(|| sibling(game, ".potentialized.json"));
    let report_path = report.unwrap_or_else(|| sibling(game, ".report.json"));
    potentialized.save(&out)?;
    let report = PotentialReport {
        admits_ordinal_potential: admits_ordinal_potential(&g),
        potential: &p.potential.values,
        component_of: &p.condensation.component_of,
        components: &p.condensation.components,
        component_values: &p.potential.component_values,
        dag_edges: &p.condensation.dag_edges,
        verification: verify_potential(&g, &p.potential),
        proposition: check_proposition(&g),
    };
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    println!("wrote {} and {}", out.display(), report_path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    game: &Path,
    reward_game: Option<PathBuf>,
    seed: u64,
    start: Option<PathBuf>,
    steps: usize,
    step_size: f64,
    raw: bool,
    out_prefix: Option<PathBuf>,
) -> Result<()> {
    let prep = |g: Game| if raw { g } else { normalize_rewards(&g) };
    let g = prep(load(game)?);
    let reward = match reward_game {
        Some(p) => prep(load(&p)?),
        None => g.clone(),
    };
    let start = match start {
        Some(p) => serde_json::from_str::<Policy>(&std::fs::read_to_string(&p)?)
            .with_context(|| format!("reading start policy {}", p.display()))?,
        None => random_policy(g.action_counts(), seed)?,
    };
    let config = SimulationConfig {
        max_steps: steps,
        step_size,
        ..Default::default()
    };
    let trace = simulate(&g, &reward, &start, &config)?;

    let prefix = out_prefix.unwrap_or_else(|| sibling(game, ""));
    let csv_path = prefix.with_file_name(format!(
        "{}.trace.csv",
        prefix.file_name().unwrap_or_default().to_string_lossy()
    ));
    let policy_path = csv_path.with_file_name(
        csv_path
            .file_name()
            .unwrap()
            .to_string_lossy()
            .replace(".trace.csv", ".policy.json"),
    );
    let mut csv = String::from("step,beta,rho\n");
    for (t, (b, r)) in trace.beta_series.iter().zip(&trace.rho_series).enumerate() {
        csv.push_str(&format!("{},{b},{r}\n", t + 1));
    }
    std::fs::write(&csv_path, csv)?;
    std::fs::write(&policy_path, serde_json::to_string_pretty(trace.final_policy())?)?;
    println!(
        "converged={} steps={} final_rho={}",
        trace.converged,
        trace.steps_run,
        trace.final_rho().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Potentialize { game, out, report } => cmd_potentialize(&game, out, report),
        Command::Simulate {
            game,
            reward_game,
            seed,
            start,
            steps,
            step_size,
            raw,
            out_prefix,
        } => cmd_simulate(&game, reward_game, seed, start, steps, step_size, raw, out_prefix),
        Command::Experiment {
            shape,
            games,
            seed,
            out,
            independent_starts,
            max_steps,
            padding,
        } => {
            let mut spec = ExperimentSpec::new(parse_shape(&shape)?, games, seed);
            spec.sim_config.max_steps = max_steps;
            spec.independent_starts = independent_starts;
            spec.padding = padding.into();
            let output = run_experiment(&spec)?;
            output.write(&out)?;
            let s = &output.report.summary;
            println!(
                "potentialized converged {:.1}%, original {:.1}%, final rho {:.3} vs {:.3} (ratio {:.3})",
                100.0 * s.potentialized.convergence_rate,
                100.0 * s.original.convergence_rate,
                s.potentialized.final_rho_mean,
                s.original.final_rho_mean,
                s.rho_ratio
            );
            Ok(())
        }
        Command::Random { shape, seed, out } => {
            random_game(&parse_shape(&shape)?, seed)?.save(&out)?;
            Ok(())
        }
        Command::Dot { game, all_edges } => {
            let g = load(&game)?;
            let full = DeviationGraph::build(&g);
            let graph = if all_edges { full } else { full.nonnegative() };
            print!("{}", graph.to_dot(Some(&g)));
            Ok(())
        }
    }
}
