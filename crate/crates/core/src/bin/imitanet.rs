use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use imitanet::dynamics::{simulate, ActivationSequence, Imitation, SwitchEvent};
use imitanet::experiments::{self, ExperimentConfig, ExperimentId};
use imitanet::io::GameFile;
use imitanet::netgen::{child_seed, generate_instance, InstanceParams, RadiusSpec};
use imitanet::optimal::exhaustive_optimal_until;
use imitanet::targeted::{budgeted_control, targeted_control, ControlOutcomeJson, TargetingPolicy, DEFAULT_EPSILON};
use imitanet::uniform::solve_uniform;
use imitanet::verify::{self, Suite, SuiteConfig};
use imitanet::{NetworkGame, RewardVector, Strategy, StrategyState};

#[derive(Parser)]
#[command(name = "imitanet", version, about = "Imitation dynamics on networks and reward control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random geometric network games with an initial equilibrium.
    Gen(GenArgs),
    /// Run the asynchronous dynamics from the game's state.
    Simulate(SimulateArgs),
    /// Optimal uniform reward.
    Uniform(UniformArgs),
    /// Targeted (optionally budgeted) rewards, or the exhaustive optimum.
    Target(TargetArgs),
    /// Property suites on random instances; exits 1 on any violation.
    Verify(VerifyArgs),
    /// Batch study written as CSV.
    Experiment(ExperimentArgs),
    /// Mean incentive per policy and study from result CSVs.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    /// Expected mean degree (default 4).
    #[arg(long, conflicts_with = "radius")]
    deg_exp: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    #[arg(long, default_value_t = 0.5)]
    v: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Keep only connected networks.
    #[arg(long)]
    require_connected: bool,
    /// Directory for `game_NNNN.json`; with a single game, stdout is used
    /// when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GameInput {
    /// Game JSON file (`-` for stdin).
    #[arg(long)]
    game: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    input: GameInput,
    /// Seed of the random activation sequence.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Activate agents 1, 2, ..., n, 1, ... instead of at random.
    #[arg(long)]
    round_robin: bool,
    #[arg(long)]
    max_activations: Option<u64>,
    /// Comma-separated per-agent rewards added to the A row.
    #[arg(long, value_delimiter = ',', conflicts_with = "uniform")]
    rewards: Option<Vec<f64>>,
    /// Reward added to every agent's A row.
    #[arg(long)]
    uniform: Option<f64>,
}

#[derive(Args)]
struct UniformArgs {
    #[command(flatten)]
    input: GameInput,
    /// Relax the given state to an equilibrium first, along the random
    /// sequence seeded by `--seed`.
    #[arg(long)]
    pre_relax: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Rand,
    Deg,
    Ime,
    Ipo,
    Iro,
    Ipro,
    Opt,
}

#[derive(Args)]
struct TargetArgs {
    #[command(flatten)]
    input: GameInput,
    #[arg(long, value_enum, default_value = "ipro")]
    policy: PolicyArg,
    /// Potential exponent for ipro.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Reward exponent for ipro.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// Seed for `rand`, and for `--pre-relax`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    pre_relax: bool,
    /// Give up on `opt` after this many seconds.
    #[arg(long)]
    timeout: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Acoord,
    Monotone,
    Unique,
    Candidates,
    All,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: SuiteArg,
    #[arg(long, default_value_t = 200)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    sequences: usize,
    /// Also check every connected game on up to this many agents
    /// exhaustively (with acoord or all).
    #[arg(long)]
    small_graphs: Option<usize>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Study to run; may be omitted when `--config` names one.
    #[arg(long, value_parser = parse_experiment_id)]
    id: Option<ExperimentId>,
    /// JSON configuration; missing fields take the study's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Seconds allowed for the exhaustive baseline per instance.
    #[arg(long)]
    timeout: Option<f64>,
    /// Record wall-clock time per row.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    require_connected: bool,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Metadata sidecar path (defaults to `<out>.meta.json` when `--out` is given).
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SummaryFormat {
    Text,
    Csv,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Result CSV files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: SummaryFormat,
    /// Also write the summary CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_experiment_id(s: &str) -> std::result::Result<ExperimentId, String> {
    s.parse().map_err(|e: imitanet::Error| e.to_string())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Uniform(a) => uniform(a),
        Command::Target(a) => target(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Experiment(a) => experiment(a),
        Command::Summarize(a) => summarize(a),
    }?;
    Ok(ExitCode::SUCCESS)
}

fn read_text(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        return io::read_to_string(io::stdin()).context("reading stdin");
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_game(path: &Path) -> Result<(NetworkGame, StrategyState)> {
    let file = GameFile::parse(&read_text(path)?)?;
    let (game, state) = file.to_game()?;
    let state = state.with_context(|| format!("{} has no \"state\"", path.display()))?;
    Ok((game, state))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn pre_relax(game: &NetworkGame, x: &StrategyState, seed: u64) -> Result<StrategyState> {
    let n = game.n() as u64;
    let t = simulate(
        &Imitation::new(),
        game,
        x,
        &ActivationSequence::RandomUniform(seed),
        1_000 * n * n + 10_000,
    )?;
    if !t.converged {
        bail!("initial state did not relax to an equilibrium");
    }
    Ok(t.final_state)
}

fn gen(a: GenArgs) -> Result<()> {
    if a.count == 0 {
        bail!("--count must be positive");
    }
    let radius = match a.radius {
        Some(r) => RadiusSpec::Radius(r),
        None => RadiusSpec::MeanDegree(a.deg_exp.unwrap_or(4.0)),
    };
    let params = InstanceParams {
        n: a.n,
        radius,
        p: a.p,
        v: a.v,
        require_connected: a.require_connected,
    };
    let render = |k: usize| -> Result<String> {
        let inst = generate_instance(&params, child_seed(a.seed, k as u64))?;
        Ok(GameFile::from_game(&inst.game, Some(&inst.x0)).to_json())
    };
    match &a.out {
        None if a.count == 1 => println!("{}", render(0)?),
        None => bail!("--out is required with --count > 1"),
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for k in 0..a.count {
                let path = dir.join(format!("game_{k:04}.json"));
                fs::write(&path, render(k)? + "\n").with_context(|| format!("writing {}", path.display()))?;
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulationJson {
    converged: bool,
    activations: u64,
    switches: usize,
    final_state: Vec<Strategy>,
    /// Agent ids are 1-based.
    events: Vec<SwitchEvent>,
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let (game, x) = load_game(&a.input.game)?;
    let game = match (&a.rewards, a.uniform) {
        (Some(r), _) => game.apply_rewards(&RewardVector::new(r.clone())?)?,
        (None, Some(r0)) => game.apply_uniform_reward(r0)?,
        (None, None) => game,
    };
    let seq = if a.round_robin {
        ActivationSequence::RoundRobin
    } else {
        ActivationSequence::RandomUniform(a.seed)
    };
    let n = game.n() as u64;
    let max = a.max_activations.unwrap_or(1_000 * n * n + 10_000);
    let t = simulate(&Imitation::new(), &game, &x, &seq, max)?;
    print_json(&SimulationJson {
        converged: t.converged,
        activations: t.activations,
        switches: t.events.len(),
        final_state: t.final_state.as_slice().to_vec(),
        events: t
            .events
            .iter()
            .map(|e| SwitchEvent { agent: e.agent + 1, ..*e })
            .collect(),
    })
}

#[derive(Serialize)]
struct UniformJson {
    r0_star: f64,
    candidates: usize,
    simulations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    relaxed_state: Option<Vec<Strategy>>,
}

fn uniform(a: UniformArgs) -> Result<()> {
    let (game, mut x) = load_game(&a.input.game)?;
    let relaxed = if a.pre_relax {
        x = pre_relax(&game, &x, a.seed)?;
        Some(x.as_slice().to_vec())
    } else {
        None
    };
    let s = solve_uniform(&game, &x)?;
    print_json(&UniformJson {
        r0_star: s.r0_star,
        candidates: s.candidates,
        simulations: s.simulations,
        relaxed_state: relaxed,
    })
}

fn target(a: TargetArgs) -> Result<()> {
    let (game, mut x) = load_game(&a.input.game)?;
    if a.pre_relax {
        x = pre_relax(&game, &x, a.seed)?;
    }
    let policy = match a.policy {
        PolicyArg::Rand => TargetingPolicy::Rand(a.seed),
        PolicyArg::Deg => TargetingPolicy::Deg,
        PolicyArg::Ime => TargetingPolicy::Ime,
        PolicyArg::Ipo => TargetingPolicy::Ipo,
        PolicyArg::Iro => TargetingPolicy::Iro,
        PolicyArg::Ipro => TargetingPolicy::Ipro {
            alpha: a.alpha,
            beta: a.beta,
        },
        PolicyArg::Opt => {
            if a.budget.is_some() {
                bail!("--budget is not supported with --policy opt");
            }
            let deadline = a.timeout.map(|s| Instant::now() + Duration::from_secs_f64(s));
            let o = exhaustive_optimal_until(&game, &x, a.epsilon, deadline)?;
            return print_json(&ControlOutcomeJson::new("opt", &o));
        }
    };
    let o = match a.budget {
        Some(rho) => budgeted_control(&game, &x, &policy, rho, a.epsilon)?,
        None => targeted_control(&game, &x, &policy, a.epsilon)?,
    };
    print_json(&ControlOutcomeJson::new(policy.label(), &o))
}

fn verify_cmd(a: VerifyArgs) -> Result<()> {
    let suite = match a.suite {
        SuiteArg::Acoord => Suite::ACoord,
        SuiteArg::Monotone => Suite::Monotone,
        SuiteArg::Unique => Suite::Unique,
        SuiteArg::Candidates => Suite::Candidates,
        SuiteArg::All => Suite::All,
    };
    let mut config = SuiteConfig::new(a.instances, a.seed);
    config.sequences = a.sequences;
    let mut reports = experiments::with_pool(|| verify::run_suite(suite, &config))??;
    if let (Some(max_n), Suite::ACoord | Suite::All) = (a.small_graphs, suite) {
        reports.push(experiments::with_pool(|| verify::check_small_games_exhaustive(max_n, 20, a.seed))??);
    }
    print_json(&reports)?;
    if reports.iter().any(|r| !r.passed) {
        io::stdout().flush()?;
        std::process::exit(1);
    }
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let mut config = match (&a.config, a.id) {
        (Some(path), id) => {
            let c = ExperimentConfig::from_json(&read_text(path)?)?;
            if id.is_some_and(|id| id != c.experiment) {
                bail!("--id disagrees with the experiment named in {}", path.display());
            }
            c
        }
        (None, Some(id)) => ExperimentConfig::preset(id),
        (None, None) => bail!("give --id or --config"),
    };
    if let Some(k) = a.instances {
        config.instances = k;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(n) = a.n {
        config.n_values = n;
    }
    if let Some(e) = a.epsilon {
        config.epsilon = e;
    }
    if let Some(t) = a.timeout {
        config.timeout_secs = t;
    }
    config.timing |= a.timing;
    config.require_connected |= a.require_connected;

    let out = experiments::run_experiment(&config)?;
    match &a.out {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            experiments::write_rows(&out.rows, io::BufWriter::new(file))?;
        }
        None => experiments::write_rows(&out.rows, io::stdout().lock())?,
    }
    let meta = a.meta.clone().or_else(|| {
        a.out.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".meta.json");
            PathBuf::from(s)
        })
    });
    if let Some(path) = meta {
        let text = serde_json::to_string_pretty(&out)? + "\n";
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn summarize(a: SummarizeArgs) -> Result<()> {
    let mut rows = Vec::new();
    for path in &a.inputs {
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        rows.extend(experiments::read_rows(file).with_context(|| format!("reading {}", path.display()))?);
    }
    let summary = experiments::summarize(&rows)?;
    if let Some(path) = &a.csv {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        experiments::write_summary(&summary, file)?;
    }
    match a.format {
        SummaryFormat::Text => print!("{}", experiments::render_summary_text(&summary)),
        SummaryFormat::Csv => experiments::write_summary(&summary, io::stdout().lock())?,
    }
    Ok(())
}
