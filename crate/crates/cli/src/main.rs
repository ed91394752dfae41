use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tacsim_core::dqn::manager::TrainConfig;
use tacsim_core::evalstats::{paired_t_test, GameResult, ScoreStats};

use tacsim_cli::error::CliError;
use tacsim_cli::manifest::RunManifest;
use tacsim_cli::runs::{self, EvalRun, MatchupSpec, ReplayRun, Run, ScenarioRun, TrainAgent, TrainRun};

#[derive(Parser)]
#[command(name = "tacsim", version, about = "Hex-grid tactical wargame simulator and agent trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one scenario.
    Scenario(ScenarioArgs),
    /// Train a manager (hybrid) or individual-unit policy.
    Train(TrainArgs),
    /// Play matchups and compare agents.
    Eval(EvalArgs),
    /// Export one game as JSON lines, or verify an exported game.
    Replay(ReplayArgs),
    /// Summarize per-game score files.
    Stats(StatsArgs),
    /// Repeat a run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Units per faction; a comma list is sampled per scenario.
    #[arg(long, value_delimiter = ',')]
    units: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    cities: Option<Vec<usize>>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    max_phases: Option<u32>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Defaults to manager, or to the agent named in the config file.
    #[arg(long, value_parser = ["manager", "individual"])]
    agent: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Total agent-step budget.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    cycle: Option<usize>,
    #[arg(long)]
    eval_interval: Option<u64>,
    #[arg(long)]
    eval_games: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// `blue:red`; may be repeated.
    #[arg(long)]
    matchup: Vec<String>,
    /// scripted, individual and hybrid, each against scripted.
    #[arg(long)]
    all: bool,
    /// `1..5` (inclusive) or a comma list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    games: Option<usize>,
    #[arg(long)]
    cycle: Option<usize>,
    /// Model path; `{seed}` is replaced by each evaluation seed.
    #[arg(long)]
    hybrid_model: Option<String>,
    #[arg(long)]
    individual_model: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Verify this replay instead of exporting one.
    #[arg(long, conflicts_with_all = ["matchup", "out"])]
    verify: Option<PathBuf>,
    #[arg(long)]
    matchup: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    game: Option<usize>,
    #[arg(long)]
    cycle: Option<usize>,
    #[arg(long)]
    hybrid_model: Option<String>,
    #[arg(long)]
    individual_model: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Per-game CSV written by `eval`.
    scores: PathBuf,
    /// Second per-game CSV for a paired t-test against the first.
    #[arg(long)]
    against: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct RerunArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Overlays a TOML file on `base`. Keys missing from the file keep their
/// base values.
fn layer<T: Serialize + DeserializeOwned>(base: T, file: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = file else { return Ok(base) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Load(format!("{}: {e}", path.display())))?;
    let over: serde_json::Value =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut value = serde_json::to_value(base).map_err(CliError::other)?;
    merge(&mut value, over);
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("bad seed list '{s}'"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn scenario_run(a: ScenarioArgs) -> Result<Run, CliError> {
    let mut c: ScenarioRun = layer(ScenarioRun::default(), a.config.as_deref())?;
    c.seed = a.seed.or(c.seed);
    if c.seed.is_none() {
        return Err(CliError::Usage("--seed is required".into()));
    }
    let s = &mut c.scenario;
    if let Some(u) = a.units {
        s.units_per_faction_choices = u;
    }
    if let Some(n) = a.cities {
        s.city_count_choices = n;
    }
    if let Some(r) = a.rows {
        s.dims.n_rows = r;
    }
    if let Some(n) = a.cols {
        s.dims.n_cols = n;
    }
    if let Some(p) = a.max_phases {
        s.max_phases = p;
    }
    Ok(Run::Scenario(c))
}

fn train_run(a: TrainArgs) -> Result<Run, CliError> {
    let flag = a.agent.as_deref().map(|s| match s {
        "individual" => TrainAgent::Individual,
        _ => TrainAgent::Manager,
    });
    let agent = flag.unwrap_or_default();
    let train = match agent {
        TrainAgent::Manager => TrainConfig::default(),
        TrainAgent::Individual => TrainConfig::individual(),
    };
    let mut c = layer(TrainRun { agent, train }, a.config.as_deref())?;
    if let Some(f) = flag {
        c.agent = f;
    }
    let t = &mut c.train;
    if let Some(s) = a.seed {
        t.seed = s;
    }
    if let Some(s) = a.steps {
        t.hyper.total_budget = s;
    }
    if let Some(n) = a.cycle {
        t.cycle_len = n;
    }
    if let Some(n) = a.eval_interval {
        t.eval_interval = n;
    }
    if let Some(n) = a.eval_games {
        t.eval_games = n;
    }
    Ok(Run::Train(c))
}

fn eval_run(a: EvalArgs) -> Result<Run, CliError> {
    let mut c = layer(EvalRun::default(), a.config.as_deref())?;
    if a.all && !a.matchup.is_empty() {
        return Err(CliError::Usage("--all and --matchup are exclusive".into()));
    }
    if a.all {
        c.matchups = MatchupSpec::standard();
    } else if !a.matchup.is_empty() {
        c.matchups = a.matchup.iter().map(|m| MatchupSpec::parse(m)).collect::<Result<_, _>>()?;
    }
    if let Some(s) = a.seeds {
        c.seeds = parse_seeds(&s)?;
    }
    if let Some(n) = a.games {
        c.games = n;
    }
    if let Some(n) = a.cycle {
        c.cycle_len = n;
    }
    if a.hybrid_model.is_some() {
        c.models.hybrid_model = a.hybrid_model;
    }
    if a.individual_model.is_some() {
        c.models.individual_model = a.individual_model;
    }
    if let Some(w) = a.workers {
        c.workers = w;
    }
    if let Some(x) = a.alpha {
        c.alpha = x;
    }
    if c.games == 0 {
        return Err(CliError::Usage("--games must be positive".into()));
    }
    if !(c.alpha > 0.0 && c.alpha < 1.0) {
        return Err(CliError::Usage("--alpha must lie in (0, 1)".into()));
    }
    Ok(Run::Eval(c))
}

fn replay_run(a: ReplayArgs) -> Result<(Run, PathBuf), CliError> {
    let mut c = layer(ReplayRun::default(), a.config.as_deref())?;
    if let Some(m) = a.matchup {
        c.matchup = MatchupSpec::parse(&m)?;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if let Some(g) = a.game {
        c.game = g;
    }
    if let Some(n) = a.cycle {
        c.cycle_len = n;
    }
    if a.hybrid_model.is_some() {
        c.models.hybrid_model = a.hybrid_model;
    }
    if a.individual_model.is_some() {
        c.models.individual_model = a.individual_model;
    }
    let out = a.out.ok_or_else(|| CliError::Usage("replay export needs --out".into()))?;
    Ok((Run::Replay(c), out))
}

fn read_games(path: &Path) -> Result<Vec<GameResult>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Load(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<GameResult>, _>>()
        .map_err(|e| CliError::Load(format!("{}: {e}", path.display())))
}

fn stats(a: StatsArgs) -> Result<(), CliError> {
    let xs = read_games(&a.scores)?;
    let scores = |g: &[GameResult]| g.iter().map(|g| g.blue_score as f64).collect::<Vec<_>>();
    let s = ScoreStats::of(&scores(&xs)).map_err(|e| CliError::Usage(e.to_string()))?;
    let sem = s.sem.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!("n={} mean={:.4} sem={sem}", s.n, s.mean);
    let f = s.five;
    println!(
        "min={} q1={} median={} q3={} max={}",
        f.min, f.q1, f.median, f.q3, f.max
    );
    if let Some(other) = a.against {
        let ys = read_games(&other)?;
        if xs.iter().map(|g| g.game_index).ne(ys.iter().map(|g| g.game_index)) {
            return Err(CliError::Usage("score files do not cover the same games".into()));
        }
        let t = paired_t_test(&scores(&xs), &scores(&ys), a.alpha).map_err(|e| CliError::Usage(e.to_string()))?;
        println!("t={:.6} df={} p={:.6} significant={}", t.t, t.df, t.p, t.significant);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (job, out) = match cli.command {
        Command::Scenario(a) => {
            let out = a.out.clone();
            (scenario_run(a)?, out)
        }
        Command::Train(a) => {
            let out = a.out.clone();
            (train_run(a)?, out)
        }
        Command::Eval(a) => {
            let out = a.out.clone();
            (eval_run(a)?, out)
        }
        Command::Replay(a) => {
            if let Some(path) = &a.verify {
                let r = runs::verify_replay(path)?;
                println!(
                    "ok: {} records, {} actions, {} decisions, final score {}",
                    r.records,
                    r.actions,
                    r.decisions,
                    r.final_score.total()
                );
                return Ok(());
            }
            replay_run(a)?
        }
        Command::Stats(a) => return stats(a),
        Command::Rerun(a) => {
            let m = RunManifest::read(&a.manifest)?;
            (Run::from_manifest(&m)?, a.out)
        }
    };
    let m = job.execute(&out)?;
    eprintln!(
        "{} finished in {:.1}s; wrote {} in {}",
        m.command,
        m.duration_secs,
        m.artifacts.join(", "),
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
