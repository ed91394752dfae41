//! Resolved run configurations and the code that executes them. Each run
//! writes its outputs into one directory and reports the files it wrote.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tacsim_core::dqn::individual::train_individual;
use tacsim_core::dqn::manager::{train_manager, TraceRow, TrainConfig};
use tacsim_core::evalstats::{
    evaluate, paired_t_test, results_table, run_match_observed, write_games_csv, Agent, AgentSpec, Matchup,
    ScoreStats, TableRow,
};
use tacsim_core::nn::save_model;
use tacsim_core::replay::{read_replay, verify, write_replay, Recorder, Record, VerifyReport, REPLAY_VERSION};
use tacsim_core::scenario::{describe, generate, ScenarioConfig, ScenarioCycle, ScenarioSeed};

use crate::error::CliError;
use crate::manifest::{write_atomic, RunManifest};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioRun {
    pub seed: Option<u64>,
    pub scenario: ScenarioConfig,
}

pub fn run_scenario(cfg: &ScenarioRun, out: &Path) -> Result<Vec<String>, CliError> {
    let seed = cfg.seed.ok_or_else(|| CliError::Usage("--seed is required".into()))?;
    let state = generate(&cfg.scenario, ScenarioSeed(seed))?;
    let json = serde_json::to_string_pretty(&state).map_err(CliError::other)?;
    write_atomic(&out.join("scenario.json"), json.as_bytes())?;
    write_atomic(&out.join("scenario.txt"), describe(&state).as_bytes())?;
    Ok(vec!["scenario.json".into(), "scenario.txt".into()])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainAgent {
    #[default]
    Manager,
    Individual,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRun {
    pub agent: TrainAgent,
    #[serde(flatten)]
    pub train: TrainConfig,
}

fn trace_csv(rows: &[TraceRow]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(["step", "mean_reward", "mean_score"]).map_err(CliError::other)?;
    }
    for r in rows {
        w.serialize(r).map_err(CliError::other)?;
    }
    w.into_inner().map_err(CliError::other)
}

/// Trains one model. A checkpoint and the trace so far are written at every
/// evaluation, so an interrupted run still leaves both behind.
pub fn run_train(cfg: &TrainRun, out: &Path) -> Result<Vec<String>, CliError> {
    let hyper = toml::to_string(cfg).map_err(CliError::other)?;
    write_atomic(&out.join("hyperparams.toml"), hyper.as_bytes())?;
    write_atomic(&out.join("trace.csv"), &trace_csv(&[])?)?;
    let mut trace = Vec::new();
    let mut on_eval = |row: &TraceRow, net: &tacsim_core::nn::QNetwork<f32>| {
        trace.push(row.clone());
        save_model(net, &out.join("checkpoint.bin")).map_err(|e| tacsim_core::dqn::DqnError::Config(e.to_string()))?;
        let bytes = trace_csv(&trace).map_err(|e| tacsim_core::dqn::DqnError::Config(e.to_string()))?;
        std::fs::write(out.join("trace.csv"), bytes).map_err(|e| tacsim_core::dqn::DqnError::Config(e.to_string()))?;
        Ok(())
    };
    let outcome = match cfg.agent {
        TrainAgent::Manager => train_manager(&cfg.train, &mut on_eval)?,
        TrainAgent::Individual => train_individual(&cfg.train, &mut on_eval)?,
    };
    save_model(&outcome.model, &out.join("model.bin")).map_err(CliError::other)?;
    write_atomic(&out.join("trace.csv"), &trace_csv(&outcome.trace)?)?;
    let mut files = vec!["hyperparams.toml".into(), "model.bin".into(), "trace.csv".into()];
    if !outcome.trace.is_empty() {
        files.push("checkpoint.bin".into());
    }
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Scripted,
    Hybrid,
    Individual,
}

impl AgentKind {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "scripted" => Ok(AgentKind::Scripted),
            "hybrid" => Ok(AgentKind::Hybrid),
            "individual" => Ok(AgentKind::Individual),
            _ => Err(CliError::Usage(format!(
                "unknown agent '{s}' (expected scripted, hybrid or individual)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Scripted => "scripted",
            AgentKind::Hybrid => "hybrid",
            AgentKind::Individual => "individual",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatchupSpec {
    pub blue: AgentKind,
    pub red: AgentKind,
}

impl MatchupSpec {
    /// `blue:red`, e.g. `hybrid:scripted`.
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let (b, r) = s
            .split_once(':')
            .ok_or_else(|| CliError::Usage(format!("matchup '{s}' must look like blue:red")))?;
        Ok(Self {
            blue: AgentKind::parse(b)?,
            red: AgentKind::parse(r)?,
        })
    }

    pub fn label(&self) -> String {
        format!("{}-vs-{}", self.blue.name(), self.red.name())
    }

    /// The three evaluations behind the results table.
    pub fn standard() -> Vec<Self> {
        [AgentKind::Scripted, AgentKind::Individual, AgentKind::Hybrid]
            .into_iter()
            .map(|blue| Self {
                blue,
                red: AgentKind::Scripted,
            })
            .collect()
    }
}

/// Model locations; `{seed}` is replaced by the evaluation seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelPaths {
    pub hybrid_model: Option<String>,
    pub individual_model: Option<String>,
}

impl ModelPaths {
    pub fn spec(&self, kind: AgentKind, seed: u64) -> Result<AgentSpec, CliError> {
        let resolve = |t: &Option<String>, flag: &str| {
            t.as_ref()
                .map(|t| t.replace("{seed}", &seed.to_string()).into())
                .ok_or_else(|| CliError::Usage(format!("{} agent needs {flag}", kind.name())))
        };
        Ok(match kind {
            AgentKind::Scripted => AgentSpec::Scripted,
            AgentKind::Hybrid => AgentSpec::Hybrid {
                model: resolve(&self.hybrid_model, "--hybrid-model")?,
            },
            AgentKind::Individual => AgentSpec::Individual {
                model: resolve(&self.individual_model, "--individual-model")?,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalRun {
    pub scenario: ScenarioConfig,
    pub seeds: Vec<u64>,
    pub games: usize,
    pub cycle_len: usize,
    pub matchups: Vec<MatchupSpec>,
    #[serde(flatten)]
    pub models: ModelPaths,
    pub alpha: f64,
    /// Parallel game workers; does not affect any output.
    pub workers: usize,
}

impl Default for EvalRun {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            seeds: vec![1],
            games: 1000,
            cycle_len: 10,
            matchups: vec![MatchupSpec {
                blue: AgentKind::Scripted,
                red: AgentKind::Scripted,
            }],
            models: ModelPaths::default(),
            alpha: 0.05,
            workers: 1,
        }
    }
}

fn table_column(m: &MatchupSpec) -> Option<usize> {
    if m.red != AgentKind::Scripted {
        return None;
    }
    Some(match m.blue {
        AgentKind::Scripted => 0,
        AgentKind::Individual => 1,
        AgentKind::Hybrid => 2,
    })
}

pub fn run_eval(cfg: &EvalRun, out: &Path) -> Result<Vec<String>, CliError> {
    if cfg.seeds.is_empty() || cfg.matchups.is_empty() {
        return Err(CliError::Usage("need at least one seed and one matchup".into()));
    }
    let mut files = Vec::new();
    let mut summary = String::from("matchup,seed,mean,sem,n\n");
    let mut scores: BTreeMap<(u64, MatchupSpec), Vec<f64>> = BTreeMap::new();
    let mut stats: BTreeMap<(u64, MatchupSpec), ScoreStats> = BTreeMap::new();
    // load every model before playing anything
    let mut agents = BTreeMap::new();
    for &seed in &cfg.seeds {
        for m in &cfg.matchups {
            for kind in [m.blue, m.red] {
                if let std::collections::btree_map::Entry::Vacant(e) = agents.entry((seed, kind)) {
                    e.insert(Agent::load(&cfg.models.spec(kind, seed)?, &cfg.scenario)?);
                }
            }
        }
    }
    for &seed in &cfg.seeds {
        for m in &cfg.matchups {
            let matchup = Matchup::new(
                agents[&(seed, m.blue)].clone(),
                agents[&(seed, m.red)].clone(),
                &cfg.scenario,
                seed,
                cfg.cycle_len,
                cfg.games,
            )?;
            let result = evaluate(&matchup, cfg.workers)?;
            let name = format!("games_{}_seed{seed}.csv", m.label());
            write_games_csv(&result.games, &out.join(&name))?;
            files.push(name);
            let s = result.stats;
            let sem = s.sem.map(|v| v.to_string()).unwrap_or_default();
            writeln!(summary, "{},{seed},{},{sem},{}", m.label(), s.mean, s.n).unwrap();
            scores.insert((seed, *m), result.scores());
            stats.insert((seed, *m), s);
        }
    }
    write_atomic(&out.join("summary.csv"), summary.as_bytes())?;
    files.push("summary.csv".into());

    let table_rows: Vec<TableRow> = cfg
        .seeds
        .iter()
        .map(|&seed| {
            let mut cells = [None; 3];
            for m in &cfg.matchups {
                if let Some(k) = table_column(m) {
                    cells[k] = stats.get(&(seed, *m)).copied();
                }
            }
            TableRow { seed, cells }
        })
        .filter(|r| r.cells.iter().any(Option::is_some))
        .collect();
    if !table_rows.is_empty() {
        let table = results_table(table_rows);
        write_atomic(&out.join("table.csv"), table.to_csv().as_bytes())?;
        write_atomic(&out.join("table.txt"), table.to_text().as_bytes())?;
        write_atomic(&out.join("boxplot.csv"), table.boxplot_csv().as_bytes())?;
        files.extend(["table.csv".into(), "table.txt".into(), "boxplot.csv".into()]);
    }

    let vs_scripted = |blue| MatchupSpec {
        blue,
        red: AgentKind::Scripted,
    };
    let pairs = [
        (AgentKind::Hybrid, AgentKind::Scripted),
        (AgentKind::Individual, AgentKind::Scripted),
        (AgentKind::Hybrid, AgentKind::Individual),
    ];
    let mut ttests = String::from("pair,seed,t,p,significant\n");
    let mut any = false;
    for &seed in &cfg.seeds {
        for (a, b) in pairs {
            let (Some(xs), Some(ys)) = (scores.get(&(seed, vs_scripted(a))), scores.get(&(seed, vs_scripted(b)))) else {
                continue;
            };
            any = true;
            let pair = format!("{}|{}", a.name(), b.name());
            match paired_t_test(xs, ys, cfg.alpha) {
                Ok(t) => writeln!(ttests, "{pair},{seed},{},{},{}", t.t, t.p, t.significant).unwrap(),
                Err(e) => writeln!(ttests, "{pair},{seed},,,{e}").unwrap(),
            }
        }
    }
    if any {
        write_atomic(&out.join("ttests.csv"), ttests.as_bytes())?;
        files.push("ttests.csv".into());
    }
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayRun {
    pub scenario: ScenarioConfig,
    pub seed: u64,
    pub cycle_len: usize,
    pub game: usize,
    pub matchup: MatchupSpec,
    #[serde(flatten)]
    pub models: ModelPaths,
}

impl Default for ReplayRun {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            seed: 1,
            cycle_len: 10,
            game: 0,
            matchup: MatchupSpec {
                blue: AgentKind::Scripted,
                red: AgentKind::Scripted,
            },
            models: ModelPaths::default(),
        }
    }
}

pub const REPLAY_FILE: &str = "replay.jsonl";

/// Plays one evaluation game and exports it.
pub fn run_replay(cfg: &ReplayRun, out: &Path) -> Result<Vec<String>, CliError> {
    let blue = Agent::load(&cfg.models.spec(cfg.matchup.blue, cfg.seed)?, &cfg.scenario)?;
    let red = Agent::load(&cfg.models.spec(cfg.matchup.red, cfg.seed)?, &cfg.scenario)?;
    let cycle = ScenarioCycle::new(&cfg.scenario, ScenarioSeed(cfg.seed), cfg.cycle_len)?;
    let header = Record::Header {
        version: REPLAY_VERSION,
        blue: cfg.matchup.blue.name().into(),
        red: cfg.matchup.red.name().into(),
        scenario_seed: cycle.seed_for(cfg.game).0,
        game_seed: cfg.seed,
        game_index: cfg.game as u64,
        initial: Box::new(cycle.reset(cfg.game)),
    };
    let matchup = Matchup {
        blue,
        red,
        cycle: Arc::new(cycle),
        seed: cfg.seed,
        n_games: 1,
    };
    let mut rec = Recorder::new(header);
    let (end, _) = run_match_observed(&matchup, cfg.game, &mut rec)?;
    rec.finish(&end);
    let mut buf = Vec::new();
    write_replay(&rec.records, &mut buf).map_err(CliError::other)?;
    write_atomic(&out.join(REPLAY_FILE), &buf)?;
    Ok(vec![REPLAY_FILE.into()])
}

pub fn verify_replay(path: &Path) -> Result<VerifyReport, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::Load(format!("{}: {e}", path.display())))?;
    let records = read_replay(BufReader::new(f)).map_err(|e| CliError::Load(e.to_string()))?;
    verify(&records).map_err(|e| CliError::Verification(e.to_string()))
}

/// A resolved run of any command.
#[derive(Debug, Clone, PartialEq)]
pub enum Run {
    Scenario(ScenarioRun),
    Train(TrainRun),
    Eval(EvalRun),
    Replay(ReplayRun),
}

impl Run {
    pub fn command(&self) -> &'static str {
        match self {
            Run::Scenario(_) => "scenario",
            Run::Train(_) => "train",
            Run::Eval(_) => "eval",
            Run::Replay(_) => "replay",
        }
    }

    pub fn config_json(&self) -> serde_json::Value {
        match self {
            Run::Scenario(c) => serde_json::to_value(c),
            Run::Train(c) => serde_json::to_value(c),
            Run::Eval(c) => serde_json::to_value(c),
            Run::Replay(c) => serde_json::to_value(c),
        }
        .expect("config serializes")
    }

    pub fn from_manifest(m: &RunManifest) -> Result<Self, CliError> {
        let bad = |e: serde_json::Error| CliError::Load(format!("manifest config: {e}"));
        let c = m.config.clone();
        Ok(match m.command.as_str() {
            "scenario" => Run::Scenario(serde_json::from_value(c).map_err(bad)?),
            "train" => Run::Train(serde_json::from_value(c).map_err(bad)?),
            "eval" => Run::Eval(serde_json::from_value(c).map_err(bad)?),
            "replay" => Run::Replay(serde_json::from_value(c).map_err(bad)?),
            other => return Err(CliError::Load(format!("manifest names unknown command '{other}'"))),
        })
    }

    pub fn seeds(&self) -> Vec<u64> {
        match self {
            Run::Scenario(c) => c.seed.into_iter().collect(),
            Run::Train(c) => vec![c.train.seed],
            Run::Eval(c) => c.seeds.clone(),
            Run::Replay(c) => vec![c.seed],
        }
    }

    /// Executes into `out`, keeping the manifest there up to date.
    pub fn execute(&self, out: &Path) -> Result<RunManifest, CliError> {
        std::fs::create_dir_all(out).map_err(|e| CliError::Other(format!("{}: {e}", out.display())))?;
        let mut manifest = RunManifest::new(self.command(), self.config_json(), self.seeds());
        manifest.write(out)?;
        let started = std::time::Instant::now();
        let artifacts = match self {
            Run::Scenario(c) => run_scenario(c, out)?,
            Run::Train(c) => run_train(c, out)?,
            Run::Eval(c) => run_eval(c, out)?,
            Run::Replay(c) => run_replay(c, out)?,
        };
        manifest.artifacts = artifacts;
        manifest.duration_secs = started.elapsed().as_secs_f64();
        manifest.status = crate::manifest::RunStatus::Complete;
        manifest.write(out)?;
        Ok(manifest)
    }
}
