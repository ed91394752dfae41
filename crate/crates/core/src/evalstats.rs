//! Matchup runner, score summaries, paired t-tests and result tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Faction, GameState};
use crate::nn::{load_model, Architecture, NetError, QNetwork};
use crate::play::{
    game_rng, play_game, Controller, GameObserver, GreedyManager, GreedyUnit, HybridController,
    IndividualController, ManagerDecision, NoObserver, PlayError, ScriptedController, UNIT_ACTIONS,
};
use crate::scenario::{ScenarioConfig, ScenarioCycle, ScenarioError, ScenarioSeed};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("paired samples differ in length ({0} vs {1})")]
    Length(usize, usize),
    #[error("differences have zero variance; t is undefined")]
    Degenerate,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("model {path}: {source}")]
    Load { path: PathBuf, source: NetError },
    #[error("model {path} has architecture {found:?}, expected {expected}")]
    Architecture {
        path: PathBuf,
        found: Box<Architecture>,
        expected: String,
    },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Play(#[from] PlayError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("n_games must be at least 1")]
    NoGames,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Agent as named in configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentSpec {
    Scripted,
    Hybrid { model: PathBuf },
    Individual { model: PathBuf },
}

impl AgentSpec {
    pub fn label(&self) -> &'static str {
        match self {
            AgentSpec::Scripted => "scripted",
            AgentSpec::Hybrid { .. } => "hybrid",
            AgentSpec::Individual { .. } => "individual",
        }
    }
}

/// Agent with its network loaded.
#[derive(Debug, Clone)]
pub enum Agent {
    Scripted,
    Hybrid(Arc<QNetwork<f32>>),
    Individual(Arc<QNetwork<f32>>),
}

impl Agent {
    pub fn load(spec: &AgentSpec, scenario: &ScenarioConfig) -> Result<Self, EvalError> {
        let read = |path: &Path| {
            load_model(path).map_err(|source| EvalError::Load {
                path: path.to_path_buf(),
                source,
            })
        };
        let check = |path: &Path, net: &QNetwork<f32>, ok: bool, expected: &str| {
            if ok {
                Ok(())
            } else {
                Err(EvalError::Architecture {
                    path: path.to_path_buf(),
                    found: Box::new(net.arch),
                    expected: expected.to_string(),
                })
            }
        };
        match spec {
            AgentSpec::Scripted => Ok(Agent::Scripted),
            AgentSpec::Hybrid { model } => {
                let net = read(model)?;
                let m = Architecture::manager();
                let ok = (net.arch.in_channels, net.arch.height, net.arch.width, net.arch.actions)
                    == (m.in_channels, m.height, m.width, m.actions);
                check(model, &net, ok, "17x7x7 input with 49 actions")?;
                Ok(Agent::Hybrid(Arc::new(net)))
            }
            AgentSpec::Individual { model } => {
                let net = read(model)?;
                let i = Architecture::individual(scenario.dims, UNIT_ACTIONS);
                let ok = (net.arch.in_channels, net.arch.height, net.arch.width, net.arch.actions)
                    == (i.in_channels, i.height, i.width, i.actions);
                check(model, &net, ok, &format!("18x{}x{} input with 13 actions", i.height, i.width))?;
                Ok(Agent::Individual(Arc::new(net)))
            }
        }
    }

    pub fn controller(&self, faction: Faction) -> Box<dyn Controller> {
        match self {
            Agent::Scripted => Box::new(ScriptedController { faction }),
            Agent::Hybrid(net) => Box::new(HybridController::new(faction, GreedyManager { net: net.clone() })),
            Agent::Individual(net) => Box::new(IndividualController {
                faction,
                policy: GreedyUnit { net: net.clone() },
            }),
        }
    }
}

/// Blue vs Red over a fixed scenario cycle.
#[derive(Debug, Clone)]
pub struct Matchup {
    pub blue: Agent,
    pub red: Agent,
    pub cycle: Arc<ScenarioCycle>,
    /// Seeds the per-game random streams.
    pub seed: u64,
    pub n_games: usize,
}

impl Matchup {
    pub fn new(blue: Agent, red: Agent, scenario: &ScenarioConfig, seed: u64, cycle_len: usize, n_games: usize) -> Result<Self, EvalError> {
        if n_games == 0 {
            return Err(EvalError::NoGames);
        }
        Ok(Self {
            blue,
            red,
            cycle: Arc::new(ScenarioCycle::new(scenario, ScenarioSeed(seed), cycle_len)?),
            seed,
            n_games,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameResult {
    pub game_index: usize,
    pub scenario_index: usize,
    pub blue_score: i64,
}

/// Plays game `game_index` (scenario `game_index mod cycle length`).
pub fn run_match_observed(m: &Matchup, game_index: usize, obs: &mut dyn GameObserver) -> Result<(GameState, GameResult), EvalError> {
    let state = m.cycle.reset(game_index);
    let mut rng = game_rng(m.seed, game_index as u64);
    let mut blue = m.blue.controller(Faction::Blue);
    let mut red = m.red.controller(Faction::Red);
    let end = play_game(state, blue.as_mut(), red.as_mut(), &mut rng, obs)?;
    let result = GameResult {
        game_index,
        scenario_index: m.cycle.index_for(game_index),
        blue_score: end.score.total(),
    };
    Ok((end, result))
}

pub fn run_match(m: &Matchup, game_index: usize) -> Result<GameResult, EvalError> {
    Ok(run_match_observed(m, game_index, &mut NoObserver)?.1)
}

/// Sums manager rewards as they are reported.
#[derive(Debug, Default)]
pub struct RewardTally {
    pub blue: f64,
    pub red: f64,
}

impl GameObserver for RewardTally {
    fn decisions(&mut self, _: &GameState, faction: Faction, d: &[ManagerDecision]) {
        let sum: f64 = d.iter().filter_map(|d| d.reward).sum();
        match faction {
            Faction::Blue => self.blue += sum,
            Faction::Red => self.red += sum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl FiveNumber {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let mut s = xs.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Self {
            min: s[0],
            q1: quantile(&s, 0.25),
            median: quantile(&s, 0.5),
            q3: quantile(&s, 0.75),
            max: s[s.len() - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub mean: f64,
    /// Sample standard deviation over √n; undefined for a single game.
    pub sem: Option<f64>,
    pub n: usize,
    pub five: FiveNumber,
}

impl ScoreStats {
    pub fn of(xs: &[f64]) -> Result<Self, StatsError> {
        let five = FiveNumber::of(xs).ok_or(StatsError::TooFew { need: 1, got: 0 })?;
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sem = (n >= 2).then(|| sample_std(xs, mean) / (n as f64).sqrt());
        Ok(Self { mean, sem, n, five })
    }
}

fn sample_std(xs: &[f64], mean: f64) -> f64 {
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub games: Vec<GameResult>,
    pub stats: ScoreStats,
}

impl Evaluation {
    pub fn scores(&self) -> Vec<f64> {
        self.games.iter().map(|g| g.blue_score as f64).collect()
    }
}

/// Plays all games of the matchup on up to `workers` threads. Results are
/// in game order whatever the worker count.
pub fn evaluate(m: &Matchup, workers: usize) -> Result<Evaluation, EvalError> {
    let run = || -> Result<Vec<GameResult>, EvalError> {
        (0..m.n_games).into_par_iter().map(|i| run_match(m, i)).collect()
    };
    let games = if workers <= 1 {
        (0..m.n_games).map(|i| run_match(m, i)).collect::<Result<Vec<_>, _>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool")
            .install(run)?
    };
    let scores: Vec<f64> = games.iter().map(|g| g.blue_score as f64).collect();
    let stats = ScoreStats::of(&scores)?;
    Ok(Evaluation { games, stats })
}

pub fn write_games_csv(games: &[GameResult], path: &Path) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    for g in games {
        w.serialize(g)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub significant: bool,
}

/// Two-sided paired-sample t-test on `xs − ys`.
pub fn paired_t_test(xs: &[f64], ys: &[f64], alpha: f64) -> Result<TTest, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::Length(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(StatsError::TooFew { need: 2, got: n });
    }
    let d: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let sd = sample_std(&d, mean);
    if sd == 0.0 || !sd.is_finite() {
        return Err(StatsError::Degenerate);
    }
    let t = mean / (sd / (n as f64).sqrt());
    let df = n - 1;
    let p = student_t_two_sided(t, df as f64);
    Ok(TTest {
        t,
        p,
        df,
        significant: p < alpha,
    })
}

/// `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    reg_inc_beta(df / 2.0, 0.5, df / (df + t * t))
}

/// Lanczos approximation (g = 7, 9 terms), good to ~1e-15 relative.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta `I_x(a, b)`. Uses the continued fraction on
/// whichever of `x` and `1 − x` lies below the mean `(a+1)/(a+b+2)`, where
/// it converges fastest, and the symmetry `I_x(a,b) = 1 − I_{1−x}(b,a)`
/// otherwise.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Column order of the results table.
pub const TABLE_COLUMNS: [&str; 3] = ["Scripted", "RL Individual", "Hybrid"];

/// One seed's row: stats for Scripted, RL Individual and Hybrid (any may be absent).
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub seed: u64,
    pub cells: [Option<ScoreStats>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<TableRow>,
    /// Mean of the per-seed means in each column.
    pub overall: [Option<f64>; 3],
}

pub fn results_table(rows: Vec<TableRow>) -> ResultsTable {
    let mut overall = [None; 3];
    for (k, o) in overall.iter_mut().enumerate() {
        let means: Vec<f64> = rows.iter().filter_map(|r| r.cells[k].map(|s| s.mean)).collect();
        if !means.is_empty() {
            *o = Some(means.iter().sum::<f64>() / means.len() as f64);
        }
    }
    ResultsTable { rows, overall }
}

fn cell_text(s: &Option<ScoreStats>) -> String {
    match s {
        Some(s) => match s.sem {
            Some(sem) => format!("{:.3} ± {:.3}", s.mean, sem),
            None => format!("{:.3} ± n/a", s.mean),
        },
        None => "-".into(),
    }
}

impl ResultsTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,column,mean,sem,n\n");
        for r in &self.rows {
            for (k, c) in r.cells.iter().enumerate() {
                if let Some(s) = c {
                    let sem = s.sem.map(|v| v.to_string()).unwrap_or_default();
                    writeln!(out, "{},{},{},{},{}", r.seed, TABLE_COLUMNS[k], s.mean, sem, s.n).unwrap();
                }
            }
        }
        for (k, o) in self.overall.iter().enumerate() {
            if let Some(m) = o {
                writeln!(out, "overall,{},{},,", TABLE_COLUMNS[k], m).unwrap();
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut grid: Vec<[String; 4]> = vec![[
            "Seed".into(),
            TABLE_COLUMNS[0].into(),
            TABLE_COLUMNS[1].into(),
            TABLE_COLUMNS[2].into(),
        ]];
        for r in &self.rows {
            grid.push([
                r.seed.to_string(),
                cell_text(&r.cells[0]),
                cell_text(&r.cells[1]),
                cell_text(&r.cells[2]),
            ]);
        }
        let o = |v: &Option<f64>| v.map_or("-".to_string(), |m| format!("{m:.3}"));
        grid.push(["Overall Mean".into(), o(&self.overall[0]), o(&self.overall[1]), o(&self.overall[2])]);
        let widths: Vec<usize> = (0..4)
            .map(|k| grid.iter().map(|r| r[k].chars().count()).max().unwrap())
            .collect();
        let mut out = String::new();
        for r in &grid {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}", w = *w))
                .collect();
            writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
        }
        out
    }

    /// Five-number summaries for box plots, one row per (seed, column).
    pub fn boxplot_csv(&self) -> String {
        let mut out = String::from("seed,column,min,q1,median,q3,max\n");
        for r in &self.rows {
            for (k, c) in r.cells.iter().enumerate() {
                if let Some(s) = c {
                    let f = s.five;
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        r.seed, TABLE_COLUMNS[k], f.min, f.q1, f.median, f.q3, f.max
                    )
                    .unwrap();
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn stats(xs: &[f64]) -> ScoreStats {
        ScoreStats::of(xs).unwrap()
    }

    #[test]
    fn sem_examples() {
        let s = stats(&[5.0, 5.0, 5.0]);
        assert_eq!((s.mean, s.sem), (5.0, Some(0.0)));
        let s = stats(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.sem.unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(stats(&[4.0]).sem, None);
    }

    #[test]
    fn five_number_summary() {
        let f = FiveNumber::of(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!((f.min, f.q1, f.median, f.q3, f.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        let f = FiveNumber::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((f.q1, f.median, f.q3), (1.75, 2.5, 3.25));
    }

    #[test]
    fn textbook_t_test() {
        let r = paired_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5], 0.05).unwrap();
        assert!((r.t - 4.242640687).abs() < 1e-8);
        assert!((r.p - 0.013236).abs() < 1e-5, "{}", r.p);
        assert!(r.significant);
        assert_eq!(r.df, 4);
    }

    #[test]
    fn degenerate_and_symmetric() {
        let x = [1.0, 2.0, 3.0];
        assert!(matches!(paired_t_test(&x, &x, 0.05), Err(StatsError::Degenerate)));
        assert!(matches!(paired_t_test(&x, &x[..2], 0.05), Err(StatsError::Length(3, 2))));
        let y = [0.5, 2.5, 1.0];
        let a = paired_t_test(&x, &y, 0.05).unwrap();
        let b = paired_t_test(&y, &x, 0.05).unwrap();
        assert_eq!(a.t, -b.t);
        assert!((a.p - b.p).abs() < 1e-15);
    }

    #[test]
    fn known_t_quantiles() {
        // t_{0.975, df} critical values
        for (df, t) in [(1.0, 12.706_204_736), (5.0, 2.570_581_836), (30.0, 2.042_272_456)] {
            assert!((student_t_two_sided(t, df) - 0.05).abs() < 1e-8);
        }
        assert!((student_t_two_sided(0.0, 7.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ln_gamma_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn overall_row_is_mean_of_seed_means() {
        let rows: Vec<TableRow> = [692.1, 671.1, 580.4, 13.3, 493.1]
            .iter()
            .enumerate()
            .map(|(k, m)| TableRow {
                seed: k as u64 + 1,
                cells: [None, None, Some(stats(&[*m]))],
            })
            .collect();
        let t = results_table(rows);
        let overall = t.overall[2].unwrap();
        assert!((overall - 489.998).abs() <= 0.4);
        assert!((overall - 490.0).abs() < 1e-9);
        assert!(t.to_text().contains("490.000"));
    }

    #[test]
    fn single_cell_table() {
        let s = stats(&[1.0, 2.0, 3.0]);
        let t = results_table(vec![TableRow {
            seed: 1,
            cells: [Some(s), None, None],
        }]);
        assert_eq!(t.overall[0], Some(2.0));
        assert_eq!(t.rows[0].cells[0], Some(s));
        let csv = t.to_csv();
        assert!(csv.lines().nth(1).unwrap().starts_with("1,Scripted,2,"));
        let bp = t.boxplot_csv();
        assert_eq!(bp.lines().nth(1).unwrap(), "1,Scripted,1,1.5,2,2.5,3");
    }

    #[test]
    fn sem_shrinks_with_sample_size() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pool: Vec<f64> = (0..50_000).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let s1 = stats(&pool[..400]).sem.unwrap();
        let s2 = stats(&pool[..1600]).sem.unwrap();
        assert!((s1 / s2 - 2.0).abs() < 0.2, "{}", s1 / s2);
    }

    #[test]
    fn scripted_matchup_is_reproducible() {
        let cfg = ScenarioConfig::default();
        let m = Matchup::new(Agent::Scripted, Agent::Scripted, &cfg, 1, 10, 12).unwrap();
        let a = evaluate(&m, 1).unwrap();
        let b = evaluate(&m, 3).unwrap();
        assert_eq!(a.games, b.games);
        assert_eq!(a.games.len(), 12);
        assert_eq!(a.games[11].scenario_index, 1);
        assert_eq!(run_match(&m, 5).unwrap(), a.games[5]);
    }
}
