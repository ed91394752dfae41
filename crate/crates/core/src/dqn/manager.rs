//! Manager training: one shared network for all Blue managers, one agent
//! step per manager decision, scripted opponent.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{full_mask, DqnError, DqnLearner, Hyperparams, Transition};
use crate::engine::{Faction, GameState};
use crate::evalstats::{run_match_observed, Agent, Matchup, RewardTally};
use crate::hexgrid::NUM_AREA_ACTIONS;
use crate::hybrid::{assign_managers, ManagerState, RewardParams};
use crate::nn::{Architecture, QNetwork};
use crate::observation::ObsTensor;
use crate::play::{game_rng, play_game, GameRng, HybridController, ManagerPolicy, NoObserver, PlayError, ScriptedController};
use crate::scenario::{ScenarioConfig, ScenarioCycle, ScenarioSeed};

/// Tower and head sizes; the defaults are the full-size network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetShape {
    pub hidden: usize,
    pub layers: usize,
    pub features: usize,
}

impl Default for NetShape {
    fn default() -> Self {
        Self {
            hidden: 64,
            layers: 7,
            features: 512,
        }
    }
}

impl NetShape {
    pub fn apply(&self, mut arch: Architecture) -> Architecture {
        arch.hidden = self.hidden;
        arch.layers = self.layers;
        arch.features = self.features;
        arch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub scenario: ScenarioConfig,
    pub seed: u64,
    pub cycle_len: usize,
    pub hyper: Hyperparams,
    pub reward: RewardParams,
    /// Agent steps between evaluations.
    pub eval_interval: u64,
    pub eval_games: usize,
    pub net: NetShape,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            seed: 1,
            cycle_len: 10,
            hyper: Hyperparams::default(),
            reward: RewardParams::default(),
            eval_interval: 10_000,
            eval_games: 10,
            net: NetShape::default(),
        }
    }
}

impl TrainConfig {
    /// Defaults for individual-agent training (evaluation every 100,000 steps).
    pub fn individual() -> Self {
        Self {
            eval_interval: 100_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DqnError> {
        self.hyper.validate()?;
        self.scenario.validate()?;
        if self.cycle_len == 0 || self.eval_interval == 0 || self.eval_games == 0 {
            return Err(DqnError::Config(
                "cycle_len, eval_interval and eval_games must be positive".into(),
            ));
        }
        if self.net.hidden == 0 || self.net.features == 0 {
            return Err(DqnError::Config("network widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub mean_reward: f64,
    pub mean_score: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: QNetwork<f32>,
    pub trace: Vec<TraceRow>,
    pub steps: u64,
    pub episodes: usize,
    pub updates: u64,
}

/// Endpoints of one stored manager transition, for bookkeeping checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionSpan {
    pub manager_id: usize,
    pub start_phase: u32,
    pub end_phase: u32,
    pub done: bool,
}

struct Pending {
    obs: Arc<[f32]>,
    action: usize,
    phase: u32,
}

/// Manager policy that learns while it plays.
pub struct ManagerTrainer {
    pub learner: DqnLearner,
    pub spans: Vec<TransitionSpan>,
    eval_interval: u64,
    pending: HashMap<usize, Pending>,
    due: Vec<(u64, QNetwork<f32>)>,
}

impl ManagerTrainer {
    pub fn new(learner: DqnLearner, eval_interval: u64) -> Self {
        Self {
            learner,
            spans: Vec::new(),
            eval_interval,
            pending: HashMap::new(),
            due: Vec::new(),
        }
    }

    /// Network snapshots taken at each evaluation point since the last call.
    pub fn take_due(&mut self) -> Vec<(u64, QNetwork<f32>)> {
        std::mem::take(&mut self.due)
    }

    fn close(&mut self, state: &GameState, mgr: &ManagerState, next: Arc<[f32]>, reward: f64, done: bool) {
        if let Some(p) = self.pending.remove(&mgr.manager_id) {
            self.learner.store(Transition {
                obs: p.obs,
                action: p.action,
                reward: reward as f32,
                next_obs: next,
                next_mask: full_mask(NUM_AREA_ACTIONS),
                done,
            });
            self.spans.push(TransitionSpan {
                manager_id: mgr.manager_id,
                start_phase: p.phase,
                end_phase: state.phase,
                done,
            });
        }
    }
}

impl ManagerPolicy for ManagerTrainer {
    fn decide(
        &mut self,
        state: &GameState,
        mgr: &ManagerState,
        obs: &ObsTensor,
        reward: Option<f64>,
        rng: &mut GameRng,
    ) -> Result<usize, PlayError> {
        let x: Arc<[f32]> = obs.to_f32().into();
        let err = |e: DqnError| PlayError::Policy(e.to_string());
        if self.learner.budget_spent() {
            // out of budget: finish the game greedily without learning
            let q = self.learner.online.forward_raw(&x)?;
            return Ok(super::select_action(&q, 0.0, rng));
        }
        if let Some(r) = reward {
            self.close(state, mgr, x.clone(), r, false);
        }
        let action = self.learner.choose(&x, full_mask(NUM_AREA_ACTIONS)).map_err(err)?;
        self.pending.insert(
            mgr.manager_id,
            Pending {
                obs: x,
                action,
                phase: state.phase,
            },
        );
        self.learner.step().map_err(err)?;
        if self.learner.steps % self.eval_interval == 0 {
            self.due.push((self.learner.steps, self.learner.online.clone()));
        }
        Ok(action)
    }

    fn game_over(&mut self, state: &GameState, mgr: &ManagerState, obs: &ObsTensor, reward: f64) -> Result<(), PlayError> {
        let x: Arc<[f32]> = obs.to_f32().into();
        self.close(state, mgr, x, reward, true);
        Ok(())
    }
}

/// Salt separating training game streams from evaluation streams.
const TRAIN_STREAM_SALT: u64 = 0x7472_6169_6e00_0000;

/// Greedy Blue hybrid vs scripted Red over the first `games` games of the cycle.
pub fn evaluate_manager(net: &QNetwork<f32>, cycle: &Arc<ScenarioCycle>, seed: u64, games: usize) -> Result<TraceRow, DqnError> {
    let m = Matchup {
        blue: Agent::Hybrid(Arc::new(net.clone())),
        red: Agent::Scripted,
        cycle: cycle.clone(),
        seed,
        n_games: games,
    };
    let (mut reward, mut score) = (0.0, 0.0);
    for i in 0..games {
        let mut tally = RewardTally::default();
        let (_, r) = run_match_observed(&m, i, &mut tally).map_err(|e| DqnError::Config(e.to_string()))?;
        reward += tally.blue;
        score += r.blue_score as f64;
    }
    Ok(TraceRow {
        step: 0,
        mean_reward: reward / games as f64,
        mean_score: score / games as f64,
    })
}

/// Checks that every scenario in the cycle splits into manager rosters.
fn check_rosters(cycle: &ScenarioCycle) -> Result<(), DqnError> {
    for s in cycle.scenarios() {
        for f in [Faction::Blue, Faction::Red] {
            assign_managers(s, f)?;
        }
    }
    Ok(())
}

pub fn manager_architecture(cfg: &TrainConfig) -> Architecture {
    cfg.net.apply(Architecture::manager())
}

/// Trains Blue managers against the scripted agent until the step budget is
/// spent. `on_eval` sees each trace row with the snapshot it was measured on.
pub fn train_manager(
    cfg: &TrainConfig,
    on_eval: &mut dyn FnMut(&TraceRow, &QNetwork<f32>) -> Result<(), DqnError>,
) -> Result<TrainOutcome, DqnError> {
    cfg.validate()?;
    let cycle = Arc::new(ScenarioCycle::new(&cfg.scenario, ScenarioSeed(cfg.seed), cfg.cycle_len)?);
    check_rosters(&cycle)?;
    let learner = DqnLearner::new(manager_architecture(cfg), cfg.hyper.clone(), cfg.seed)?;
    let mut trainer = ManagerTrainer::new(learner, cfg.eval_interval);
    let mut trace = Vec::new();
    let mut episodes = 0;
    while !trainer.learner.budget_spent() {
        let mut rng = game_rng(cfg.seed ^ TRAIN_STREAM_SALT, episodes as u64);
        let mut blue = HybridController::new(Faction::Blue, &mut trainer);
        blue.reward = cfg.reward;
        let mut red = ScriptedController { faction: Faction::Red };
        play_game(cycle.reset(episodes), &mut blue, &mut red, &mut rng, &mut NoObserver)?;
        episodes += 1;
        for (step, net) in trainer.take_due() {
            let mut row = evaluate_manager(&net, &cycle, cfg.seed, cfg.eval_games)?;
            row.step = step;
            on_eval(&row, &net)?;
            trace.push(row);
        }
    }
    Ok(TrainOutcome {
        steps: trainer.learner.steps,
        updates: trainer.learner.updates,
        model: trainer.learner.online,
        trace,
        episodes,
    })
}
