//! Individual-agent training: every Blue unit decision is one agent step of
//! a single shared network.
//!
//! Steps form one stream per game, like an environment that hands control
//! to the next unit due to act: a transition runs from one Blue unit's
//! decision to the next Blue decision (usually another unit), and its raw
//! reward is the change in Blue's score over that interval, which includes
//! end-of-phase city points and the opponent's phase when it is crossed.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::manager::{TrainConfig, TraceRow, TrainOutcome};
use super::{ActionMask, DqnError, DqnLearner, Transition};
use crate::engine::{Faction, GameState, UnitId};
use crate::evalstats::{run_match, Agent, Matchup};
use crate::nn::{Architecture, QNetwork};
use crate::observation::ObsTensor;
use crate::play::{game_rng, play_game, GameRng, IndividualController, NoObserver, PlayError, ScriptedController, UnitPolicy, UNIT_ACTIONS};
use crate::scenario::{ScenarioCycle, ScenarioSeed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndividualReward {
    /// Score change since the previous step, from the agent's side.
    pub r_raw: f64,
    pub s_c: f64,
    pub s_o: f64,
    /// Duplicate-objective penalty term; individual agents have no objectives.
    pub p_g_term: f64,
    pub b_t: f64,
}

/// `max(R_raw − P_g, 0) · S_c/S_o + B_t · I_t`
pub fn individual_reward(ir: &IndividualReward, terminal: bool) -> Result<f64, DqnError> {
    if ir.s_o <= 0.0 {
        return Err(DqnError::Config("original strength must be positive".into()));
    }
    let bonus = if terminal { ir.b_t } else { 0.0 };
    Ok((ir.r_raw - ir.p_g_term).max(0.0) * (ir.s_c / ir.s_o) + bonus)
}

struct Pending {
    obs: Arc<[f32]>,
    action: usize,
    score: i64,
}

/// Unit policy that learns while it plays.
pub struct IndividualTrainer {
    pub learner: DqnLearner,
    pub faction: Faction,
    pub b_t: f64,
    pub p_g_term: f64,
    eval_interval: u64,
    original_strength: Option<u32>,
    pending: Option<Pending>,
    due: Vec<(u64, QNetwork<f32>)>,
}

impl IndividualTrainer {
    pub fn new(learner: DqnLearner, faction: Faction, b_t: f64, eval_interval: u64) -> Self {
        Self {
            learner,
            faction,
            b_t,
            p_g_term: 0.0,
            eval_interval,
            original_strength: None,
            pending: None,
            due: Vec::new(),
        }
    }

    pub fn take_due(&mut self) -> Vec<(u64, QNetwork<f32>)> {
        std::mem::take(&mut self.due)
    }

    fn reward(&self, state: &GameState, prev_score: i64, terminal: bool) -> Result<f64, DqnError> {
        individual_reward(
            &IndividualReward {
                r_raw: (state.score.total_for(self.faction) - prev_score) as f64,
                s_c: state.alive_strength(self.faction) as f64,
                s_o: self.original_strength.unwrap_or(0) as f64,
                p_g_term: self.p_g_term,
                b_t: self.b_t,
            },
            terminal,
        )
    }
}

impl UnitPolicy for IndividualTrainer {
    fn decide(
        &mut self,
        state: &GameState,
        unit: UnitId,
        obs: &ObsTensor,
        mask: ActionMask,
        rng: &mut GameRng,
    ) -> Result<usize, PlayError> {
        let err = |e: DqnError| PlayError::Policy(e.to_string());
        let x: Arc<[f32]> = obs.to_f32().into();
        if self.learner.budget_spent() {
            let q = self.learner.online.forward_raw(&x)?;
            return super::select_action_masked(&q, mask, 0.0, rng).ok_or(PlayError::NoLegalAction(unit));
        }
        if self.original_strength.is_none() {
            self.original_strength = Some(state.alive_strength(self.faction));
        }
        if let Some(p) = self.pending.take() {
            let r = self.reward(state, p.score, false).map_err(err)?;
            self.learner.store(Transition {
                obs: p.obs,
                action: p.action,
                reward: r as f32,
                next_obs: x.clone(),
                next_mask: mask,
                done: false,
            });
        }
        let action = self.learner.choose(&x, mask).map_err(err)?;
        self.pending = Some(Pending {
            obs: x,
            action,
            score: state.score.total_for(self.faction),
        });
        self.learner.step().map_err(err)?;
        if self.learner.steps % self.eval_interval == 0 {
            self.due.push((self.learner.steps, self.learner.online.clone()));
        }
        Ok(action)
    }

    fn game_over(&mut self, state: &GameState) -> Result<(), PlayError> {
        if let Some(p) = self.pending.take() {
            let r = self
                .reward(state, p.score, true)
                .map_err(|e| PlayError::Policy(e.to_string()))?;
            self.learner.store(Transition {
                next_obs: p.obs.clone(),
                obs: p.obs,
                action: p.action,
                reward: r as f32,
                next_mask: 0,
                done: true,
            });
        }
        self.original_strength = None;
        Ok(())
    }
}

const TRAIN_STREAM_SALT: u64 = 0x696e_6469_7600_0000;

pub fn individual_architecture(cfg: &TrainConfig) -> Architecture {
    cfg.net.apply(Architecture::individual(cfg.scenario.dims, UNIT_ACTIONS))
}

/// Greedy Blue individual agent vs scripted Red; the mean reward column is
/// left at 0 because no engineered reward is tracked during evaluation.
pub fn evaluate_individual(net: &QNetwork<f32>, cycle: &Arc<ScenarioCycle>, seed: u64, games: usize) -> Result<TraceRow, DqnError> {
    let m = Matchup {
        blue: Agent::Individual(Arc::new(net.clone())),
        red: Agent::Scripted,
        cycle: cycle.clone(),
        seed,
        n_games: games,
    };
    let mut score = 0.0;
    for i in 0..games {
        score += run_match(&m, i).map_err(|e| DqnError::Config(e.to_string()))?.blue_score as f64;
    }
    Ok(TraceRow {
        step: 0,
        mean_reward: 0.0,
        mean_score: score / games as f64,
    })
}

pub fn train_individual(
    cfg: &TrainConfig,
    on_eval: &mut dyn FnMut(&TraceRow, &QNetwork<f32>) -> Result<(), DqnError>,
) -> Result<TrainOutcome, DqnError> {
    cfg.validate()?;
    let cycle = Arc::new(ScenarioCycle::new(&cfg.scenario, ScenarioSeed(cfg.seed), cfg.cycle_len)?);
    let learner = DqnLearner::new(individual_architecture(cfg), cfg.hyper.clone(), cfg.seed)?;
    let mut trainer = IndividualTrainer::new(learner, Faction::Blue, cfg.reward.b_t, cfg.eval_interval);
    let mut trace = Vec::new();
    let mut episodes = 0;
    while !trainer.learner.budget_spent() {
        let mut rng = game_rng(cfg.seed ^ TRAIN_STREAM_SALT, episodes as u64);
        let mut blue = IndividualController {
            faction: Faction::Blue,
            policy: &mut trainer,
        };
        let mut red = ScriptedController { faction: Faction::Red };
        play_game(cycle.reset(episodes), &mut blue, &mut red, &mut rng, &mut NoObserver)?;
        episodes += 1;
        for (step, net) in trainer.take_due() {
            let mut row = evaluate_individual(&net, &cycle, cfg.seed, cfg.eval_games)?;
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
