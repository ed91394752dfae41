//! Controllers for each agent family and the loop that plays one game.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dqn::{select_action_masked, ActionMask};
use crate::engine::{ActionCmd, EngineError, Event, Faction, GameState, UnitId};
use crate::hexgrid::{neighbor, Direction, NUM_AREA_ACTIONS};
use crate::hybrid::{
    assign_managers, manager_reward, needs_decision, set_objective, subordinate_action, HybridError,
    ManagerState, RewardParams,
};
use crate::nn::{NetError, QNetwork};
use crate::observation::{individual_observation, manager_observation, ObsTensor};
use crate::scripted::{assess_posture, choose_action};

pub type GameRng = ChaCha8Rng;

/// Independent stream `game_index` of the generator seeded with `seed`.
pub fn game_rng(seed: u64, game_index: u64) -> GameRng {
    let mut rng = GameRng::seed_from_u64(seed);
    rng.set_stream(game_index);
    rng
}

#[derive(Debug, Error)]
pub enum PlayError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Hybrid(#[from] HybridError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("unit {0} has no legal encoded action")]
    NoLegalAction(UnitId),
    #[error("{0}")]
    Policy(String),
}

/// A manager's objective choice, or its closing record at game end
/// (`action_index` None). `reward` is the engineered reward for the option
/// that just finished; the first decision of a game has none.
#[derive(Debug, Clone, PartialEq)]
pub struct ManagerDecision {
    pub manager_id: usize,
    pub action_index: Option<usize>,
    pub reward: Option<f64>,
}

pub trait Controller {
    fn faction(&self) -> Faction;

    /// Start of one of this controller's phases, before any unit acts.
    fn begin_phase(&mut self, _state: &GameState, _rng: &mut GameRng) -> Result<Vec<ManagerDecision>, PlayError> {
        Ok(Vec::new())
    }

    fn act(&mut self, state: &GameState, unit: UnitId, rng: &mut GameRng) -> Result<ActionCmd, PlayError>;

    /// Every engine event of either side, with the state right after it.
    fn observe(&mut self, _events: &[Event], _state: &GameState) -> Result<(), PlayError> {
        Ok(())
    }

    fn finish(&mut self, _state: &GameState) -> Result<Vec<ManagerDecision>, PlayError> {
        Ok(Vec::new())
    }
}

/// Receives the game as it is played, for recording.
pub trait GameObserver {
    fn decisions(&mut self, _state: &GameState, _faction: Faction, _d: &[ManagerDecision]) {}
    fn action(&mut self, _state_after: &GameState, _unit: UnitId, _action: ActionCmd, _events: &[Event]) {}
    fn phase_end(&mut self, _state_after: &GameState, _events: &[Event]) {}
}

pub struct NoObserver;
impl GameObserver for NoObserver {}

/// Plays `state` to the end. The game stops immediately once it is terminal,
/// including mid-phase after an elimination.
pub fn play_game(
    mut state: GameState,
    blue: &mut dyn Controller,
    red: &mut dyn Controller,
    rng: &mut GameRng,
    obs: &mut dyn GameObserver,
) -> Result<GameState, PlayError> {
    'game: while !state.is_terminal() {
        let side = state.on_move();
        {
            let ctrl: &mut dyn Controller = if side == Faction::Blue { &mut *blue } else { &mut *red };
            let d = ctrl.begin_phase(&state, rng)?;
            if !d.is_empty() {
                obs.decisions(&state, side, &d);
            }
        }
        for id in state.pending_units() {
            if !state.units[id].alive {
                continue;
            }
            let action = if side == Faction::Blue {
                blue.act(&state, id, rng)?
            } else {
                red.act(&state, id, rng)?
            };
            let events = state.apply(id, action)?;
            blue.observe(&events, &state)?;
            red.observe(&events, &state)?;
            obs.action(&state, id, action, &events);
            if state.is_terminal() {
                break 'game;
            }
        }
        let events = state.end_phase()?;
        blue.observe(&events, &state)?;
        red.observe(&events, &state)?;
        obs.phase_end(&state, &events);
    }
    let d = blue.finish(&state)?;
    if !d.is_empty() {
        obs.decisions(&state, Faction::Blue, &d);
    }
    let d = red.finish(&state)?;
    if !d.is_empty() {
        obs.decisions(&state, Faction::Red, &d);
    }
    Ok(state)
}

pub struct ScriptedController {
    pub faction: Faction,
}

impl Controller for ScriptedController {
    fn faction(&self) -> Faction {
        self.faction
    }

    fn act(&mut self, state: &GameState, unit: UnitId, rng: &mut GameRng) -> Result<ActionCmd, PlayError> {
        let posture = assess_posture(state, self.faction);
        Ok(choose_action(state, unit, posture, rng)?)
    }
}

/// Chooses objective areas for managers.
pub trait ManagerPolicy {
    /// `reward` is the engineered reward of the option that just ended.
    fn decide(
        &mut self,
        state: &GameState,
        mgr: &ManagerState,
        obs: &ObsTensor,
        reward: Option<f64>,
        rng: &mut GameRng,
    ) -> Result<usize, PlayError>;

    /// Final reward for a manager that made at least one decision.
    fn game_over(&mut self, _state: &GameState, _mgr: &ManagerState, _obs: &ObsTensor, _reward: f64) -> Result<(), PlayError> {
        Ok(())
    }
}

impl<P: ManagerPolicy + ?Sized> ManagerPolicy for &mut P {
    fn decide(
        &mut self,
        state: &GameState,
        mgr: &ManagerState,
        obs: &ObsTensor,
        reward: Option<f64>,
        rng: &mut GameRng,
    ) -> Result<usize, PlayError> {
        (**self).decide(state, mgr, obs, reward, rng)
    }

    fn game_over(&mut self, state: &GameState, mgr: &ManagerState, obs: &ObsTensor, reward: f64) -> Result<(), PlayError> {
        (**self).game_over(state, mgr, obs, reward)
    }
}

/// Highest-valued objective under a fixed network.
pub struct GreedyManager {
    pub net: Arc<QNetwork<f32>>,
}

impl ManagerPolicy for GreedyManager {
    fn decide(&mut self, _: &GameState, _: &ManagerState, obs: &ObsTensor, _: Option<f64>, rng: &mut GameRng) -> Result<usize, PlayError> {
        let q = self.net.forward_raw(&obs.to_f32())?;
        Ok(select_action_masked(&q, u64::MAX, 0.0, rng).expect("nonempty action set"))
    }
}

/// Uniformly random objectives.
pub struct RandomManager;

impl ManagerPolicy for RandomManager {
    fn decide(&mut self, _: &GameState, _: &ManagerState, _: &ObsTensor, _: Option<f64>, rng: &mut GameRng) -> Result<usize, PlayError> {
        use rand::Rng;
        Ok(rng.gen_range(0..NUM_AREA_ACTIONS))
    }
}

/// RL managers directing scripted subordinates.
pub struct HybridController<P> {
    pub faction: Faction,
    pub policy: P,
    pub reward: RewardParams,
    pub managers: Vec<ManagerState>,
}

impl<P: ManagerPolicy> HybridController<P> {
    pub fn new(faction: Faction, policy: P) -> Self {
        Self {
            faction,
            policy,
            reward: RewardParams::default(),
            managers: Vec::new(),
        }
    }
}

impl<P: ManagerPolicy> Controller for HybridController<P> {
    fn faction(&self) -> Faction {
        self.faction
    }

    fn begin_phase(&mut self, state: &GameState, rng: &mut GameRng) -> Result<Vec<ManagerDecision>, PlayError> {
        if self.managers.is_empty() {
            self.managers = assign_managers(state, self.faction)?;
        }
        let mut out = Vec::new();
        for i in 0..self.managers.len() {
            if !needs_decision(&self.managers[i], state) {
                continue;
            }
            let mgr = &self.managers[i];
            let reward = if mgr.decisions_made > 0 {
                Some(manager_reward(mgr, &self.managers, false, &self.reward)?)
            } else {
                None
            };
            let obs = manager_observation(state, mgr, &self.managers);
            let action = self.policy.decide(state, mgr, &obs, reward, rng)?;
            self.managers[i] = set_objective(mgr, action, state.dims)?;
            out.push(ManagerDecision {
                manager_id: self.managers[i].manager_id,
                action_index: Some(action),
                reward,
            });
        }
        Ok(out)
    }

    fn act(&mut self, state: &GameState, unit: UnitId, rng: &mut GameRng) -> Result<ActionCmd, PlayError> {
        let mgr = self
            .managers
            .iter()
            .find(|m| m.owns(unit))
            .ok_or(EngineError::UnknownUnit(unit))?;
        Ok(subordinate_action(state, unit, mgr, rng)?)
    }

    fn observe(&mut self, events: &[Event], state: &GameState) -> Result<(), PlayError> {
        for e in events {
            crate::hybrid::attribute_event(e, &mut self.managers, state)?;
        }
        Ok(())
    }

    fn finish(&mut self, state: &GameState) -> Result<Vec<ManagerDecision>, PlayError> {
        let mut out = Vec::new();
        for mgr in &self.managers {
            if mgr.decisions_made == 0 {
                continue;
            }
            let reward = manager_reward(mgr, &self.managers, true, &self.reward)?;
            let obs = manager_observation(state, mgr, &self.managers);
            self.policy.game_over(state, mgr, &obs, reward)?;
            out.push(ManagerDecision {
                manager_id: mgr.manager_id,
                action_index: None,
                reward: Some(reward),
            });
        }
        Ok(out)
    }
}

/// Per-unit action encoding: Hold, a move into each of the six neighbors, an
/// attack on the unit in each of the six neighbors (direction order E, NE,
/// NW, W, SW, SE).
pub const UNIT_ACTIONS: usize = 13;

pub fn decode_unit_action(state: &GameState, unit: UnitId, index: usize) -> Option<ActionCmd> {
    let u = state.units.get(unit)?;
    match index {
        0 => Some(ActionCmd::Hold),
        1..=6 => neighbor(u.pos, Direction::ALL[index - 1], state.dims).map(|to| ActionCmd::Move { to }),
        7..=12 => neighbor(u.pos, Direction::ALL[index - 7], state.dims)
            .and_then(|h| state.unit_at(h))
            .map(|t| ActionCmd::Attack { target: t.id }),
        _ => None,
    }
}

/// Encoded actions that the engine would accept right now.
pub fn unit_action_mask(state: &GameState, unit: UnitId) -> Result<ActionMask, EngineError> {
    let legal = state.legal_actions(unit)?;
    let mut mask = 0;
    for i in 0..UNIT_ACTIONS {
        if decode_unit_action(state, unit, i).is_some_and(|a| legal.contains(&a)) {
            mask |= 1 << i;
        }
    }
    Ok(mask)
}

/// Chooses encoded actions for single units.
pub trait UnitPolicy {
    fn decide(
        &mut self,
        state: &GameState,
        unit: UnitId,
        obs: &ObsTensor,
        mask: ActionMask,
        rng: &mut GameRng,
    ) -> Result<usize, PlayError>;

    fn game_over(&mut self, _state: &GameState) -> Result<(), PlayError> {
        Ok(())
    }
}

impl<P: UnitPolicy + ?Sized> UnitPolicy for &mut P {
    fn decide(
        &mut self,
        state: &GameState,
        unit: UnitId,
        obs: &ObsTensor,
        mask: ActionMask,
        rng: &mut GameRng,
    ) -> Result<usize, PlayError> {
        (**self).decide(state, unit, obs, mask, rng)
    }

    fn game_over(&mut self, state: &GameState) -> Result<(), PlayError> {
        (**self).game_over(state)
    }
}

/// Best legal action under a fixed network.
pub struct GreedyUnit {
    pub net: Arc<QNetwork<f32>>,
}

impl UnitPolicy for GreedyUnit {
    fn decide(&mut self, _: &GameState, unit: UnitId, obs: &ObsTensor, mask: ActionMask, rng: &mut GameRng) -> Result<usize, PlayError> {
        let q = self.net.forward_raw(&obs.to_f32())?;
        select_action_masked(&q, mask, 0.0, rng).ok_or(PlayError::NoLegalAction(unit))
    }
}

/// Every unit picks its own action from the full-board observation.
pub struct IndividualController<P> {
    pub faction: Faction,
    pub policy: P,
}

impl<P: UnitPolicy> Controller for IndividualController<P> {
    fn faction(&self) -> Faction {
        self.faction
    }

    fn act(&mut self, state: &GameState, unit: UnitId, rng: &mut GameRng) -> Result<ActionCmd, PlayError> {
        let obs = individual_observation(state, unit)?;
        let mask = unit_action_mask(state, unit)?;
        let index = self.policy.decide(state, unit, &obs, mask, rng)?;
        decode_unit_action(state, unit, index).ok_or(PlayError::NoLegalAction(unit))
    }

    fn finish(&mut self, state: &GameState) -> Result<Vec<ManagerDecision>, PlayError> {
        self.policy.game_over(state)?;
        Ok(Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate, ScenarioConfig, ScenarioSeed};

    fn scripted(f: Faction) -> ScriptedController {
        ScriptedController { faction: f }
    }

    #[test]
    fn scripted_games_end_and_are_deterministic() {
        let cfg = ScenarioConfig::default();
        for seed in 0..5 {
            let s = generate(&cfg, ScenarioSeed(seed)).unwrap();
            let run = || {
                let mut rng = GameRng::seed_from_u64(seed);
                play_game(s.clone(), &mut scripted(Faction::Blue), &mut scripted(Faction::Red), &mut rng, &mut NoObserver)
                    .unwrap()
            };
            let a = run();
            assert!(a.is_terminal());
            assert_eq!(a, run());
        }
    }

    #[derive(Default)]
    struct Count {
        decisions: Vec<ManagerDecision>,
    }
    impl GameObserver for Count {
        fn decisions(&mut self, _: &GameState, _: Faction, d: &[ManagerDecision]) {
            self.decisions.extend_from_slice(d);
        }
    }

    #[test]
    fn hybrid_first_decisions_have_no_reward_and_every_manager_closes() {
        let s = generate(&ScenarioConfig::default(), ScenarioSeed(3)).unwrap();
        let n_mgr = s.units.iter().filter(|u| u.faction == Faction::Blue).count() / 3;
        let mut rng = GameRng::seed_from_u64(1);
        let mut blue = HybridController::new(Faction::Blue, RandomManager);
        let mut rec = Count::default();
        play_game(s, &mut blue, &mut scripted(Faction::Red), &mut rng, &mut rec).unwrap();
        let first: Vec<_> = rec.decisions.iter().take(n_mgr).collect();
        assert!(first.iter().all(|d| d.reward.is_none() && d.action_index.is_some()));
        let closing: Vec<_> = rec.decisions.iter().filter(|d| d.action_index.is_none()).collect();
        assert_eq!(closing.len(), n_mgr);
        let total: u32 = blue.managers.iter().map(|m| m.decisions_made).sum();
        assert_eq!(total as usize, rec.decisions.len() - n_mgr);
    }

    #[test]
    fn unit_encoding_roundtrips_legal_actions() {
        let s = generate(&ScenarioConfig::default(), ScenarioSeed(2)).unwrap();
        for u in s.alive_units(Faction::Blue) {
            let mask = unit_action_mask(&s, u.id).unwrap();
            assert!(mask & 1 == 1);
            let legal = s.legal_actions(u.id).unwrap();
            for i in 0..UNIT_ACTIONS {
                if mask >> i & 1 == 1 {
                    assert!(legal.contains(&decode_unit_action(&s, u.id, i).unwrap()));
                }
            }
        }
    }
}
