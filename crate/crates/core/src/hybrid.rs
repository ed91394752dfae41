//! Manager agents that hand objective areas to scripted subordinates.
//!
//! A manager owns a fixed roster of three units. It is asked for a new
//! objective only when every one of its surviving units stands inside the
//! current area (or when it has none yet), so each objective is an option
//! that lasts for a variable number of game ticks.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{ActionCmd, EngineError, Event, Faction, GameState, UnitId};
use crate::hexgrid::{hex_distance, objective_area, BoardDims, HexCoord, HexError};
use crate::scripted::{assess_posture, choose_among, cull_to_area};

/// Units per manager.
pub const ROSTER_SIZE: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HybridError {
    #[error("{0} units cannot be split into rosters of {ROSTER_SIZE}")]
    RosterSize(usize),
    #[error("manager {0} has no objective")]
    NoObjective(usize),
    #[error("manager {0} has an empty roster")]
    EmptyRoster(usize),
    #[error(transparent)]
    Hex(#[from] HexError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Objective {
    pub index: usize,
    /// Sorted by (row, col).
    pub area: Vec<HexCoord>,
}

impl Objective {
    pub fn contains(&self, h: HexCoord) -> bool {
        self.area.binary_search(&h).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManagerState {
    pub manager_id: usize,
    pub faction: Faction,
    pub unit_ids: Vec<UnitId>,
    pub objective: Option<Objective>,
    /// Original total strength of the roster.
    pub original_strength: u32,
    /// Current total alive strength of the roster.
    pub current_strength: u32,
    /// Points dealt by roster units (damage and removal awards).
    pub kill_points: i64,
    /// Points suffered by roster units.
    pub loss_points: i64,
    /// City points credited to cities this roster captured.
    pub city_points: i64,
    pub decisions_made: u32,
}

impl ManagerState {
    /// Accumulated score: kills plus cities held minus losses.
    pub fn accumulated(&self) -> i64 {
        self.kill_points + self.city_points - self.loss_points
    }

    pub fn owns(&self, unit: UnitId) -> bool {
        self.unit_ids.contains(&unit)
    }

    pub fn objective_index(&self) -> Option<usize> {
        self.objective.as_ref().map(|o| o.index)
    }

    fn refresh_strength(&mut self, state: &GameState) {
        self.current_strength = self
            .unit_ids
            .iter()
            .map(|id| &state.units[*id])
            .filter(|u| u.alive)
            .map(|u| u.strength)
            .sum();
    }

    pub fn is_dormant(&self, state: &GameState) -> bool {
        self.unit_ids.iter().all(|id| !state.units[*id].alive)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    /// Penalty for duplicating another manager's objective.
    pub p_g: f64,
    /// Terminal bonus.
    pub b_t: f64,
    pub gamma: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            p_g: 25.0,
            b_t: 25.0,
            gamma: 0.93,
        }
    }
}

/// Splits the faction's units, by ascending id, into consecutive triples.
pub fn assign_managers(state: &GameState, faction: Faction) -> Result<Vec<ManagerState>, HybridError> {
    let ids: Vec<UnitId> = state
        .units
        .iter()
        .filter(|u| u.faction == faction)
        .map(|u| u.id)
        .collect();
    if ids.is_empty() || ids.len() % ROSTER_SIZE != 0 {
        return Err(HybridError::RosterSize(ids.len()));
    }
    Ok(ids
        .chunks(ROSTER_SIZE)
        .enumerate()
        .map(|(k, chunk)| {
            let strength = chunk.iter().map(|id| state.units[*id].strength).sum();
            ManagerState {
                manager_id: k,
                faction,
                unit_ids: chunk.to_vec(),
                objective: None,
                original_strength: strength,
                current_strength: strength,
                kill_points: 0,
                loss_points: 0,
                city_points: 0,
                decisions_made: 0,
            }
        })
        .collect())
}

/// True when the manager has no objective yet, or when all of its surviving
/// units are inside the objective area. Dormant managers never decide.
pub fn needs_decision(mgr: &ManagerState, state: &GameState) -> bool {
    if mgr.is_dormant(state) {
        return false;
    }
    let Some(obj) = &mgr.objective else {
        return true;
    };
    mgr.unit_ids
        .iter()
        .map(|id| &state.units[*id])
        .filter(|u| u.alive)
        .all(|u| obj.contains(u.pos))
}

/// Sets the objective to the area of action `action_index`.
pub fn set_objective(
    mgr: &ManagerState,
    action_index: usize,
    dims: BoardDims,
) -> Result<ManagerState, HybridError> {
    let area = objective_area(action_index, dims)?;
    let mut next = mgr.clone();
    next.objective = Some(Objective {
        index: action_index,
        area,
    });
    next.decisions_made += 1;
    Ok(next)
}

/// Move module: the legal move that gets closest to the area, ties on the
/// lowest coordinate. Hold when nothing is reachable.
fn move_toward(legal: &[ActionCmd], area: &[HexCoord]) -> ActionCmd {
    let dist = |h: HexCoord| area.iter().map(|a| hex_distance(h, *a)).min().unwrap_or(0);
    legal
        .iter()
        .filter_map(|a| match a {
            ActionCmd::Move { to } => Some(*to),
            _ => None,
        })
        .min_by_key(|h| (dist(*h), *h))
        .map_or(ActionCmd::Hold, |to| ActionCmd::Move { to })
}

/// One subordinate's action under its manager's current objective.
pub fn subordinate_action(
    state: &GameState,
    unit_id: UnitId,
    mgr: &ManagerState,
    rng: &mut impl Rng,
) -> Result<ActionCmd, HybridError> {
    let obj = mgr
        .objective
        .as_ref()
        .ok_or(HybridError::NoObjective(mgr.manager_id))?;
    let legal = state.legal_actions(unit_id)?;
    let targets: Vec<UnitId> = legal
        .iter()
        .filter_map(|a| match a {
            ActionCmd::Attack { target } => Some(*target),
            _ => None,
        })
        .collect();
    if !targets.is_empty() {
        let target = targets[rng.gen_range(0..targets.len())];
        return Ok(ActionCmd::Attack { target });
    }
    let unit = &state.units[unit_id];
    if !obj.contains(unit.pos) {
        return Ok(move_toward(&legal, &obj.area));
    }
    fight_module(state, unit_id, mgr.faction, &obj.area, &legal, rng)
}

/// Fight module: the scripted agent evaluated on the game culled to the area.
fn fight_module(
    state: &GameState,
    unit_id: UnitId,
    faction: Faction,
    area: &[HexCoord],
    legal: &[ActionCmd],
    rng: &mut impl Rng,
) -> Result<ActionCmd, HybridError> {
    let view = cull_to_area(state, faction, area);
    let posture = assess_posture(&view, faction);
    Ok(choose_among(&view, unit_id, posture, legal, rng)?)
}

/// `max(R_m − P_g, 0) · S_c/S_o + B_t · I_t`, with `P_g` charged when another
/// manager of the same faction currently holds the same objective index.
pub fn manager_reward(
    mgr: &ManagerState,
    others: &[ManagerState],
    terminal: bool,
    params: &RewardParams,
) -> Result<f64, HybridError> {
    if mgr.original_strength == 0 {
        return Err(HybridError::EmptyRoster(mgr.manager_id));
    }
    let duplicate = mgr.objective_index().is_some_and(|idx| {
        others.iter().any(|o| {
            o.manager_id != mgr.manager_id && o.faction == mgr.faction && o.objective_index() == Some(idx)
        })
    });
    let penalty = if duplicate { params.p_g } else { 0.0 };
    let ratio = mgr.current_strength as f64 / mgr.original_strength as f64;
    let bonus = if terminal { params.b_t } else { 0.0 };
    Ok((mgr.accumulated() as f64 - penalty).max(0.0) * ratio + bonus)
}

/// Credits one engine event to the managers whose units took part.
/// `state` is the game after the event.
pub fn attribute_event(
    event: &Event,
    managers: &mut [ManagerState],
    state: &GameState,
) -> Result<(), HybridError> {
    let check = |id: UnitId| state.unit(id).map(|_| ()).map_err(HybridError::from);
    let mut credit = |unit: UnitId, f: &mut dyn FnMut(&mut ManagerState)| {
        if let Some(m) = managers.iter_mut().find(|m| m.owns(unit)) {
            f(m);
        }
    };
    match *event {
        Event::Damage {
            attacker,
            defender,
            amount,
        }
        | Event::Removed {
            attacker,
            defender,
            award: amount,
        } => {
            check(attacker)?;
            check(defender)?;
            credit(attacker, &mut |m| m.kill_points += amount as i64);
            credit(defender, &mut |m| m.loss_points += amount as i64);
        }
        Event::CityPoints {
            points, capturer, ..
        } => {
            if let Some(unit) = capturer {
                check(unit)?;
                credit(unit, &mut |m| m.city_points += points);
            }
        }
        Event::Moved { unit, .. } | Event::Captured { unit, .. } => check(unit)?,
    }
    for m in managers.iter_mut() {
        m.refresh_strength(state);
    }
    Ok(())
}
