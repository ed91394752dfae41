//! The rule-based baseline agent.
//!
//! Per unit: attack a uniformly chosen enemy in range if there is one,
//! otherwise move to the reachable hex with the lowest posture-dependent
//! score.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{ActionCmd, EngineError, Faction, GameState, Terrain, Unit, UnitId};
use crate::hexgrid::{hex_distance, HexCoord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Posture {
    Offensive,
    Defensive,
}

/// Weight of the enemy-avoidance term in the defensive move score.
pub const DEFENSIVE_AVOIDANCE: f64 = 0.25;

/// Offensive when the faction's alive strength is at least the opponent's.
pub fn assess_posture(state: &GameState, faction: Faction) -> Posture {
    if state.alive_strength(faction) >= state.alive_strength(faction.opponent()) {
        Posture::Offensive
    } else {
        Posture::Defensive
    }
}

/// Score of moving `unit` to `h`; lower is better.
pub fn hex_move_score(state: &GameState, unit: &Unit, h: HexCoord, posture: Posture) -> f64 {
    let own = unit.faction;
    let enemy_dist = state
        .alive_units(own.opponent())
        .map(|e| hex_distance(h, e.pos))
        .min();
    match posture {
        Posture::Offensive => {
            let city_dist = state
                .cities
                .iter()
                .filter(|c| c.owner != Some(own))
                .map(|c| hex_distance(h, c.hex))
                .min();
            match (enemy_dist, city_dist) {
                (Some(a), Some(b)) => a.min(b) as f64,
                (Some(a), None) | (None, Some(a)) => a as f64,
                (None, None) => 0.0,
            }
        }
        Posture::Defensive => {
            let city = state
                .cities
                .iter()
                .filter(|c| c.owner != Some(own.opponent()))
                .map(|c| hex_distance(h, c.hex))
                .min()
                .unwrap_or(0) as f64;
            let avoid = enemy_dist
                .map(|d| DEFENSIVE_AVOIDANCE * (state.dims.diameter() as f64 - d as f64))
                .unwrap_or(0.0);
            city + avoid
        }
    }
}

/// Picks an action for `unit_id` from `legal` (which must be the unit's legal
/// actions in the real game), using `view` for all scoring.
pub fn choose_among(
    view: &GameState,
    unit_id: UnitId,
    posture: Posture,
    legal: &[ActionCmd],
    rng: &mut impl Rng,
) -> Result<ActionCmd, EngineError> {
    let unit = view.unit(unit_id)?;
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
    let mut best: Option<(f64, HexCoord)> = None;
    for a in legal {
        if let ActionCmd::Move { to } = a {
            let s = hex_move_score(view, unit, *to, posture);
            let better = match best {
                None => true,
                Some((bs, bh)) => s < bs || (s == bs && *to < bh),
            };
            if better {
                best = Some((s, *to));
            }
        }
    }
    Ok(best.map_or(ActionCmd::Hold, |(_, to)| ActionCmd::Move { to }))
}

/// The scripted decision for one unit of the faction on move.
pub fn choose_action(
    state: &GameState,
    unit_id: UnitId,
    posture: Posture,
    rng: &mut impl Rng,
) -> Result<ActionCmd, EngineError> {
    let legal = state.legal_actions(unit_id)?;
    choose_among(state, unit_id, posture, &legal, rng)
}

/// Copy of `state` where everything outside `area` that a unit of `faction`
/// could use for scoring is hidden: enemies are removed, cities become plain
/// terrain, and all other terrain becomes Clear. Water stays Water so the
/// view agrees with the real game about where units can go, and friendly
/// units stay visible.
pub fn cull_to_area(state: &GameState, faction: Faction, area: &[HexCoord]) -> GameState {
    let mut view = state.clone();
    let inside = |h: HexCoord| area.binary_search(&h).is_ok();
    for u in view.units.iter_mut() {
        if u.faction != faction && !inside(u.pos) {
            u.alive = false;
        }
    }
    view.cities.retain(|c| inside(c.hex));
    for h in state.dims.iter() {
        let t = &mut view.terrain[state.dims.index(h)];
        if !inside(h) && *t != Terrain::Water {
            *t = Terrain::Clear;
        }
    }
    view
}
