//! Game state, legal actions, combat, city control and scoring.
//!
//! Damage per attack is `round(0.4 × attacker strength × terrain multiplier)`,
//! with multipliers Clear/Marsh 1.0, Rough 0.75, Urban 0.5. The arithmetic is
//! done in integers (multipliers are kept in quarters) so it is exact and
//! rounds halves up.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::VecDeque;
use thiserror::Error;

use crate::hexgrid::{hex_distance, hex_neighbors, BoardDims, HexCoord, HexError};

pub type UnitId = usize;

/// Starting strength of every unit.
pub const FULL_STRENGTH: u32 = 100;
/// Units whose strength falls below this are removed.
pub const REMOVAL_THRESHOLD: u32 = 50;
/// City points per phase, split evenly across the scenario's cities.
pub const CITY_POINTS_PER_PHASE: i64 = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Hex(#[from] HexError),
    #[error("unknown unit {0}")]
    UnknownUnit(UnitId),
    #[error("unit {0} has been removed")]
    Ineffective(UnitId),
    #[error("unit {0} does not belong to the faction on move")]
    NotOnMove(UnitId),
    #[error("unit {0} already acted this phase")]
    AlreadyActed(UnitId),
    #[error("illegal action {action:?} for unit {unit}")]
    Illegal { unit: UnitId, action: ActionCmd },
    #[error("phase cannot end: units {0:?} have not acted")]
    MidPhase(Vec<UnitId>),
    #[error("game is over")]
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Faction {
    Blue,
    Red,
}

impl Faction {
    pub fn opponent(self) -> Faction {
        match self {
            Faction::Blue => Faction::Red,
            Faction::Red => Faction::Blue,
        }
    }

    /// +1 for Blue, -1 for Red; converts Blue-perspective scores.
    pub fn sign(self) -> i64 {
        match self {
            Faction::Blue => 1,
            Faction::Red => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnitType {
    Infantry,
    Mechanized,
    Armor,
    Artillery,
}

impl UnitType {
    pub const ALL: [UnitType; 4] = [
        UnitType::Infantry,
        UnitType::Mechanized,
        UnitType::Armor,
        UnitType::Artillery,
    ];

    pub fn attack_range(self) -> u32 {
        match self {
            UnitType::Artillery => 2,
            _ => 1,
        }
    }

    pub fn move_range(self) -> u32 {
        match self {
            UnitType::Mechanized | UnitType::Armor => 2,
            _ => 1,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Terrain {
    Clear,
    Water,
    Rough,
    Urban,
    Marsh,
}

impl Terrain {
    pub const ALL: [Terrain; 5] = [
        Terrain::Clear,
        Terrain::Water,
        Terrain::Rough,
        Terrain::Urban,
        Terrain::Marsh,
    ];

    pub fn passable(self) -> bool {
        self != Terrain::Water
    }

    /// Defense multiplier in quarters (4 = 1.0).
    pub fn defense_quarters(self) -> u32 {
        match self {
            Terrain::Clear | Terrain::Marsh | Terrain::Water => 4,
            Terrain::Rough => 3,
            Terrain::Urban => 2,
        }
    }

    pub fn defense_multiplier(self) -> f64 {
        self.defense_quarters() as f64 / 4.0
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> char {
        match self {
            Terrain::Clear => '.',
            Terrain::Water => '~',
            Terrain::Rough => '^',
            Terrain::Urban => '#',
            Terrain::Marsh => ',',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub id: UnitId,
    pub faction: Faction,
    pub utype: UnitType,
    pub strength: u32,
    pub pos: HexCoord,
    pub alive: bool,
}

/// Accumulated points, all nonnegative and nondecreasing over a game.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub blue_city: i64,
    pub blue_combat: i64,
    pub red_city: i64,
    pub red_combat: i64,
}

impl ScoreBreakdown {
    /// Blue-perspective total.
    pub fn total(&self) -> i64 {
        self.blue_city + self.blue_combat - (self.red_city + self.red_combat)
    }

    pub fn total_for(&self, faction: Faction) -> i64 {
        match faction {
            Faction::Blue => self.total(),
            Faction::Red => self.red_city + self.red_combat - (self.blue_city + self.blue_combat),
        }
    }

    pub fn combat_mut(&mut self, faction: Faction) -> &mut i64 {
        match faction {
            Faction::Blue => &mut self.blue_combat,
            Faction::Red => &mut self.red_combat,
        }
    }

    pub fn city_mut(&mut self, faction: Faction) -> &mut i64 {
        match faction {
            Faction::Blue => &mut self.blue_city,
            Faction::Red => &mut self.red_city,
        }
    }

    pub fn combat(&self, faction: Faction) -> i64 {
        match faction {
            Faction::Blue => self.blue_combat,
            Faction::Red => self.red_combat,
        }
    }

    pub fn city(&self, faction: Faction) -> i64 {
        match faction {
            Faction::Blue => self.blue_city,
            Faction::Red => self.red_city,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct City {
    pub hex: HexCoord,
    pub owner: Option<Faction>,
    /// Unit that most recently took the city for its current owner.
    pub captured_by: Option<UnitId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionCmd {
    Move { to: HexCoord },
    Attack { target: UnitId },
    Hold,
}

/// Something that happened while applying an action or closing a phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    Moved {
        unit: UnitId,
        from: HexCoord,
        to: HexCoord,
    },
    Captured {
        unit: UnitId,
        hex: HexCoord,
        previous: Option<Faction>,
    },
    Damage {
        attacker: UnitId,
        defender: UnitId,
        amount: u32,
    },
    Removed {
        attacker: UnitId,
        defender: UnitId,
        award: u32,
    },
    CityPoints {
        faction: Faction,
        hex: HexCoord,
        points: i64,
        capturer: Option<UnitId>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameState {
    pub dims: BoardDims,
    /// Row-major terrain grid.
    pub terrain: Vec<Terrain>,
    /// Indexed by unit id.
    pub units: Vec<Unit>,
    /// Exactly the Urban hexes, sorted by (row, col).
    pub cities: Vec<City>,
    pub phase: u32,
    pub max_phases: u32,
    pub score: ScoreBreakdown,
    pub rng_seed: u64,
    /// End the game as soon as one faction has no units left.
    pub elimination_ends: bool,
    /// Per unit: has it acted in the current phase.
    pub acted: Vec<bool>,
}

impl GameState {
    /// Builds a state from a terrain grid and roster; cities are derived from
    /// the Urban hexes.
    pub fn new(
        dims: BoardDims,
        terrain: Vec<Terrain>,
        units: Vec<Unit>,
        max_phases: u32,
        rng_seed: u64,
    ) -> Result<Self, EngineError> {
        assert_eq!(terrain.len(), dims.len(), "terrain grid size");
        for (i, u) in units.iter().enumerate() {
            assert_eq!(u.id, i, "unit ids must be dense and ordered");
            dims.check(u.pos)?;
        }
        let cities = dims
            .iter()
            .filter(|h| terrain[dims.index(*h)] == Terrain::Urban)
            .map(|hex| City {
                hex,
                owner: None,
                captured_by: None,
            })
            .collect();
        let acted = vec![false; units.len()];
        Ok(Self {
            dims,
            terrain,
            units,
            cities,
            phase: 0,
            max_phases,
            score: ScoreBreakdown::default(),
            rng_seed,
            elimination_ends: true,
            acted,
        })
    }

    pub fn terrain_at(&self, h: HexCoord) -> Terrain {
        self.terrain[self.dims.index(h)]
    }

    /// Blue moves on even phases, Red on odd ones.
    pub fn on_move(&self) -> Faction {
        if self.phase % 2 == 0 {
            Faction::Blue
        } else {
            Faction::Red
        }
    }

    pub fn unit(&self, id: UnitId) -> Result<&Unit, EngineError> {
        self.units.get(id).ok_or(EngineError::UnknownUnit(id))
    }

    pub fn unit_at(&self, h: HexCoord) -> Option<&Unit> {
        self.units.iter().find(|u| u.alive && u.pos == h)
    }

    pub fn alive_units(&self, faction: Faction) -> impl Iterator<Item = &Unit> {
        self.units
            .iter()
            .filter(move |u| u.alive && u.faction == faction)
    }

    pub fn alive_strength(&self, faction: Faction) -> u32 {
        self.alive_units(faction).map(|u| u.strength).sum()
    }

    /// Units of the faction on move that still have to act, ascending id.
    pub fn pending_units(&self) -> Vec<UnitId> {
        let f = self.on_move();
        self.units
            .iter()
            .filter(|u| u.alive && u.faction == f && !self.acted[u.id])
            .map(|u| u.id)
            .collect()
    }

    pub fn city_value(&self) -> i64 {
        if self.cities.is_empty() {
            0
        } else {
            CITY_POINTS_PER_PHASE / self.cities.len() as i64
        }
    }

    pub fn is_terminal(&self) -> bool {
        if self.phase >= self.max_phases {
            return true;
        }
        self.elimination_ends
            && (self.alive_units(Faction::Blue).next().is_none()
                || self.alive_units(Faction::Red).next().is_none())
    }

    fn check_actor(&self, unit_id: UnitId) -> Result<&Unit, EngineError> {
        let u = self.unit(unit_id)?;
        if !u.alive {
            return Err(EngineError::Ineffective(unit_id));
        }
        if u.faction != self.on_move() {
            return Err(EngineError::NotOnMove(unit_id));
        }
        Ok(u)
    }

    /// Passable, unoccupied hexes reachable from the unit within its move range.
    pub fn move_destinations(&self, unit: &Unit) -> Vec<HexCoord> {
        let range = unit.utype.move_range();
        let mut seen = vec![false; self.dims.len()];
        seen[self.dims.index(unit.pos)] = true;
        let mut out = Vec::new();
        let mut queue = VecDeque::from([(unit.pos, 0u32)]);
        while let Some((c, d)) = queue.pop_front() {
            if d == range {
                continue;
            }
            for n in hex_neighbors(c, self.dims).expect("in-bounds position") {
                let i = self.dims.index(n);
                if seen[i] {
                    continue;
                }
                seen[i] = true;
                if self.terrain[i].passable() && self.unit_at(n).is_none() {
                    out.push(n);
                    queue.push_back((n, d + 1));
                }
            }
        }
        out.sort();
        out
    }

    /// Alive enemies within the unit's attack range, ascending id.
    pub fn targets_in_range(&self, unit: &Unit) -> Vec<UnitId> {
        let range = unit.utype.attack_range();
        self.alive_units(unit.faction.opponent())
            .filter(|e| hex_distance(unit.pos, e.pos) <= range)
            .map(|e| e.id)
            .collect()
    }

    /// Hold, then Moves sorted by destination, then Attacks by target id.
    pub fn legal_actions(&self, unit_id: UnitId) -> Result<Vec<ActionCmd>, EngineError> {
        let u = self.check_actor(unit_id)?;
        let mut out = vec![ActionCmd::Hold];
        out.extend(
            self.move_destinations(u)
                .into_iter()
                .map(|to| ActionCmd::Move { to }),
        );
        out.extend(
            self.targets_in_range(u)
                .into_iter()
                .map(|target| ActionCmd::Attack { target }),
        );
        Ok(out)
    }

    fn is_legal(&self, u: &Unit, action: ActionCmd) -> bool {
        match action {
            ActionCmd::Hold => true,
            ActionCmd::Move { to } => {
                self.dims.contains(to)
                    && hex_distance(u.pos, to) <= u.utype.move_range()
                    && self.move_destinations(u).contains(&to)
            }
            ActionCmd::Attack { target } => self.units.get(target).is_some_and(|t| {
                t.alive
                    && t.faction != u.faction
                    && hex_distance(u.pos, t.pos) <= u.utype.attack_range()
            }),
        }
    }

    /// Applies one unit's action in place. On error the state is untouched.
    pub fn apply(&mut self, unit_id: UnitId, action: ActionCmd) -> Result<Vec<Event>, EngineError> {
        if self.is_terminal() {
            return Err(EngineError::Terminal);
        }
        let u = self.check_actor(unit_id)?;
        if self.acted[unit_id] {
            return Err(EngineError::AlreadyActed(unit_id));
        }
        if !self.is_legal(u, action) {
            return Err(EngineError::Illegal {
                unit: unit_id,
                action,
            });
        }
        let faction = u.faction;
        let mut events = Vec::new();
        match action {
            ActionCmd::Hold => {}
            ActionCmd::Move { to } => {
                let from = u.pos;
                self.units[unit_id].pos = to;
                events.push(Event::Moved {
                    unit: unit_id,
                    from,
                    to,
                });
                if let Some(city) = self.cities.iter_mut().find(|c| c.hex == to) {
                    if city.owner != Some(faction) {
                        events.push(Event::Captured {
                            unit: unit_id,
                            hex: to,
                            previous: city.owner,
                        });
                        city.owner = Some(faction);
                        city.captured_by = Some(unit_id);
                    }
                }
            }
            ActionCmd::Attack { target } => {
                let attacker_strength = u.strength;
                let defender_hex = self.units[target].pos;
                let quarters = self.terrain_at(defender_hex).defense_quarters();
                // round(0.4 * s * q / 4) = round(s * q / 10), halves up
                let raw = (attacker_strength * quarters * 2 + 10) / 20;
                let defender = &mut self.units[target];
                let amount = raw.min(defender.strength);
                defender.strength -= amount;
                *self.score.combat_mut(faction) += amount as i64;
                events.push(Event::Damage {
                    attacker: unit_id,
                    defender: target,
                    amount,
                });
                if defender.strength < REMOVAL_THRESHOLD {
                    defender.alive = false;
                    let award = defender.strength;
                    *self.score.combat_mut(faction) += award as i64;
                    events.push(Event::Removed {
                        attacker: unit_id,
                        defender: target,
                        award,
                    });
                }
            }
        }
        self.acted[unit_id] = true;
        Ok(events)
    }

    /// Awards city points, then advances to the next phase.
    pub fn end_phase(&mut self) -> Result<Vec<Event>, EngineError> {
        if self.phase >= self.max_phases {
            return Err(EngineError::Terminal);
        }
        let pending = self.pending_units();
        if !pending.is_empty() {
            return Err(EngineError::MidPhase(pending));
        }
        let value = self.city_value();
        let mut events = Vec::new();
        for city in &self.cities {
            if let Some(owner) = city.owner {
                *self.score.city_mut(owner) += value;
                events.push(Event::CityPoints {
                    faction: owner,
                    hex: city.hex,
                    points: value,
                    capturer: city.captured_by,
                });
            }
        }
        self.phase += 1;
        self.acted.iter_mut().for_each(|a| *a = false);
        Ok(events)
    }

    /// Short content hash, used by replays to pin the exact state.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("state serializes");
        let hash = Sha256::digest(&bytes);
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Multi-line text sketch of the board. Odd rows are indented.
    pub fn sketch(&self) -> String {
        let mut s = String::new();
        for r in 0..self.dims.n_rows {
            if r % 2 == 1 {
                s.push(' ');
            }
            for c in 0..self.dims.n_cols {
                let h = HexCoord::new(r, c);
                let ch = match self.unit_at(h) {
                    Some(u) if u.faction == Faction::Blue => 'B',
                    Some(_) => 'R',
                    None => self.terrain_at(h).symbol(),
                };
                s.push(ch);
                s.push(' ');
            }
            s.push('\n');
        }
        s
    }
}

/// Pure form of [`GameState::apply`].
pub fn apply_action(
    state: &GameState,
    unit_id: UnitId,
    action: ActionCmd,
) -> Result<(GameState, Vec<Event>), EngineError> {
    let mut next = state.clone();
    let events = next.apply(unit_id, action)?;
    Ok((next, events))
}

/// Pure form of [`GameState::end_phase`].
pub fn end_phase(state: &GameState) -> Result<(GameState, Vec<Event>), EngineError> {
    let mut next = state.clone();
    let events = next.end_phase()?;
    Ok((next, events))
}

pub fn legal_actions(state: &GameState, unit_id: UnitId) -> Result<Vec<ActionCmd>, EngineError> {
    state.legal_actions(unit_id)
}

pub fn total_score(state: &GameState) -> i64 {
    state.score.total()
}

pub fn is_terminal(state: &GameState) -> bool {
    state.is_terminal()
}
