//! Seeded scenario generation and the cyclic scenario stream used in training.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Faction, GameState, Terrain, Unit, UnitType, FULL_STRENGTH};
use crate::hexgrid::{BoardDims, HexCoord};

/// Attempts at drawing a feasible layout before giving up.
const MAX_TRIES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("board {0}x{1} too small for the spawn bands and cities")]
    BoardTooSmall(usize, usize),
    #[error("no feasible placement after {0} attempts")]
    Infeasible(usize),
    #[error("invalid scenario config: {0}")]
    Config(String),
}

/// Terrain proportions for hexes outside cities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerrainMix {
    pub clear: f64,
    pub rough: f64,
    pub marsh: f64,
    pub water: f64,
}

impl Default for TerrainMix {
    fn default() -> Self {
        Self {
            clear: 0.80,
            rough: 0.10,
            marsh: 0.05,
            water: 0.05,
        }
    }
}

impl TerrainMix {
    fn sample(&self, rng: &mut impl Rng) -> Terrain {
        let total = self.clear + self.rough + self.marsh + self.water;
        let x = rng.gen::<f64>() * total;
        if x < self.clear {
            Terrain::Clear
        } else if x < self.clear + self.rough {
            Terrain::Rough
        } else if x < self.clear + self.rough + self.marsh {
            Terrain::Marsh
        } else {
            Terrain::Water
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub dims: BoardDims,
    pub units_per_faction_choices: Vec<usize>,
    pub city_count_choices: Vec<usize>,
    pub max_phases: u32,
    pub terrain_mix: TerrainMix,
    /// Rows at each edge where a faction's units spawn.
    pub spawn_rows: usize,
    pub unit_type: UnitType,
    pub elimination_ends: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            dims: BoardDims::default(),
            units_per_faction_choices: vec![6, 9],
            city_count_choices: vec![1, 2],
            max_phases: 40,
            terrain_mix: TerrainMix::default(),
            spawn_rows: 3,
            unit_type: UnitType::Infantry,
            elimination_ends: true,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let BoardDims { n_rows, n_cols } = self.dims;
        if self.units_per_faction_choices.is_empty() || self.city_count_choices.is_empty() {
            return Err(ScenarioError::Config("empty choice list".into()));
        }
        if self.units_per_faction_choices.contains(&0) {
            return Err(ScenarioError::Config("a faction needs at least one unit".into()));
        }
        if self.max_phases == 0 {
            return Err(ScenarioError::Config("max_phases must be positive".into()));
        }
        let max_units = *self.units_per_faction_choices.iter().max().unwrap();
        if n_rows < 2 * self.spawn_rows + 1 || self.spawn_rows * n_cols < max_units {
            return Err(ScenarioError::BoardTooSmall(n_rows, n_cols));
        }
        Ok(())
    }

    fn blue_band(&self) -> std::ops::Range<usize> {
        self.dims.n_rows - self.spawn_rows..self.dims.n_rows
    }

    fn red_band(&self) -> std::ops::Range<usize> {
        0..self.spawn_rows
    }

    /// Rows eligible for cities: the faction's half minus its spawn band, or
    /// the middle axis when `None`.
    fn city_rows(&self, side: Option<Faction>) -> Vec<usize> {
        let n = self.dims.n_rows;
        match side {
            None => {
                let mut rows = vec![(n - 1) / 2, n / 2];
                rows.dedup();
                rows
            }
            Some(Faction::Blue) => (n / 2..self.blue_band().start).collect(),
            Some(Faction::Red) => (self.red_band().end..n.div_ceil(2)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioSeed(pub u64);

/// Generates one scenario. Blue spawns in the bottom rows, Red in the top rows.
pub fn generate(config: &ScenarioConfig, seed: ScenarioSeed) -> Result<GameState, ScenarioError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    for _ in 0..MAX_TRIES {
        if let Some(state) = try_generate(config, seed, &mut rng) {
            return Ok(state);
        }
    }
    Err(ScenarioError::Infeasible(MAX_TRIES))
}

fn try_generate(config: &ScenarioConfig, seed: ScenarioSeed, rng: &mut ChaCha8Rng) -> Option<GameState> {
    let dims = config.dims;
    let n_blue = *config.units_per_faction_choices.choose(rng)?;
    let n_red = *config.units_per_faction_choices.choose(rng)?;
    let n_cities = *config.city_count_choices.choose(rng)?;

    let side = match n_blue.cmp(&n_red) {
        std::cmp::Ordering::Less => Some(Faction::Blue),
        std::cmp::Ordering::Greater => Some(Faction::Red),
        std::cmp::Ordering::Equal => None,
    };
    let rows = config.city_rows(side);
    let mut city_cells: Vec<HexCoord> = rows
        .iter()
        .flat_map(|r| (0..dims.n_cols).map(move |c| HexCoord::new(*r, c)))
        .collect();
    if city_cells.len() < n_cities {
        return None;
    }
    city_cells.shuffle(rng);
    city_cells.truncate(n_cities);

    let mut terrain: Vec<Terrain> = (0..dims.len()).map(|_| config.terrain_mix.sample(rng)).collect();
    for h in dims.iter() {
        let in_band = config.blue_band().contains(&h.row) || config.red_band().contains(&h.row);
        let t = &mut terrain[dims.index(h)];
        if in_band && *t == Terrain::Water {
            *t = Terrain::Clear;
        }
    }
    for c in &city_cells {
        terrain[dims.index(*c)] = Terrain::Urban;
    }

    let mut units = Vec::with_capacity(n_blue + n_red);
    for (faction, count, band) in [
        (Faction::Blue, n_blue, config.blue_band()),
        (Faction::Red, n_red, config.red_band()),
    ] {
        let mut cells: Vec<HexCoord> = band
            .flat_map(|r| (0..dims.n_cols).map(move |c| HexCoord::new(r, c)))
            .filter(|h| terrain[dims.index(*h)].passable())
            .collect();
        if cells.len() < count {
            return None;
        }
        cells.shuffle(rng);
        let mut picked = cells[..count].to_vec();
        picked.sort();
        for pos in picked {
            units.push(Unit {
                id: units.len(),
                faction,
                utype: config.unit_type,
                strength: FULL_STRENGTH,
                pos,
                alive: true,
            });
        }
    }

    let mut state = GameState::new(dims, terrain, units, config.max_phases, seed.0).ok()?;
    state.elimination_ends = config.elimination_ends;
    Some(state)
}

/// A fixed set of scenarios replayed round-robin.
#[derive(Debug, Clone)]
pub struct ScenarioCycle {
    seeds: Vec<ScenarioSeed>,
    scenarios: Vec<GameState>,
}

impl ScenarioCycle {
    /// Draws `cycle_len` scenario seeds from `seed` and generates each once.
    pub fn new(config: &ScenarioConfig, seed: ScenarioSeed, cycle_len: usize) -> Result<Self, ScenarioError> {
        if cycle_len == 0 {
            return Err(ScenarioError::Config("cycle length must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
        let seeds: Vec<ScenarioSeed> = (0..cycle_len).map(|_| ScenarioSeed(rng.next_u64())).collect();
        let scenarios = seeds
            .iter()
            .map(|s| generate(config, *s))
            .collect::<Result<_, _>>()?;
        Ok(Self { seeds, scenarios })
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn index_for(&self, reset: usize) -> usize {
        reset % self.scenarios.len()
    }

    /// Starting state for the `reset`-th episode.
    pub fn reset(&self, reset: usize) -> GameState {
        self.scenarios[self.index_for(reset)].clone()
    }

    pub fn seed_for(&self, reset: usize) -> ScenarioSeed {
        self.seeds[self.index_for(reset)]
    }

    pub fn scenarios(&self) -> &[GameState] {
        &self.scenarios
    }
}

pub fn scenario_cycle(
    config: &ScenarioConfig,
    seed: ScenarioSeed,
    cycle_len: usize,
) -> Result<ScenarioCycle, ScenarioError> {
    ScenarioCycle::new(config, seed, cycle_len)
}

/// Board sketch plus roster/manager annotation.
pub fn describe(state: &GameState) -> String {
    let mut s = state.sketch();
    for f in [Faction::Blue, Faction::Red] {
        let n = state.alive_units(f).count();
        s.push_str(&format!(
            "{f:?}: {n} units, {} managers of 3\n",
            n / 3
        ));
    }
    let cities: Vec<String> = state.cities.iter().map(|c| c.hex.to_string()).collect();
    s.push_str(&format!("cities: {}\n", cities.join(" ")));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hexgrid::hex_distance;

    fn count(s: &GameState, f: Faction) -> usize {
        s.units.iter().filter(|u| u.faction == f).count()
    }

    #[test]
    fn counts_and_bands() {
        let cfg = ScenarioConfig::default();
        for seed in 0..200 {
            let s = generate(&cfg, ScenarioSeed(seed)).unwrap();
            let (b, r) = (count(&s, Faction::Blue), count(&s, Faction::Red));
            assert!([6, 9].contains(&b) && [6, 9].contains(&r));
            assert!([1, 2].contains(&s.cities.len()));
            assert_eq!(s.phase, 0);
            for u in &s.units {
                match u.faction {
                    Faction::Blue => assert!(u.pos.row >= 7),
                    Faction::Red => assert!(u.pos.row <= 2),
                }
                assert!(s.terrain_at(u.pos).passable());
                assert_eq!(u.strength, 100);
            }
            let mut pos: Vec<_> = s.units.iter().map(|u| u.pos).collect();
            pos.sort();
            pos.dedup();
            assert_eq!(pos.len(), s.units.len());
            for c in &s.cities {
                assert_eq!(c.owner, None);
                assert_eq!(s.terrain_at(c.hex), Terrain::Urban);
                match b.cmp(&r) {
                    std::cmp::Ordering::Equal => assert!([4, 5].contains(&c.hex.row)),
                    std::cmp::Ordering::Less => assert!((5..7).contains(&c.hex.row)),
                    std::cmp::Ordering::Greater => assert!((3..5).contains(&c.hex.row)),
                }
            }
        }
    }

    #[test]
    fn all_count_combinations_occur() {
        let cfg = ScenarioConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..200 {
            let s = generate(&cfg, ScenarioSeed(seed)).unwrap();
            seen.insert((count(&s, Faction::Blue), count(&s, Faction::Red), s.cities.len()));
        }
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn deterministic() {
        let cfg = ScenarioConfig::default();
        let a = serde_json::to_vec(&generate(&cfg, ScenarioSeed(7)).unwrap()).unwrap();
        let b = serde_json::to_vec(&generate(&cfg, ScenarioSeed(7)).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cycle_repeats() {
        let cfg = ScenarioConfig::default();
        let cyc = scenario_cycle(&cfg, ScenarioSeed(1), 10).unwrap();
        assert_eq!(cyc.reset(0), cyc.reset(10));
        assert_eq!(cyc.reset(3), cyc.reset(23));
        for i in 0..10 {
            for j in i + 1..10 {
                assert_ne!(cyc.reset(i).units, cyc.reset(j).units);
            }
        }
        let one = scenario_cycle(&cfg, ScenarioSeed(1), 1).unwrap();
        assert_eq!(one.reset(0), one.reset(5));
        assert!(scenario_cycle(&cfg, ScenarioSeed(1), 0).is_err());
    }

    #[test]
    fn forced_unit_count() {
        let cfg = ScenarioConfig {
            units_per_faction_choices: vec![9],
            ..Default::default()
        };
        let s = generate(&cfg, ScenarioSeed(1)).unwrap();
        assert_eq!(count(&s, Faction::Blue), 9);
        assert!(describe(&s).contains("Blue: 9 units, 3 managers"));
    }

    #[test]
    fn too_small_board_is_rejected() {
        let cfg = ScenarioConfig {
            dims: BoardDims::new(5, 5),
            ..Default::default()
        };
        assert!(matches!(
            generate(&cfg, ScenarioSeed(0)),
            Err(ScenarioError::BoardTooSmall(5, 5))
        ));
    }

    #[test]
    fn factions_start_far_apart() {
        let s = generate(&ScenarioConfig::default(), ScenarioSeed(11)).unwrap();
        for b in s.alive_units(Faction::Blue) {
            for r in s.alive_units(Faction::Red) {
                assert!(hex_distance(b.pos, r.pos) >= 5);
            }
        }
    }
}
