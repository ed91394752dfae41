//! Observation tensors.
//!
//! `base_channels` produces the 15 board channels shared by both agents:
//!
//! | channel | content |
//! |---------|---------|
//! | 0, 1    | own / enemy unit health (strength / 100) |
//! | 2..=5   | unit type one-hot (Infantry, Mechanized, Armor, Artillery) |
//! | 6..=10  | terrain one-hot (Clear, Water, Rough, Urban, Marsh) |
//! | 11, 12  | city owned by own / enemy faction |
//! | 13      | phase / max_phases, constant over the board |
//! | 14      | clamp(score / 1000, -1, 1), constant over the board |
//!
//! "Own" is Blue for the default perspective; a Red perspective swaps the
//! faction channels and negates the score.
//!
//! The manager observation prepends its roster and the other managers'
//! objective areas and reduces everything to 7×7 by area-weighted
//! accumulation. The individual observation prepends the on-move unit, the
//! units still to act, and the on-move unit's legal destinations, and keeps
//! the full board resolution.

use serde::{Deserialize, Serialize};

use crate::engine::{ActionCmd, EngineError, Faction, GameState, UnitId};
use crate::hexgrid::ACTION_GRID;
use crate::hybrid::ManagerState;

pub const BASE_CHANNELS: usize = 15;
pub const MANAGER_CHANNELS: usize = 17;
pub const INDIVIDUAL_CHANNELS: usize = 18;
pub const SCORE_SCALE: f64 = 1000.0;

/// channels × height × width, row-major by (channel, row, col).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ObsTensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn at(&self, c: usize, r: usize, col: usize) -> f64 {
        self.data[(c * self.height + r) * self.width + col]
    }

    pub fn set(&mut self, c: usize, r: usize, col: usize, v: f64) {
        self.data[(c * self.height + r) * self.width + col] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.plane()..(c + 1) * self.plane()]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let p = self.plane();
        &mut self.data[c * p..(c + 1) * p]
    }

    pub fn channel_sum(&self, c: usize) -> f64 {
        self.channel(c).iter().sum()
    }

    /// Stacks `self` on top of `other` along the channel axis.
    pub fn concat(mut self, other: &ObsTensor) -> ObsTensor {
        assert_eq!((self.height, self.width), (other.height, other.width));
        self.channels += other.channels;
        self.data.extend_from_slice(&other.data);
        self
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|v| *v as f32).collect()
    }

    /// One text grid per channel, values printed with 4 decimals.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for c in 0..self.channels {
            s.push_str(&format!("# channel {c}\n"));
            for r in 0..self.height {
                let row: Vec<String> = (0..self.width).map(|j| format!("{:.4}", self.at(c, r, j))).collect();
                s.push_str(&row.join(" "));
                s.push('\n');
            }
        }
        s
    }
}

pub fn base_channels(state: &GameState) -> ObsTensor {
    base_channels_for(state, Faction::Blue)
}

pub fn base_channels_for(state: &GameState, own: Faction) -> ObsTensor {
    let dims = state.dims;
    let mut t = ObsTensor::zeros(BASE_CHANNELS, dims.n_rows, dims.n_cols);
    for u in state.units.iter().filter(|u| u.alive) {
        let (r, c) = (u.pos.row, u.pos.col);
        let health = if u.faction == own { 0 } else { 1 };
        t.set(health, r, c, u.strength as f64 / 100.0);
        t.set(2 + u.utype.index(), r, c, 1.0);
    }
    for h in dims.iter() {
        t.set(6 + state.terrain_at(h).index(), h.row, h.col, 1.0);
    }
    for city in &state.cities {
        if let Some(owner) = city.owner {
            let ch = if owner == own { 11 } else { 12 };
            t.set(ch, city.hex.row, city.hex.col, 1.0);
        }
    }
    let phase = state.phase as f64 / state.max_phases.max(1) as f64;
    t.channel_mut(13).fill(phase);
    let score = (state.score.total_for(own) as f64 / SCORE_SCALE).clamp(-1.0, 1.0);
    t.channel_mut(14).fill(score);
    t
}

/// Fraction of input interval [i, i+1) covered by output cell p when `n`
/// input cells map onto `out` output cells.
fn overlap_weights(n: usize, out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n as f64 / out as f64;
    (0..out)
        .map(|p| {
            let lo = p as f64 * scale;
            let hi = (p + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n);
            (first..last)
                .filter_map(|i| {
                    let w = (hi.min((i + 1) as f64) - lo.max(i as f64)).max(0.0);
                    (w > 0.0).then_some((i, w))
                })
                .collect()
        })
        .collect()
}

/// Area-weighted reduction of every channel to `out_h × out_w`.
/// Each output cell sums its inputs weighted by the overlapped area, so
/// per-channel totals are preserved.
pub fn coarse_abstract(t: &ObsTensor, out_h: usize, out_w: usize) -> ObsTensor {
    assert!(out_h >= 1 && out_w >= 1, "output grid must be non-empty");
    let rows = overlap_weights(t.height, out_h);
    let cols = overlap_weights(t.width, out_w);
    let mut out = ObsTensor::zeros(t.channels, out_h, out_w);
    for c in 0..t.channels {
        for (p, rw) in rows.iter().enumerate() {
            for (q, cw) in cols.iter().enumerate() {
                let mut acc = 0.0;
                for &(i, wi) in rw {
                    for &(j, wj) in cw {
                        acc += t.at(c, i, j) * wi * wj;
                    }
                }
                out.set(c, p, q, acc);
            }
        }
    }
    out
}

/// 17 × 7 × 7 observation for manager `mgr` of the faction on move.
pub fn manager_observation(state: &GameState, mgr: &ManagerState, all: &[ManagerState]) -> ObsTensor {
    let dims = state.dims;
    let mut head = ObsTensor::zeros(2, dims.n_rows, dims.n_cols);
    for id in &mgr.unit_ids {
        let u = &state.units[*id];
        if u.alive {
            head.set(0, u.pos.row, u.pos.col, 1.0);
        }
    }
    for other in all.iter().filter(|o| o.manager_id != mgr.manager_id && o.faction == mgr.faction) {
        if let Some(obj) = &other.objective {
            for h in &obj.area {
                head.set(1, h.row, h.col, 1.0);
            }
        }
    }
    let full = head.concat(&base_channels_for(state, mgr.faction));
    coarse_abstract(&full, ACTION_GRID, ACTION_GRID)
}

/// 18 × n × m observation for one unit of the faction on move.
pub fn individual_observation(state: &GameState, unit_id: UnitId) -> Result<ObsTensor, EngineError> {
    let legal = state.legal_actions(unit_id)?;
    let dims = state.dims;
    let unit = &state.units[unit_id];
    let mut head = ObsTensor::zeros(3, dims.n_rows, dims.n_cols);
    head.set(0, unit.pos.row, unit.pos.col, 1.0);
    for id in state.pending_units() {
        let p = state.units[id].pos;
        head.set(1, p.row, p.col, 1.0);
    }
    for a in legal {
        if let ActionCmd::Move { to } = a {
            head.set(2, to.row, to.col, 1.0);
        }
    }
    Ok(head.concat(&base_channels_for(state, unit.faction)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::test_support::{board, unit};
    use crate::hybrid::{assign_managers, set_objective};
    use crate::scenario::{generate, ScenarioConfig, ScenarioSeed};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Brute-force reduction: integrate each output rectangle against each
    /// input unit square by sampling a fine sub-grid.
    fn sampled_abstract(t: &ObsTensor, out_h: usize, out_w: usize, k: usize) -> ObsTensor {
        let mut out = ObsTensor::zeros(t.channels, out_h, out_w);
        let (sh, sw) = (t.height as f64 / out_h as f64, t.width as f64 / out_w as f64);
        for c in 0..t.channels {
            for i in 0..t.height {
                for j in 0..t.width {
                    let v = t.at(c, i, j);
                    for a in 0..k {
                        for b in 0..k {
                            let y = i as f64 + (a as f64 + 0.5) / k as f64;
                            let x = j as f64 + (b as f64 + 0.5) / k as f64;
                            let p = ((y / sh) as usize).min(out_h - 1);
                            let q = ((x / sw) as usize).min(out_w - 1);
                            let cur = out.at(c, p, q);
                            out.set(c, p, q, cur + v / (k * k) as f64);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn uniform_field() {
        let mut t = ObsTensor::zeros(1, 10, 10);
        t.data.fill(1.0);
        let o = coarse_abstract(&t, 7, 7);
        for v in &o.data {
            assert!((v - 100.0 / 49.0).abs() < 1e-12);
        }
        let mut t = ObsTensor::zeros(1, 14, 14);
        t.data.fill(1.0);
        for v in coarse_abstract(&t, 7, 7).data {
            assert!((v - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn corner_delta_stays_in_corner() {
        let mut t = ObsTensor::zeros(1, 10, 10);
        t.set(0, 0, 0, 1.0);
        let o = coarse_abstract(&t, 7, 7);
        assert!((o.at(0, 0, 0) - 1.0).abs() < 1e-12);
        assert!((o.channel_sum(0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_sampled_integration() {
        // with 70 sub-samples per input cell every 10/7 boundary falls on a
        // sub-sample edge, so the sampled sum is exact
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut t = ObsTensor::zeros(2, 10, 10);
        t.data.iter_mut().for_each(|v| *v = rng.gen::<f64>());
        let a = coarse_abstract(&t, 7, 7);
        let b = sampled_abstract(&t, 7, 7, 70);
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn locality() {
        for i in 0..10 {
            for j in 0..10 {
                let mut t = ObsTensor::zeros(1, 10, 10);
                t.set(0, i, j, 1.0);
                let o = coarse_abstract(&t, 7, 7);
                for p in 0..7 {
                    for q in 0..7 {
                        let (lo_r, hi_r) = (p as f64 * 10.0 / 7.0, (p + 1) as f64 * 10.0 / 7.0);
                        let (lo_c, hi_c) = (q as f64 * 10.0 / 7.0, (q + 1) as f64 * 10.0 / 7.0);
                        let touches = (i as f64) < hi_r
                            && (i + 1) as f64 > lo_r
                            && (j as f64) < hi_c
                            && (j + 1) as f64 > lo_c;
                        if !touches {
                            assert_eq!(o.at(0, p, q), 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn base_channel_contents() {
        let mut s = board(
            vec![unit(0, Faction::Blue, 5, 5), unit(1, Faction::Red, 0, 0)],
            &[(5, 6)],
        );
        let t = base_channels(&s);
        assert_eq!(t.channels, 15);
        assert_eq!(t.channel_sum(11), 0.0);
        assert_eq!(t.channel_sum(12), 0.0);
        assert_eq!(t.at(0, 5, 5), 1.0);
        assert_eq!(t.at(1, 0, 0), 1.0);
        assert_eq!(t.at(2, 5, 5), 1.0);
        assert_eq!(t.at(9, 5, 6), 1.0);
        for h in s.dims.iter() {
            let sum: f64 = (6..11).map(|c| t.at(c, h.row, h.col)).sum();
            assert_eq!(sum, 1.0);
        }
        s.phase = 20;
        let t = base_channels(&s);
        assert!(t.channel(13).iter().all(|v| *v == 0.5));
        s.score.blue_combat = 5000;
        assert!(base_channels(&s).channel(14).iter().all(|v| *v == 1.0));
        let red = base_channels_for(&s, Faction::Red);
        assert_eq!(red.at(0, 0, 0), 1.0);
        assert!(red.channel(14).iter().all(|v| *v == -1.0));
    }

    #[test]
    fn manager_observation_shape_and_mass() {
        let s = generate(&ScenarioConfig::default(), ScenarioSeed(3)).unwrap();
        let ms = assign_managers(&s, Faction::Blue).unwrap();
        let ms: Vec<ManagerState> = ms
            .iter()
            .enumerate()
            .map(|(k, m)| set_objective(m, 10 + k, s.dims).unwrap())
            .collect();
        let o = manager_observation(&s, &ms[0], &ms);
        assert_eq!((o.channels, o.height, o.width), (17, 7, 7));
        assert!((o.channel_sum(0) - 3.0).abs() < 1e-9);
        let solo = manager_observation(&s, &ms[0], &ms[..1]);
        assert_eq!(solo.channel_sum(1), 0.0);
        assert!(o.channel_sum(1) > 0.0);
    }

    #[test]
    fn individual_observation_layout() {
        let s = generate(&ScenarioConfig::default(), ScenarioSeed(5)).unwrap();
        let id = s.pending_units()[0];
        let o = individual_observation(&s, id).unwrap();
        assert_eq!((o.channels, o.height, o.width), (18, 10, 10));
        assert_eq!(o.channel_sum(0), 1.0);
        assert_eq!(o.channel_sum(1) as usize, s.pending_units().len());
        let moves: Vec<_> = s
            .legal_actions(id)
            .unwrap()
            .into_iter()
            .filter_map(|a| match a {
                ActionCmd::Move { to } => Some(to),
                _ => None,
            })
            .collect();
        let ones: Vec<_> = s.dims.iter().filter(|h| o.at(2, h.row, h.col) == 1.0).collect();
        assert_eq!(ones, moves);
        assert_eq!(&o.data[3 * 100..], &base_channels(&s).data[..]);
    }

    #[test]
    fn dump_has_one_block_per_channel() {
        let t = ObsTensor::zeros(3, 2, 2);
        assert_eq!(t.dump().matches("# channel").count(), 3);
    }

    proptest! {
        #[test]
        fn mass_and_linearity(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut x = ObsTensor::zeros(3, 10, 10);
            let mut y = ObsTensor::zeros(3, 10, 10);
            x.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
            y.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
            let ax = coarse_abstract(&x, 7, 7);
            for c in 0..3 {
                let abs: f64 = x.channel(c).iter().map(|v| v.abs()).sum();
                prop_assert!((x.channel_sum(c) - ax.channel_sum(c)).abs() <= 1e-9 * abs + 1e-12);
            }
            let mut z = x.clone();
            z.data.iter_mut().zip(&y.data).for_each(|(v, w)| *v = a * *v + b * w);
            let az = coarse_abstract(&z, 7, 7);
            let ay = coarse_abstract(&y, 7, 7);
            for k in 0..az.data.len() {
                let want = a * ax.data[k] + b * ay.data[k];
                prop_assert!((az.data[k] - want).abs() <= 1e-9 * (want.abs() + 1.0));
            }
        }
    }
}
