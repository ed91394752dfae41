//! Hexagonal lattice geometry in offset coordinates.
//!
//! The board uses the "odd-r" layout: rows are horizontal, and every odd row is
//! shifted half a hex to the right. Row 0 is the top of the board. This is the
//! only layout used anywhere in the crate (observations, kernels, sketches).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Side length of the manager action lattice (7×7 = 49 actions).
pub const ACTION_GRID: usize = 7;
/// Number of discrete manager actions.
pub const NUM_AREA_ACTIONS: usize = ACTION_GRID * ACTION_GRID;
/// Radius of an objective area around its center hex.
pub const OBJECTIVE_RADIUS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HexError {
    #[error("coordinate ({row}, {col}) outside {n_rows}x{n_cols} board")]
    OutOfBounds {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("action index {0} out of range 0..49")]
    ActionIndex(usize),
}

/// Offset coordinate of a hex on the board.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HexCoord {
    pub row: usize,
    pub col: usize,
}

impl HexCoord {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    fn cube(self) -> (i64, i64, i64) {
        let r = self.row as i64;
        let q = self.col as i64 - (r - (r & 1)) / 2;
        (q, r, -q - r)
    }

    /// Neighbor in `dir` on the unbounded lattice, `None` if it would have a
    /// negative coordinate.
    pub fn step(self, dir: Direction) -> Option<HexCoord> {
        let (dr, dc) = dir.offset(self.row % 2 == 1);
        let row = self.row as i64 + dr;
        let col = self.col as i64 + dc;
        (row >= 0 && col >= 0).then(|| HexCoord::new(row as usize, col as usize))
    }
}

impl std::fmt::Display for HexCoord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoardDims {
    pub n_rows: usize,
    pub n_cols: usize,
}

impl Default for BoardDims {
    fn default() -> Self {
        Self {
            n_rows: 10,
            n_cols: 10,
        }
    }
}

impl BoardDims {
    pub const fn new(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols }
    }

    pub fn contains(&self, c: HexCoord) -> bool {
        c.row < self.n_rows && c.col < self.n_cols
    }

    pub fn check(&self, c: HexCoord) -> Result<(), HexError> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(HexError::OutOfBounds {
                row: c.row,
                col: c.col,
                n_rows: self.n_rows,
                n_cols: self.n_cols,
            })
        }
    }

    pub fn len(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major cell index.
    pub fn index(&self, c: HexCoord) -> usize {
        c.row * self.n_cols + c.col
    }

    pub fn coord(&self, index: usize) -> HexCoord {
        HexCoord::new(index / self.n_cols, index % self.n_cols)
    }

    /// All coordinates in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = HexCoord> + '_ {
        (0..self.n_rows).flat_map(move |r| (0..self.n_cols).map(move |c| HexCoord::new(r, c)))
    }

    /// Largest hex distance between two cells of the board.
    pub fn diameter(&self) -> u32 {
        let (r, c) = (self.n_rows - 1, self.n_cols - 1);
        let corners = [
            HexCoord::new(0, 0),
            HexCoord::new(0, c),
            HexCoord::new(r, 0),
            HexCoord::new(r, c),
        ];
        corners
            .iter()
            .flat_map(|a| corners.iter().map(move |b| hex_distance(*a, *b)))
            .max()
            .unwrap_or(0)
    }
}

/// The six lattice directions, in the fixed tap order used by hex kernels and
/// the directional action encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    East,
    NorthEast,
    NorthWest,
    West,
    SouthWest,
    SouthEast,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::East,
        Direction::NorthEast,
        Direction::NorthWest,
        Direction::West,
        Direction::SouthWest,
        Direction::SouthEast,
    ];

    /// (d_row, d_col) for a hex on an even (`odd_row == false`) or odd row.
    pub fn offset(self, odd_row: bool) -> (i64, i64) {
        use Direction::*;
        match (self, odd_row) {
            (East, _) => (0, 1),
            (West, _) => (0, -1),
            (NorthEast, false) => (-1, 0),
            (NorthWest, false) => (-1, -1),
            (SouthWest, false) => (1, -1),
            (SouthEast, false) => (1, 0),
            (NorthEast, true) => (-1, 1),
            (NorthWest, true) => (-1, 0),
            (SouthWest, true) => (1, 0),
            (SouthEast, true) => (1, 1),
        }
    }

    pub fn index(self) -> usize {
        Direction::ALL.iter().position(|d| *d == self).unwrap()
    }
}

/// Neighbor of `c` in direction `dir` if it lies on the board.
pub fn neighbor(c: HexCoord, dir: Direction, dims: BoardDims) -> Option<HexCoord> {
    c.step(dir).filter(|n| dims.contains(*n))
}

/// In-bounds lattice neighbors of `c`, sorted by (row, col).
pub fn hex_neighbors(c: HexCoord, dims: BoardDims) -> Result<Vec<HexCoord>, HexError> {
    dims.check(c)?;
    let mut out: Vec<HexCoord> = Direction::ALL
        .iter()
        .filter_map(|d| neighbor(c, *d, dims))
        .collect();
    out.sort();
    Ok(out)
}

/// Shortest-path length between two hexes on the unbounded lattice.
pub fn hex_distance(a: HexCoord, b: HexCoord) -> u32 {
    let (aq, ar, as_) = a.cube();
    let (bq, br, bs) = b.cube();
    ((aq - bq).abs().max((ar - br).abs()).max((as_ - bs).abs())) as u32
}

/// All in-bounds hexes within `radius` of `center`, sorted by (row, col).
pub fn super_hexagon(
    center: HexCoord,
    radius: u32,
    dims: BoardDims,
) -> Result<Vec<HexCoord>, HexError> {
    dims.check(center)?;
    let r = radius as usize;
    let rows = center.row.saturating_sub(r)..(center.row + r + 1).min(dims.n_rows);
    let mut out = Vec::new();
    for row in rows {
        let cols = center.col.saturating_sub(r + 1)..(center.col + r + 2).min(dims.n_cols);
        for col in cols {
            let h = HexCoord::new(row, col);
            if hex_distance(center, h) <= radius {
                out.push(h);
            }
        }
    }
    Ok(out)
}

/// Center hex of action cell (i, j) of the 7×7 lattice laid over the board.
pub fn action_center(i: usize, j: usize, dims: BoardDims) -> Result<HexCoord, HexError> {
    if i >= ACTION_GRID || j >= ACTION_GRID {
        return Err(HexError::ActionIndex(i * ACTION_GRID + j));
    }
    // floor((i + 0.5) * n / 7) evaluated exactly in integers
    let row = ((2 * i + 1) * dims.n_rows) / (2 * ACTION_GRID);
    let col = ((2 * j + 1) * dims.n_cols) / (2 * ACTION_GRID);
    Ok(HexCoord::new(row, col))
}

/// Objective area for flat action index `0..49`.
pub fn objective_area(action_index: usize, dims: BoardDims) -> Result<Vec<HexCoord>, HexError> {
    if action_index >= NUM_AREA_ACTIONS {
        return Err(HexError::ActionIndex(action_index));
    }
    let center = action_center(action_index / ACTION_GRID, action_index % ACTION_GRID, dims)?;
    super_hexagon(center, OBJECTIVE_RADIUS, dims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::{BTreeSet, VecDeque};

    /// Neighbors straight from the odd-r definition, without the direction table.
    fn oracle_neighbors(c: HexCoord, dims: BoardDims) -> BTreeSet<HexCoord> {
        let (r, col) = (c.row as i64, c.col as i64);
        let deltas: [(i64, i64); 6] = if r % 2 == 0 {
            [(-1, -1), (-1, 0), (0, -1), (0, 1), (1, -1), (1, 0)]
        } else {
            [(-1, 0), (-1, 1), (0, -1), (0, 1), (1, 0), (1, 1)]
        };
        deltas
            .iter()
            .map(|(dr, dc)| (r + dr, col + dc))
            .filter(|(a, b)| *a >= 0 && *b >= 0)
            .map(|(a, b)| HexCoord::new(a as usize, b as usize))
            .filter(|h| dims.contains(*h))
            .collect()
    }

    fn bfs(from: HexCoord, dims: BoardDims) -> Vec<Option<u32>> {
        let mut dist = vec![None; dims.len()];
        dist[dims.index(from)] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(c) = queue.pop_front() {
            let d = dist[dims.index(c)].unwrap();
            for n in oracle_neighbors(c, dims) {
                if dist[dims.index(n)].is_none() {
                    dist[dims.index(n)] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    #[test]
    fn interior_has_six_neighbors() {
        let dims = BoardDims::default();
        assert_eq!(hex_neighbors(HexCoord::new(4, 4), dims).unwrap().len(), 6);
        assert_eq!(hex_neighbors(HexCoord::new(5, 5), dims).unwrap().len(), 6);
    }

    #[test]
    fn corner_neighbors_match_enumeration() {
        let dims = BoardDims::default();
        for c in dims.iter() {
            let got: BTreeSet<_> = hex_neighbors(c, dims).unwrap().into_iter().collect();
            assert_eq!(got, oracle_neighbors(c, dims), "at {c}");
        }
        let origin = hex_neighbors(HexCoord::new(0, 0), dims).unwrap();
        assert_eq!(origin, vec![HexCoord::new(0, 1), HexCoord::new(1, 0)]);
    }

    #[test]
    fn out_of_bounds_is_an_error() {
        let dims = BoardDims::default();
        assert!(matches!(
            hex_neighbors(HexCoord::new(10, 0), dims),
            Err(HexError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn neighbors_are_sorted() {
        let dims = BoardDims::default();
        let ns = hex_neighbors(HexCoord::new(3, 7), dims).unwrap();
        let mut sorted = ns.clone();
        sorted.sort();
        assert_eq!(ns, sorted);
    }

    #[test]
    fn distance_matches_bfs_on_padded_board() {
        // a 10x10 board embedded at offset (10, 10) of a 30x30 board; the
        // embedding keeps row parity so the lattice is the same
        let big = BoardDims::new(30, 30);
        let shift = |c: HexCoord| HexCoord::new(c.row + 10, c.col + 10);
        let dims = BoardDims::default();
        for a in dims.iter() {
            let dist = bfs(shift(a), big);
            for b in dims.iter() {
                assert_eq!(
                    Some(hex_distance(a, b)),
                    dist[big.index(shift(b))],
                    "{a} -> {b}"
                );
            }
        }
    }

    #[test]
    fn distance_basics() {
        let a = HexCoord::new(3, 3);
        assert_eq!(hex_distance(a, a), 0);
        for n in hex_neighbors(a, BoardDims::default()).unwrap() {
            assert_eq!(hex_distance(a, n), 1);
        }
    }

    #[test]
    fn super_hexagon_sizes() {
        let dims = BoardDims::default();
        assert_eq!(super_hexagon(HexCoord::new(5, 5), 2, dims).unwrap().len(), 19);
        assert_eq!(
            super_hexagon(HexCoord::new(5, 5), 0, dims).unwrap(),
            vec![HexCoord::new(5, 5)]
        );
    }

    #[test]
    fn corner_super_hexagon_is_clipped_bfs_ball() {
        let dims = BoardDims::default();
        let center = HexCoord::new(0, 0);
        let dist = bfs(center, dims);
        let expected: Vec<HexCoord> = dims
            .iter()
            .filter(|h| dist[dims.index(*h)].is_some_and(|d| d <= 2))
            .collect();
        assert_eq!(super_hexagon(center, 2, dims).unwrap(), expected);
    }

    #[test]
    fn action_centers() {
        let dims = BoardDims::default();
        assert_eq!(action_center(0, 0, dims).unwrap(), HexCoord::new(0, 0));
        assert_eq!(action_center(3, 3, dims).unwrap(), HexCoord::new(5, 5));
        assert_eq!(action_center(6, 6, dims).unwrap(), HexCoord::new(9, 9));
        let mut idx = BTreeSet::new();
        for i in 0..ACTION_GRID {
            for j in 0..ACTION_GRID {
                let c = action_center(i, j, dims).unwrap();
                assert!(dims.contains(c));
                let expected_row = ((i as f64 + 0.5) * 10.0 / 7.0).floor() as usize;
                assert_eq!(c.row, expected_row);
                idx.insert(i * ACTION_GRID + j);
            }
        }
        assert_eq!(idx.len(), NUM_AREA_ACTIONS);
        assert!(action_center(7, 0, dims).is_err());
    }

    #[test]
    fn small_boards_allow_duplicate_centers() {
        let dims = BoardDims::new(3, 3);
        for i in 0..ACTION_GRID {
            for j in 0..ACTION_GRID {
                assert!(dims.contains(action_center(i, j, dims).unwrap()));
            }
        }
    }

    #[test]
    fn objective_area_of_center_action() {
        let dims = BoardDims::default();
        let area = objective_area(24, dims).unwrap();
        assert_eq!(area, super_hexagon(HexCoord::new(5, 5), 2, dims).unwrap());
        assert!(objective_area(49, dims).is_err());
    }

    #[test]
    fn diameter_of_default_board() {
        let dims = BoardDims::default();
        let brute = dims
            .iter()
            .flat_map(|a| dims.iter().map(move |b| hex_distance(a, b)))
            .max()
            .unwrap();
        assert_eq!(dims.diameter(), brute);
    }

    fn coord() -> impl Strategy<Value = HexCoord> {
        (0usize..10, 0usize..10).prop_map(|(r, c)| HexCoord::new(r, c))
    }

    proptest! {
        #[test]
        fn adjacency_is_symmetric(a in coord(), b in coord()) {
            let dims = BoardDims::default();
            let ab = hex_neighbors(a, dims).unwrap().contains(&b);
            let ba = hex_neighbors(b, dims).unwrap().contains(&a);
            prop_assert_eq!(ab, ba);
        }

        #[test]
        fn distance_is_a_metric(a in coord(), b in coord(), c in coord()) {
            prop_assert_eq!(hex_distance(a, b), hex_distance(b, a));
            prop_assert_eq!(hex_distance(a, b) == 0, a == b);
            prop_assert!(hex_distance(a, c) <= hex_distance(a, b) + hex_distance(b, c));
        }

        #[test]
        fn interior_ball_has_nineteen(r in 2usize..8, c in 2usize..8) {
            let area = super_hexagon(HexCoord::new(r, c), 2, BoardDims::default()).unwrap();
            prop_assert_eq!(area.len(), 19);
        }
    }
}
