//! Radius-1 hexagonal stencils.
//!
//! Tap 0 is the center; taps 1..=6 follow [`Direction::ALL`], resolved with
//! the odd-r row parity of the center cell. Taps that fall off the board read
//! zero.

use serde::{Deserialize, Serialize};

use crate::hexgrid::{neighbor, BoardDims, Direction, HexCoord};
use crate::observation::ObsTensor;

pub const HEX_TAPS: usize = 7;

/// For every cell (row-major), the cell index read by each tap.
pub fn tap_table(dims: BoardDims) -> Vec<[Option<usize>; HEX_TAPS]> {
    dims.iter()
        .map(|c| {
            let mut taps = [None; HEX_TAPS];
            taps[0] = Some(dims.index(c));
            for (k, d) in Direction::ALL.iter().enumerate() {
                taps[k + 1] = neighbor(c, *d, dims).map(|n| dims.index(n));
            }
            taps
        })
        .collect()
}

/// Bias-free hex kernel; `weights` is laid out `[out][tap][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexKernel {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f64>,
}

impl HexKernel {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weights: vec![0.0; out_channels * HEX_TAPS * in_channels],
        }
    }

    pub fn weight(&self, out: usize, tap: usize, input: usize) -> f64 {
        self.weights[(out * HEX_TAPS + tap) * self.in_channels + input]
    }

    pub fn set(&mut self, out: usize, tap: usize, input: usize, v: f64) {
        self.weights[(out * HEX_TAPS + tap) * self.in_channels + input] = v;
    }

    /// Passes each input channel through unchanged.
    pub fn identity(channels: usize) -> Self {
        let mut k = Self::zeros(channels, channels);
        for c in 0..channels {
            k.set(c, 0, c, 1.0);
        }
        k
    }
}

/// `out(c', cell) = Σ_tap Σ_c w[c'][tap][c] · in(c, tap(cell))`.
pub fn hex_conv(input: &ObsTensor, kernel: &HexKernel) -> ObsTensor {
    assert_eq!(input.channels, kernel.in_channels, "kernel input width");
    let dims = BoardDims::new(input.height, input.width);
    let taps = tap_table(dims);
    let plane = input.plane();
    let mut out = ObsTensor::zeros(kernel.out_channels, input.height, input.width);
    for o in 0..kernel.out_channels {
        for (cell, cell_taps) in taps.iter().enumerate() {
            let mut acc = 0.0;
            for (t, src) in cell_taps.iter().enumerate() {
                if let Some(src) = src {
                    for c in 0..kernel.in_channels {
                        acc += kernel.weight(o, t, c) * input.data[c * plane + src];
                    }
                }
            }
            out.data[o * plane + cell] = acc;
        }
    }
    out
}

/// Tap positions of `c` as coordinates (center first).
pub fn tap_coords(c: HexCoord, dims: BoardDims) -> [Option<HexCoord>; HEX_TAPS] {
    let mut out = [None; HEX_TAPS];
    out[0] = Some(c);
    for (k, d) in Direction::ALL.iter().enumerate() {
        out[k + 1] = neighbor(c, *d, dims);
    }
    out
}
