//! Residual value network with hand-written forward and backward passes.
//!
//! Layout: an input convolution to `hidden` channels with a rectifier, then
//! `layers` residual blocks `h ← h + relu(conv(h))`, then the board is
//! flattened and passed through an affine map to `features` units with a
//! rectifier, and a final affine map to one value per action. Convolutions
//! are either 1×1 (per-cell affine maps) or 7-tap hex stencils.
//!
//! Activations are stored cell-major: a batch is a matrix with one row per
//! (sample, cell) and one column per channel, so every convolution is a
//! single matrix product.

mod gradcheck;
mod hexconv;
mod modelfile;

pub use gradcheck::{compare_gradients, grad_check, GradCheckReport};
pub use hexconv::{hex_conv, tap_coords, tap_table, HexKernel, HEX_TAPS};
pub use modelfile::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hexgrid::{BoardDims, ACTION_GRID, NUM_AREA_ACTIONS};
use crate::observation::{ObsTensor, INDIVIDUAL_CHANNELS, MANAGER_CHANNELS};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scalar type the network can run in.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + Send
    + Sync
    + std::fmt::Debug
    + std::iter::Sum
    + std::ops::AddAssign
    + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).unwrap()
    }
    fn f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    Pointwise,
    Hex,
}

impl KernelKind {
    pub fn taps(self) -> usize {
        match self {
            KernelKind::Pointwise => 1,
            KernelKind::Hex => HEX_TAPS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub hidden: usize,
    pub layers: usize,
    pub features: usize,
    pub actions: usize,
    pub kernel: KernelKind,
}

impl Architecture {
    /// 17×7×7 input, 64 channels, 7 residual layers, 512 features, 49 actions.
    pub fn manager() -> Self {
        Self {
            in_channels: MANAGER_CHANNELS,
            height: ACTION_GRID,
            width: ACTION_GRID,
            hidden: 64,
            layers: 7,
            features: 512,
            actions: NUM_AREA_ACTIONS,
            kernel: KernelKind::Pointwise,
        }
    }

    /// Same tower on the full 18×n×m board with hex kernels.
    pub fn individual(dims: BoardDims, actions: usize) -> Self {
        Self {
            in_channels: INDIVIDUAL_CHANNELS,
            height: dims.n_rows,
            width: dims.n_cols,
            hidden: 64,
            layers: 7,
            features: 512,
            actions,
            kernel: KernelKind::Hex,
        }
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.cells()
    }

    /// (rows, cols) of each weight matrix in canonical order.
    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        let taps = self.kernel.taps();
        let mut out = vec![(self.hidden, taps * self.in_channels)];
        out.extend((0..self.layers).map(|_| (self.hidden, taps * self.hidden)));
        out.push((self.features, self.cells() * self.hidden));
        out.push((self.actions, self.features));
        out
    }

    pub fn param_count(&self) -> usize {
        self.weight_shapes().iter().map(|(r, c)| r * c + r).sum()
    }
}

/// Affine map `y = W x + b`, `W` is `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
}

impl<T: Real> Affine<T> {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            w: Array2::zeros((out, inp)),
            b: Array1::zeros(out),
        }
    }

    /// Rows of `x` are inputs: returns `x Wᵀ + b`.
    fn apply(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut y = x.dot(&self.w.t());
        y += &self.b;
        y
    }
}

/// All weights and biases; also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Layers<T> {
    /// Input convolution followed by the residual tower.
    pub conv: Vec<Affine<T>>,
    pub head: Affine<T>,
    pub out: Affine<T>,
}

impl<T: Real> Layers<T> {
    pub fn zeros(arch: &Architecture) -> Self {
        let mut shapes = arch.weight_shapes().into_iter().map(|(r, c)| Affine::zeros(r, c));
        let conv = (0..=arch.layers).map(|_| shapes.next().unwrap()).collect();
        let head = shapes.next().unwrap();
        let out = shapes.next().unwrap();
        Self { conv, head, out }
    }

    fn affines(&self) -> impl Iterator<Item = &Affine<T>> {
        self.conv.iter().chain([&self.head, &self.out])
    }

    fn affines_mut(&mut self) -> impl Iterator<Item = &mut Affine<T>> {
        self.conv.iter_mut().chain([&mut self.head, &mut self.out])
    }

    /// Parameter tensors in canonical order: each layer's weights then bias.
    pub fn tensors(&self) -> Vec<&[T]> {
        self.affines()
            .flat_map(|a| [a.w.as_slice().unwrap(), a.b.as_slice().unwrap()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.affines_mut()
            .flat_map(|a| {
                let Affine { w, b } = a;
                [w.as_slice_mut().unwrap(), b.as_slice_mut().unwrap()]
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self) -> Vec<T> {
        self.tensors().into_iter().flatten().copied().collect()
    }

    pub fn get(&self, mut i: usize) -> T {
        for t in self.tensors() {
            if i < t.len() {
                return t[i];
            }
            i -= t.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set(&mut self, mut i: usize, v: T) {
        for t in self.tensors_mut() {
            if i < t.len() {
                t[i] = v;
                return;
            }
            i -= t.len();
        }
        panic!("parameter index out of range")
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v.f64() * v.f64())
            .sum()
    }

    pub fn scale(&mut self, k: T) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = *v * k);
        }
    }

    pub fn cast<U: Real>(&self) -> Layers<U> {
        let conv_a = |a: &Affine<T>| Affine {
            w: a.w.mapv(|v| U::lit(v.f64())),
            b: a.b.mapv(|v| U::lit(v.f64())),
        };
        Layers {
            conv: self.conv.iter().map(conv_a).collect(),
            head: conv_a(&self.head),
            out: conv_a(&self.out),
        }
    }
}

/// Intermediate values kept for the backward pass.
pub struct ForwardCache<T> {
    batch: usize,
    /// Convolution inputs (gathered taps for hex kernels), per conv layer.
    cols: Vec<Array2<T>>,
    /// Pre-activations per conv layer.
    pre: Vec<Array2<T>>,
    flat: Array2<T>,
    head_pre: Array2<T>,
    features: Array2<T>,
}

impl<T: Real> ForwardCache<T> {
    /// Smallest |pre-activation| over every rectifier.
    pub fn relu_margin(&self) -> f64 {
        self.pre
            .iter()
            .chain([&self.head_pre])
            .flat_map(|a| a.iter())
            .map(|v| v.f64().abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Feature vectors after the head rectifier, `[batch, features]`.
    pub fn features(&self) -> &Array2<T> {
        &self.features
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork<T> {
    pub arch: Architecture,
    pub seed: u64,
    pub params: Layers<T>,
    taps: Vec<[Option<usize>; HEX_TAPS]>,
}

/// GEMM output can come back column-major when a dimension is 1.
fn row_major<T: Real>(a: Array2<T>) -> Array2<T> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn relu<T: Real>(a: &Array2<T>) -> Array2<T> {
    a.mapv(|v| v.max(T::zero()))
}

impl<T: Real> QNetwork<T> {
    pub fn zeros(arch: Architecture, seed: u64) -> Self {
        Self {
            arch,
            seed,
            params: Layers::zeros(&arch),
            taps: tap_table(BoardDims::new(arch.height, arch.width)),
        }
    }

    /// Uniform(−1/√fan_in, 1/√fan_in) for weights and biases.
    pub fn new(arch: Architecture, seed: u64) -> Self {
        let mut net = Self::zeros(arch, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for a in net.params.affines_mut() {
            let bound = 1.0 / (a.w.ncols() as f64).sqrt();
            a.w.iter_mut().for_each(|v| *v = T::lit(rng.gen_range(-bound..bound)));
            a.b.iter_mut().for_each(|v| *v = T::lit(rng.gen_range(-bound..bound)));
        }
        net
    }

    pub fn from_params(arch: Architecture, seed: u64, params: Layers<T>) -> Self {
        let mut net = Self::zeros(arch, seed);
        net.params = params;
        net
    }

    pub fn cast<U: Real>(&self) -> QNetwork<U> {
        QNetwork::from_params(self.arch, self.seed, self.params.cast())
    }

    fn check_obs(&self, len: usize) -> Result<(), NetError> {
        if len != self.arch.input_len() {
            return Err(NetError::Shape {
                expected: format!(
                    "{}x{}x{} = {}",
                    self.arch.in_channels,
                    self.arch.height,
                    self.arch.width,
                    self.arch.input_len()
                ),
                got: len.to_string(),
            });
        }
        Ok(())
    }

    /// Channel-major inputs → cell-major `[batch·cells, channels]`.
    fn input_matrix(&self, batch: &[&[T]]) -> Result<Array2<T>, NetError> {
        let cells = self.arch.cells();
        let ch = self.arch.in_channels;
        let mut x = Array2::zeros((batch.len() * cells, ch));
        for (b, obs) in batch.iter().enumerate() {
            self.check_obs(obs.len())?;
            for c in 0..ch {
                for cell in 0..cells {
                    x[[b * cells + cell, c]] = obs[c * cells + cell];
                }
            }
        }
        Ok(x)
    }

    /// Gathers the convolution input for every (sample, cell) row.
    fn gather(&self, h: &Array2<T>, batch: usize) -> Array2<T> {
        match self.arch.kernel {
            KernelKind::Pointwise => h.clone(),
            KernelKind::Hex => {
                let cells = self.arch.cells();
                let ch = h.ncols();
                let mut cols = Array2::zeros((h.nrows(), HEX_TAPS * ch));
                for b in 0..batch {
                    for (cell, taps) in self.taps.iter().enumerate() {
                        let row = b * cells + cell;
                        for (t, src) in taps.iter().enumerate() {
                            if let Some(src) = src {
                                cols.slice_mut(s![row, t * ch..(t + 1) * ch])
                                    .assign(&h.row(b * cells + src));
                            }
                        }
                    }
                }
                cols
            }
        }
    }

    /// Adjoint of [`gather`](Self::gather).
    fn scatter(&self, dcols: Array2<T>, batch: usize) -> Array2<T> {
        match self.arch.kernel {
            KernelKind::Pointwise => dcols,
            KernelKind::Hex => {
                let cells = self.arch.cells();
                let ch = dcols.ncols() / HEX_TAPS;
                let mut dh = Array2::zeros((dcols.nrows(), ch));
                for b in 0..batch {
                    for (cell, taps) in self.taps.iter().enumerate() {
                        let row = b * cells + cell;
                        for (t, src) in taps.iter().enumerate() {
                            if let Some(src) = src {
                                let mut dst = dh.row_mut(b * cells + src);
                                dst += &dcols.slice(s![row, t * ch..(t + 1) * ch]);
                            }
                        }
                    }
                }
                dh
            }
        }
    }

    /// Residual tower output for one observation, `[cells, hidden]`.
    pub fn tower(&self, obs: &[T]) -> Result<Array2<T>, NetError> {
        let x = self.input_matrix(&[obs])?;
        let (h, _, _) = self.run_tower(x, 1);
        Ok(h)
    }

    fn run_tower(&self, x: Array2<T>, batch: usize) -> (Array2<T>, Vec<Array2<T>>, Vec<Array2<T>>) {
        let mut cols = Vec::with_capacity(self.params.conv.len());
        let mut pre = Vec::with_capacity(self.params.conv.len());
        let c0 = self.gather(&x, batch);
        let z0 = self.params.conv[0].apply(c0.view());
        let mut h = relu(&z0);
        cols.push(c0);
        pre.push(z0);
        for layer in &self.params.conv[1..] {
            let c = self.gather(&h, batch);
            let z = layer.apply(c.view());
            Zip::from(&mut h).and(&z).for_each(|hv, zv| *hv = *hv + zv.max(T::zero()));
            cols.push(c);
            pre.push(z);
        }
        (h, cols, pre)
    }

    /// Q-values for a batch of channel-major observations, `[batch, actions]`.
    pub fn forward_batch(&self, batch: &[&[T]]) -> Result<(Array2<T>, ForwardCache<T>), NetError> {
        let n = batch.len();
        let x = self.input_matrix(batch)?;
        let (h, cols, pre) = self.run_tower(x, n);
        let flat = row_major(h)
            .into_shape_with_order((n, self.arch.cells() * self.arch.hidden))
            .expect("contiguous tower output");
        let head_pre = self.params.head.apply(flat.view());
        let features = relu(&head_pre);
        let q = self.params.out.apply(features.view());
        Ok((
            q,
            ForwardCache {
                batch: n,
                cols,
                pre,
                flat,
                head_pre,
                features,
            },
        ))
    }

    /// Q-values only, without keeping the cache.
    pub fn q_values_batch(&self, batch: &[&[T]]) -> Result<Array2<T>, NetError> {
        Ok(self.forward_batch(batch)?.0)
    }

    pub fn forward_raw(&self, obs: &[T]) -> Result<Vec<T>, NetError> {
        let q = self.q_values_batch(&[obs])?;
        Ok(q.row(0).to_vec())
    }

    pub fn forward(&self, obs: &ObsTensor) -> Result<Vec<T>, NetError> {
        self.forward_raw(&self.convert(obs))
    }

    /// 512-wide feature vector (after the head rectifier) for one observation.
    pub fn features(&self, obs: &ObsTensor) -> Result<Vec<T>, NetError> {
        let x = self.convert(obs);
        let (_, cache) = self.forward_batch(&[&x])?;
        Ok(cache.features.row(0).to_vec())
    }

    pub fn convert(&self, obs: &ObsTensor) -> Vec<T> {
        obs.data.iter().map(|v| T::lit(*v)).collect()
    }

    /// Parameter gradients of `Σ upstream ⊙ Q` for a cached forward pass.
    pub fn backward_cached(&self, cache: &ForwardCache<T>, upstream: &Array2<T>) -> Result<Layers<T>, NetError> {
        let n = cache.batch;
        if upstream.dim() != (n, self.arch.actions) {
            return Err(NetError::Shape {
                expected: format!("{n}x{}", self.arch.actions),
                got: format!("{:?}", upstream.dim()),
            });
        }
        let mut g = Layers::zeros(&self.arch);
        let p = &self.params;

        g.out.w = row_major(upstream.t().dot(&cache.features));
        g.out.b = upstream.sum_axis(Axis(0));
        let mut d_head = upstream.dot(&p.out.w);
        Zip::from(&mut d_head)
            .and(&cache.head_pre)
            .for_each(|d, z| {
                if *z <= T::zero() {
                    *d = T::zero()
                }
            });
        g.head.w = row_major(d_head.t().dot(&cache.flat));
        g.head.b = d_head.sum_axis(Axis(0));
        let d_flat = d_head.dot(&p.head.w);
        let mut dh = row_major(d_flat)
            .into_shape_with_order((n * self.arch.cells(), self.arch.hidden))
            .expect("contiguous gradient");

        for k in (0..p.conv.len()).rev() {
            let mut dz = dh.clone();
            Zip::from(&mut dz).and(&cache.pre[k]).for_each(|d, z| {
                if *z <= T::zero() {
                    *d = T::zero()
                }
            });
            g.conv[k].w = row_major(dz.t().dot(&cache.cols[k]));
            g.conv[k].b = dz.sum_axis(Axis(0));
            if k > 0 {
                let dcols = dz.dot(&p.conv[k].w);
                dh = dh + self.scatter(dcols, n);
            }
        }
        Ok(g)
    }

    /// Parameter gradients of `Σ_a upstream[a] · Q(obs)[a]`.
    pub fn backward(&self, obs: &ObsTensor, upstream: &[T]) -> Result<Layers<T>, NetError> {
        let x = self.convert(obs);
        let (_, cache) = self.forward_batch(&[&x])?;
        let up = Array2::from_shape_vec((1, upstream.len()), upstream.to_vec()).map_err(|_| NetError::Shape {
            expected: format!("1x{}", self.arch.actions),
            got: upstream.len().to_string(),
        })?;
        self.backward_cached(&cache, &up)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kernel: KernelKind) -> Architecture {
        Architecture {
            in_channels: 3,
            height: 3,
            width: 3,
            hidden: 4,
            layers: 2,
            features: 5,
            actions: 4,
            kernel,
        }
    }

    fn random_obs(arch: &Architecture, seed: u64) -> ObsTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut o = ObsTensor::zeros(arch.in_channels, arch.height, arch.width);
        o.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        o
    }

    #[test]
    fn manager_shapes() {
        let arch = Architecture::manager();
        let net = QNetwork::<f32>::new(arch, 1);
        let obs = ObsTensor::zeros(17, 7, 7);
        assert_eq!(net.forward(&obs).unwrap().len(), 49);
        assert_eq!(net.features(&obs).unwrap().len(), 512);
        assert_eq!(net.params.conv.len(), 8);
        let bad = ObsTensor::zeros(18, 7, 7);
        assert!(matches!(net.forward(&bad), Err(NetError::Shape { .. })));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let arch = tiny(KernelKind::Pointwise);
        let net = QNetwork::<f64>::zeros(arch, 0);
        let q = net.forward(&random_obs(&arch, 1)).unwrap();
        assert!(q.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn deterministic_forward() {
        let arch = tiny(KernelKind::Hex);
        let net = QNetwork::<f32>::new(arch, 3);
        let obs = random_obs(&arch, 2);
        assert_eq!(net.forward(&obs).unwrap(), net.forward(&obs).unwrap());
        assert_eq!(QNetwork::<f32>::new(arch, 3), net);
    }

    #[test]
    fn zero_tower_is_identity() {
        let arch = tiny(KernelKind::Pointwise);
        let mut net = QNetwork::<f64>::new(arch, 5);
        for layer in net.params.conv.iter_mut().skip(1) {
            layer.w.fill(0.0);
            layer.b.fill(0.0);
        }
        let obs = random_obs(&arch, 4);
        let x = net.convert(&obs);
        let h = net.tower(&x).unwrap();
        // input layer alone
        let xin = net.input_matrix(&[&x]).unwrap();
        let h0 = relu(&net.params.conv[0].apply(xin.view()));
        assert_eq!(h, h0);
    }

    #[test]
    fn pointwise_tower_is_permutation_equivariant() {
        let arch = tiny(KernelKind::Pointwise);
        let net = QNetwork::<f64>::new(arch, 6);
        let obs = random_obs(&arch, 7);
        let cells = arch.cells();
        let perm = [4usize, 0, 8, 1, 7, 2, 6, 3, 5];
        let mut permuted = obs.clone();
        for c in 0..arch.in_channels {
            for (dst, src) in perm.iter().enumerate() {
                permuted.data[c * cells + dst] = obs.data[c * cells + src];
            }
        }
        let a = net.tower(&net.convert(&obs)).unwrap();
        let b = net.tower(&net.convert(&permuted)).unwrap();
        for (dst, src) in perm.iter().enumerate() {
            for k in 0..arch.hidden {
                assert!((b[[dst, k]] - a[[*src, k]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let arch = tiny(KernelKind::Hex);
        let net = QNetwork::<f64>::new(arch, 1);
        let g = net.backward(&random_obs(&arch, 1), &[0.0; 4]).unwrap();
        assert_eq!(g.squared_norm(), 0.0);
    }

    #[test]
    fn head_gradients_match_plain_affine_model() {
        let arch = tiny(KernelKind::Pointwise);
        let mut net = QNetwork::<f64>::new(arch, 9);
        for layer in net.params.conv.iter_mut().skip(1) {
            layer.w.fill(0.0);
            layer.b.fill(0.0);
        }
        let obs = random_obs(&arch, 10);
        let upstream = [0.3, -1.2, 0.7, 2.0];
        let g = net.backward(&obs, &upstream).unwrap();

        // plain model on the flattened input-layer output: q = Wo relu(Wh f + bh) + bo
        let x = net.convert(&obs);
        let f: Vec<f64> = net.tower(&x).unwrap().iter().copied().collect();
        let (wh, bh) = (&net.params.head.w, &net.params.head.b);
        let (wo, _) = (&net.params.out.w, &net.params.out.b);
        let z: Vec<f64> = (0..arch.features)
            .map(|i| bh[i] + (0..f.len()).map(|j| wh[[i, j]] * f[j]).sum::<f64>())
            .collect();
        let a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
        for k in 0..arch.actions {
            assert!((g.out.b[k] - upstream[k]).abs() < 1e-12);
            for i in 0..arch.features {
                assert!((g.out.w[[k, i]] - upstream[k] * a[i]).abs() < 1e-12);
            }
        }
        for i in 0..arch.features {
            let da: f64 = (0..arch.actions).map(|k| upstream[k] * wo[[k, i]]).sum();
            let dz = if z[i] > 0.0 { da } else { 0.0 };
            assert!((g.head.b[i] - dz).abs() < 1e-12);
            for j in 0..f.len() {
                assert!((g.head.w[[i, j]] - dz * f[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batch_gradients_are_sums_of_single_gradients() {
        let arch = tiny(KernelKind::Hex);
        let net = QNetwork::<f64>::new(arch, 2);
        let o1 = random_obs(&arch, 11);
        let o2 = random_obs(&arch, 12);
        let u1 = [1.0, 0.0, -0.5, 0.25];
        let u2 = [0.0, 2.0, 0.5, -1.0];
        let g1 = net.backward(&o1, &u1).unwrap();
        let g2 = net.backward(&o2, &u2).unwrap();
        let (x1, x2) = (net.convert(&o1), net.convert(&o2));
        let (_, cache) = net.forward_batch(&[&x1, &x2]).unwrap();
        let up = Array2::from_shape_vec((2, 4), [u1, u2].concat()).unwrap();
        let g = net.backward_cached(&cache, &up).unwrap();
        for ((a, b), c) in g.flat().iter().zip(g1.flat()).zip(g2.flat()) {
            assert!((a - (b + c)).abs() < 1e-10);
        }
    }

    #[test]
    fn param_count_matches_layers() {
        for arch in [Architecture::manager(), tiny(KernelKind::Hex)] {
            let net = QNetwork::<f32>::zeros(arch, 0);
            assert_eq!(net.params.len(), arch.param_count());
        }
    }

    #[test]
    fn unit_dimensions_run_forward_and_backward() {
        for (cells, hidden, actions) in [((1, 1), 3, 2), ((1, 3), 1, 1), ((2, 1), 2, 1)] {
            for kernel in [KernelKind::Pointwise, KernelKind::Hex] {
                let arch = Architecture {
                    in_channels: 1,
                    height: cells.0,
                    width: cells.1,
                    hidden,
                    layers: 1,
                    features: 2,
                    actions,
                    kernel,
                };
                let net = QNetwork::<f64>::new(arch, 9);
                let obs = random_obs(&arch, 2);
                assert_eq!(net.forward(&obs).unwrap().len(), actions);
                let g = net.backward(&obs, &vec![1.0; actions]).unwrap();
                assert_eq!(g.len(), arch.param_count());
            }
        }
    }
}
