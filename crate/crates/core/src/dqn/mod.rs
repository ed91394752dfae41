//! Deep Q-learning: replay buffer, ε-greedy exploration, target network and
//! Huber/Adam updates, plus the training loops for the chain sanity task,
//! hybrid managers and individual unit agents.

pub mod chain;
pub mod individual;
pub mod manager;

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EngineError;
use crate::hybrid::HybridError;
use crate::nn::{Architecture, Layers, NetError, QNetwork};
use crate::scenario::ScenarioError;

#[derive(Debug, Error)]
pub enum DqnError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("replay buffer holds {have} transitions, need {need}")]
    Underfull { have: usize, need: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Hybrid(#[from] HybridError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Play(#[from] crate::play::PlayError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub buffer_size: usize,
    pub learning_starts: u64,
    pub batch_size: usize,
    pub gamma: f64,
    pub target_update_interval: u64,
    pub eps_initial: f64,
    pub eps_final: f64,
    pub exploration_fraction: f64,
    pub train_freq: u64,
    pub gradient_steps: u32,
    pub total_budget: u64,
    /// Global gradient-norm clip applied before each optimizer step.
    pub max_grad_norm: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            buffer_size: 1_000_000,
            learning_starts: 10_000,
            batch_size: 64,
            gamma: 0.93,
            target_update_interval: 1_000,
            eps_initial: 1.0,
            eps_final: 0.01,
            exploration_fraction: 1.0,
            train_freq: 4,
            gradient_steps: 1,
            total_budget: 10_000_000,
            max_grad_norm: 10.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), DqnError> {
        let bad = |m: &str| Err(DqnError::Config(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.buffer_size < self.batch_size {
            return bad("need 0 < batch_size <= buffer_size");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.train_freq == 0 || self.target_update_interval == 0 {
            return bad("train_freq and target_update_interval must be positive");
        }
        if !(0.0..=1.0).contains(&self.eps_final) || !(self.eps_final..=1.0).contains(&self.eps_initial) {
            return bad("need 0 <= eps_final <= eps_initial <= 1");
        }
        if !(self.exploration_fraction > 0.0 && self.exploration_fraction <= 1.0) {
            return bad("exploration_fraction must lie in (0, 1]");
        }
        if self.total_budget == 0 {
            return bad("total_budget must be positive");
        }
        Ok(())
    }
}

/// Linear decay from `eps_initial` to `eps_final` over
/// `exploration_fraction · total_budget` steps, flat afterwards.
pub fn epsilon_at(h: &Hyperparams, step: u64) -> f64 {
    let span = h.exploration_fraction * h.total_budget as f64;
    let progress = (step as f64 / span).min(1.0);
    h.eps_initial + progress * (h.eps_final - h.eps_initial)
}

fn argmax<T: PartialOrd + Copy>(q: &[T], allowed: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in q.iter().enumerate() {
        if allowed(i) && best.is_none_or(|b| *v > q[b]) {
            best = Some(i);
        }
    }
    best
}

/// ε-greedy: uniform with probability `eps`, else the first maximal index.
pub fn select_action<T: PartialOrd + Copy>(q: &[T], eps: f64, rng: &mut impl Rng) -> usize {
    assert!(!q.is_empty(), "empty action set");
    if eps > 0.0 && rng.gen::<f64>() < eps {
        return rng.gen_range(0..q.len());
    }
    argmax(q, |_| true).unwrap()
}

/// Bit `i` of a mask marks action `i` legal.
pub type ActionMask = u64;

pub fn full_mask(actions: usize) -> ActionMask {
    if actions >= 64 {
        u64::MAX
    } else {
        (1u64 << actions) - 1
    }
}

pub fn mask_allows(mask: ActionMask, i: usize) -> bool {
    i < 64 && mask >> i & 1 == 1
}

/// ε-greedy restricted to legal actions.
pub fn select_action_masked<T: PartialOrd + Copy>(
    q: &[T],
    mask: ActionMask,
    eps: f64,
    rng: &mut impl Rng,
) -> Option<usize> {
    let legal: Vec<usize> = (0..q.len()).filter(|i| mask_allows(mask, *i)).collect();
    if legal.is_empty() {
        return None;
    }
    if eps > 0.0 && rng.gen::<f64>() < eps {
        return Some(legal[rng.gen_range(0..legal.len())]);
    }
    argmax(q, |i| mask_allows(mask, i))
}

/// Observations are shared between consecutive transitions.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Arc<[f32]>,
    pub action: usize,
    pub reward: f32,
    pub next_obs: Arc<[f32]>,
    /// Legal actions at `next_obs`; the bootstrap max runs over these.
    pub next_mask: ActionMask,
    pub done: bool,
}

/// FIFO ring buffer with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            data: Vec::new(),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Stored transitions from oldest to newest.
    pub fn iter_ordered(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.data.len() < self.capacity { 0 } else { self.next };
        self.data[split..].iter().chain(self.data[..split].iter())
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<&Transition>, DqnError> {
        if self.data.len() < n || n == 0 {
            return Err(DqnError::Underfull {
                have: self.data.len(),
                need: n.max(1),
            });
        }
        Ok((0..n).map(|_| &self.data[rng.gen_range(0..self.data.len())]).collect())
    }
}

/// `y = r + γ · max_{a' legal} Q_target(s', a')`, or `y = r` when done.
pub fn td_targets(batch: &[&Transition], target: &QNetwork<f32>, gamma: f64) -> Result<Vec<f32>, DqnError> {
    let live: Vec<&[f32]> = batch.iter().filter(|t| !t.done).map(|t| &*t.next_obs).collect();
    let q_next = if live.is_empty() || gamma == 0.0 {
        None
    } else {
        Some(target.q_values_batch(&live)?)
    };
    let mut row = 0;
    Ok(batch
        .iter()
        .map(|t| {
            if t.done {
                return t.reward;
            }
            let bootstrap = match &q_next {
                Some(q) => {
                    let r = q.row(row);
                    row += 1;
                    let best = argmax(r.as_slice().unwrap(), |i| mask_allows(t.next_mask, i)).map(|i| r[i]);
                    best.unwrap_or(0.0)
                }
                None => 0.0,
            };
            (t.reward as f64 + gamma * bootstrap as f64) as f32
        })
        .collect())
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Layers<f32>,
    v: Layers<f32>,
}

impl Adam {
    pub fn new(arch: &Architecture, h: &Hyperparams) -> Self {
        Self {
            lr: h.learning_rate,
            beta1: h.adam_beta1,
            beta2: h.adam_beta2,
            eps: h.adam_eps,
            t: 0,
            m: Layers::zeros(arch),
            v: Layers::zeros(arch),
        }
    }

    pub fn step(&mut self, params: &mut Layers<f32>, grads: &Layers<f32>) {
        self.t += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = (self.lr * c2.sqrt() / c1) as f32;
        let eps_hat = (self.eps * c2.sqrt()) as f32;
        let ps = params.tensors_mut();
        let gs = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= step * m[i] / (v[i].sqrt() + eps_hat);
            }
        }
    }
}

/// Mean Huber loss (δ = 1) between predictions and targets, and its gradient.
pub fn huber(pred: &[f32], target: &[f32]) -> (f32, Vec<f32>) {
    let n = pred.len() as f32;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, y)| {
            let d = p - y;
            loss += if d.abs() <= 1.0 { 0.5 * d * d } else { d.abs() - 0.5 };
            d.clamp(-1.0, 1.0) / n
        })
        .collect();
    (loss / n, grad)
}

/// One gradient step on a sampled batch; returns the loss before the step.
pub fn train_step(
    online: &mut QNetwork<f32>,
    target: &QNetwork<f32>,
    batch: &[&Transition],
    h: &Hyperparams,
    adam: &mut Adam,
) -> Result<f32, DqnError> {
    let y = td_targets(batch, target, h.gamma)?;
    let obs: Vec<&[f32]> = batch.iter().map(|t| &*t.obs).collect();
    let (q, cache) = online.forward_batch(&obs)?;
    let pred: Vec<f32> = batch.iter().enumerate().map(|(i, t)| q[[i, t.action]]).collect();
    let (loss, dpred) = huber(&pred, &y);
    let mut upstream = Array2::zeros(q.dim());
    for (i, t) in batch.iter().enumerate() {
        upstream[[i, t.action]] = dpred[i];
    }
    let mut grads = online.backward_cached(&cache, &upstream)?;
    let norm = grads.squared_norm().sqrt();
    if norm > h.max_grad_norm {
        grads.scale((h.max_grad_norm / (norm + 1e-6)) as f32);
    }
    adam.step(&mut online.params, &grads);
    Ok(loss)
}

/// Online and target networks, optimizer, buffer and step counters.
#[derive(Debug, Clone)]
pub struct DqnLearner {
    pub online: QNetwork<f32>,
    pub target: QNetwork<f32>,
    pub hyper: Hyperparams,
    pub buffer: ReplayBuffer,
    adam: Adam,
    /// Agent steps (decisions) taken so far.
    pub steps: u64,
    pub updates: u64,
    pub last_loss: Option<f32>,
    rng: ChaCha8Rng,
}

impl DqnLearner {
    pub fn new(arch: Architecture, hyper: Hyperparams, seed: u64) -> Result<Self, DqnError> {
        hyper.validate()?;
        let online = QNetwork::new(arch, seed);
        Ok(Self {
            target: online.clone(),
            adam: Adam::new(&arch, &hyper),
            buffer: ReplayBuffer::new(hyper.buffer_size),
            online,
            hyper,
            steps: 0,
            updates: 0,
            last_loss: None,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_d9),
        })
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_at(&self.hyper, self.steps)
    }

    pub fn budget_spent(&self) -> bool {
        self.steps >= self.hyper.total_budget
    }

    /// ε-greedy choice at the current step; does not advance the counter.
    pub fn choose(&mut self, obs: &[f32], mask: ActionMask) -> Result<usize, DqnError> {
        let q = self.online.forward_raw(obs)?;
        let eps = self.epsilon();
        select_action_masked(&q, mask, eps, &mut self.rng)
            .ok_or_else(|| DqnError::Config("no legal action".into()))
    }

    pub fn store(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// Counts one agent step and runs any training and target sync it triggers.
    pub fn step(&mut self) -> Result<(), DqnError> {
        self.steps += 1;
        let h = &self.hyper;
        let ready = self.steps >= h.learning_starts && self.buffer.len() >= h.batch_size;
        if ready && self.steps % h.train_freq == 0 {
            for _ in 0..h.gradient_steps {
                let batch = self.buffer.sample(h.batch_size, &mut self.rng)?;
                let loss = train_step(&mut self.online, &self.target, &batch, &self.hyper, &mut self.adam)?;
                self.last_loss = Some(loss);
                self.updates += 1;
            }
        }
        if self.steps % self.hyper.target_update_interval == 0 {
            self.sync_target();
        }
        Ok(())
    }

    pub fn sync_target(&mut self) {
        self.target.params = self.online.params.clone();
    }
}
