//! Deterministic chain MDP used to sanity-check the learner against value
//! iteration.
//!
//! States `0..len`; action 0 steps left (clamped at 0), action 1 steps right.
//! Entering the last state pays 1 and ends the episode; every other step pays
//! 0. Episodes start in a uniformly drawn non-terminal state and are cut
//! (without a terminal flag) after `horizon` steps.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{full_mask, DqnError, DqnLearner, Hyperparams, Transition};
use crate::nn::{Architecture, KernelKind};

#[derive(Debug, Clone, Copy)]
pub struct ChainMdp {
    pub len: usize,
    pub horizon: usize,
}

impl Default for ChainMdp {
    fn default() -> Self {
        Self { len: 5, horizon: 20 }
    }
}

impl ChainMdp {
    pub fn terminal(&self) -> usize {
        self.len - 1
    }

    /// (next state, reward, done)
    pub fn step(&self, s: usize, action: usize) -> (usize, f64, bool) {
        let next = if action == 0 { s.saturating_sub(1) } else { s + 1 };
        if next == self.terminal() {
            (next, 1.0, true)
        } else {
            (next, 0.0, false)
        }
    }

    pub fn encode(&self, s: usize) -> Arc<[f32]> {
        let mut v = vec![0.0f32; self.len];
        v[s] = 1.0;
        Arc::from(v)
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            in_channels: self.len,
            height: 1,
            width: 1,
            hidden: 16,
            layers: 1,
            features: 32,
            actions: 2,
            kernel: KernelKind::Pointwise,
        }
    }
}

/// Optimal action values for the non-terminal states.
pub fn value_iteration(mdp: &ChainMdp, gamma: f64) -> Vec<[f64; 2]> {
    let n = mdp.terminal();
    let mut v = vec![0.0; mdp.len];
    loop {
        let mut delta: f64 = 0.0;
        for s in 0..n {
            let best = (0..2)
                .map(|a| {
                    let (s2, r, done) = mdp.step(s, a);
                    r + if done { 0.0 } else { gamma * v[s2] }
                })
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - v[s]).abs());
            v[s] = best;
        }
        if delta < 1e-14 {
            break;
        }
    }
    (0..n)
        .map(|s| {
            let q = |a| {
                let (s2, r, done) = mdp.step(s, a);
                r + if done { 0.0 } else { gamma * v[s2] }
            };
            [q(0), q(1)]
        })
        .collect()
}

/// Settings for the chain run: the full learner at a small scale.
pub fn chain_hyperparams(total_budget: u64) -> Hyperparams {
    Hyperparams {
        learning_rate: 1e-3,
        buffer_size: 50_000,
        learning_starts: 1_000,
        batch_size: 64,
        gamma: 0.93,
        target_update_interval: 500,
        eps_initial: 1.0,
        eps_final: 0.05,
        exploration_fraction: 0.3,
        train_freq: 1,
        total_budget,
        ..Default::default()
    }
}

#[derive(Debug, Clone)]
pub struct ChainResult {
    pub q: Vec<[f64; 2]>,
    pub q_star: Vec<[f64; 2]>,
    pub max_error: f64,
    pub greedy_optimal: bool,
    pub steps: u64,
}

pub fn train_chain(mdp: &ChainMdp, hyper: Hyperparams, seed: u64) -> Result<ChainResult, DqnError> {
    let mut learner = DqnLearner::new(mdp.architecture(), hyper, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = full_mask(2);
    while !learner.budget_spent() {
        let mut s = rng.gen_range(0..mdp.terminal());
        let mut obs = mdp.encode(s);
        for _ in 0..mdp.horizon {
            let a = learner.choose(&obs, mask)?;
            let (s2, r, done) = mdp.step(s, a);
            let next = mdp.encode(s2);
            learner.store(Transition {
                obs: obs.clone(),
                action: a,
                reward: r as f32,
                next_obs: next.clone(),
                next_mask: mask,
                done,
            });
            learner.step()?;
            if done || learner.budget_spent() {
                break;
            }
            s = s2;
            obs = next;
        }
    }
    let q_star = value_iteration(mdp, learner.hyper.gamma);
    let q: Vec<[f64; 2]> = (0..mdp.terminal())
        .map(|s| {
            let v = learner.online.forward_raw(&mdp.encode(s)).unwrap();
            [v[0] as f64, v[1] as f64]
        })
        .collect();
    let max_error = q
        .iter()
        .zip(&q_star)
        .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
        .fold(0.0, f64::max);
    let greedy_optimal = q.iter().zip(&q_star).all(|(a, b)| (a[1] > a[0]) == (b[1] > b[0]));
    Ok(ChainResult {
        q,
        q_star,
        max_error,
        greedy_optimal,
        steps: learner.steps,
    })
}
