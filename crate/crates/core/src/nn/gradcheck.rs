//! Finite-difference verification of the backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Layers, QNetwork};
use crate::observation::ObsTensor;

/// Pre-activations closer than this to zero trigger an input nudge.
const KINK_MARGIN: f64 = 1e-3;
const MAX_NUDGES: usize = 64;
/// Floor on the relative-error denominator so near-zero gradients compare absolutely.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    /// Coordinates whose ±step perturbation flipped a rectifier; not compared.
    pub kink_skipped: usize,
    /// Times the input was perturbed to move pre-activations off zero.
    pub nudges: usize,
    pub tolerance: f64,
    pub passed: bool,
}

fn loss(net: &QNetwork<f64>, x: &[f64], upstream: &[f64]) -> (f64, Vec<bool>) {
    let (q, cache) = net.forward_batch(&[x]).expect("shape checked by caller");
    let l = q.iter().zip(upstream).map(|(a, b)| a * b).sum();
    let mask = cache
        .pre
        .iter()
        .chain([&cache.head_pre])
        .flat_map(|a| a.iter().map(|v| *v > 0.0))
        .collect();
    (l, mask)
}

/// Compares `analytic` against central differences of `Σ upstream ⊙ Q(obs)`.
pub fn compare_gradients(
    net: &QNetwork<f64>,
    obs: &ObsTensor,
    upstream: &[f64],
    analytic: &Layers<f64>,
    step: f64,
    tolerance: f64,
) -> GradCheckReport {
    let x = net.convert(obs);
    let (_, base_mask) = loss(net, &x, upstream);
    let mut probe = net.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst_index: 0,
        kink_skipped: 0,
        nudges: 0,
        tolerance,
        passed: true,
    };
    for i in 0..net.params.len() {
        let theta = net.params.get(i);
        probe.params.set(i, theta + step);
        let (lp, mp) = loss(&probe, &x, upstream);
        probe.params.set(i, theta - step);
        let (lm, mm) = loss(&probe, &x, upstream);
        probe.params.set(i, theta);
        if mp != base_mask || mm != base_mask {
            report.kink_skipped += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * step);
        let a = analytic.get(i);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        report.checked += 1;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    report.passed = report.max_rel_error <= tolerance && report.checked > 0;
    report
}

/// Checks [`QNetwork::backward`] on `obs`, first nudging the input until
/// every rectifier input is at least `1e-3` away from zero.
pub fn grad_check(
    net: &QNetwork<f64>,
    obs: &ObsTensor,
    upstream: &[f64],
    step: f64,
    tolerance: f64,
    seed: u64,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obs = obs.clone();
    let mut nudges = 0;
    while nudges < MAX_NUDGES {
        let x = net.convert(&obs);
        let (_, cache) = net.forward_batch(&[&x]).expect("observation shape");
        if cache.relu_margin() >= KINK_MARGIN {
            break;
        }
        obs.data.iter_mut().for_each(|v| *v += rng.gen_range(-0.05..0.05));
        nudges += 1;
    }
    let analytic = net.backward(&obs, upstream).expect("observation shape");
    let mut report = compare_gradients(net, &obs, upstream, &analytic, step, tolerance);
    report.nudges = nudges;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Architecture, KernelKind};

    fn arch(kernel: KernelKind) -> Architecture {
        Architecture {
            in_channels: 2,
            height: 3,
            width: 4,
            hidden: 3,
            layers: 2,
            features: 6,
            actions: 3,
            kernel,
        }
    }

    fn obs(a: &Architecture, seed: u64) -> ObsTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut o = ObsTensor::zeros(a.in_channels, a.height, a.width);
        o.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        o
    }

    #[test]
    fn pointwise_and_hex_pass() {
        for kernel in [KernelKind::Pointwise, KernelKind::Hex] {
            let a = arch(kernel);
            let net = QNetwork::<f64>::new(a, 21);
            let r = grad_check(&net, &obs(&a, 3), &[1.0, -0.5, 0.25], 1e-5, 1e-4, 0);
            assert!(r.passed, "{kernel:?}: {r:?}");
            assert_eq!(r.checked + r.kink_skipped, a.param_count());
        }
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let a = arch(KernelKind::Hex);
        let net = QNetwork::<f64>::new(a, 5);
        let o = obs(&a, 8);
        let up = [0.3, 1.0, -2.0];
        let mut g = net.backward(&o, &up).unwrap();
        let i = g.len() - 1;
        g.set(i, g.get(i) * 2.0 + 0.1);
        let r = compare_gradients(&net, &o, &up, &g, 1e-5, 1e-4);
        assert!(!r.passed);
        assert_eq!(r.worst_index, i);
    }
}
