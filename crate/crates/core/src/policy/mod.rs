//! Fixed-architecture MLP policies over grid positions.
//!
//! A policy maps the scaled agent position `(row/(N-1), col/(N-1))` through
//! tanh hidden layers to four action logits. Its parameters live in one flat
//! vector in canonical order: layer by layer, each layer's weight matrix
//! row-major (`[out][in]`) followed by its bias.

mod io;
mod reinforce;

pub use io::{load_policy, read_policy, save_policy, write_policy};
pub use reinforce::{
    episode_gradient, episode_surrogate, train_policy, EpisodeRecord, LearningCurve, TrainConfig,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, Cell};
use crate::error::{Error, Result};

pub const INPUT_DIM: usize = 2;
pub const OUTPUT_DIM: usize = Action::ALL.len();

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture { hidden: vec![32, 32] }
    }
}

impl Architecture {
    pub fn new(hidden: Vec<usize>) -> Result<Self> {
        if hidden.contains(&0) {
            return Err(Error::Shape("hidden layer width must be positive".into()));
        }
        Ok(Architecture { hidden })
    }

    /// The architecture shared by every task on an `n`×`n` grid.
    pub fn for_grid(_n: usize) -> Self {
        Self::default()
    }

    /// Layer widths including input and output, e.g. `[2, 32, 32, 4]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(INPUT_DIM);
        w.extend_from_slice(&self.hidden);
        w.push(OUTPUT_DIM);
        w
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// `(fan_in, fan_out, offset)` of each layer inside the flat vector.
    pub(crate) fn layers(&self) -> Vec<(usize, usize, usize)> {
        let mut offset = 0;
        self.widths()
            .windows(2)
            .map(|w| {
                let layer = (w[0], w[1], offset);
                offset += w[0] * w[1] + w[1];
                layer
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNetwork {
    arch: Architecture,
    weights: Vec<f64>,
}

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per layer, biases included.
pub fn new_policy(arch: &Architecture, seed: u64) -> PolicyNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(arch.param_count());
    for (fan_in, fan_out, _) in arch.layers() {
        let scale = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..fan_in * fan_out + fan_out {
            weights.push(rng.gen_range(-scale..scale));
        }
    }
    PolicyNetwork { arch: arch.clone(), weights }
}

pub fn flatten(policy: &PolicyNetwork) -> Vec<f64> {
    policy.weights.clone()
}

pub fn unflatten(arch: &Architecture, weights: Vec<f64>) -> Result<PolicyNetwork> {
    PolicyNetwork::from_weights(arch.clone(), weights)
}

pub fn features(cell: Cell, n: usize) -> [f64; INPUT_DIM] {
    let scale = (n - 1) as f64;
    [cell.row as f64 / scale, cell.col as f64 / scale]
}

impl PolicyNetwork {
    pub fn from_weights(arch: Architecture, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != arch.param_count() {
            return Err(Error::Shape(format!(
                "architecture {:?} needs {} weights, got {}",
                arch.widths(),
                arch.param_count(),
                weights.len()
            )));
        }
        Ok(PolicyNetwork { arch, weights })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    /// Action probabilities in [`Action::ALL`] order at `cell` on an `n`×`n` grid.
    pub fn action_distribution(&self, cell: Cell, n: usize) -> Result<[f64; OUTPUT_DIM]> {
        if cell.row >= n || cell.col >= n {
            return Err(Error::Shape(format!("cell {cell} outside {n}x{n} grid")));
        }
        if !self.is_finite() {
            return Err(Error::Numeric("policy has non-finite weights".into()));
        }
        Ok(softmax(self.forward(&features(cell, n)).logits()))
    }

    pub(crate) fn forward(&self, input: &[f64]) -> Forward {
        let mut acts: Vec<Vec<f64>> = vec![input.to_vec()];
        let layers = self.arch.layers();
        let last = layers.len() - 1;
        for (li, &(fan_in, fan_out, off)) in layers.iter().enumerate() {
            let x = acts.last().expect("input");
            let w = &self.weights[off..off + fan_in * fan_out];
            let b = &self.weights[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let mut z: Vec<f64> = w
                .chunks_exact(fan_in)
                .zip(b)
                .map(|(row, bias)| bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if li != last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        Forward { acts }
    }

    /// Accumulates `d(out)/d(weights)` into `grad` given `d(out)/d(logits)`.
    pub(crate) fn backward(&self, fwd: &Forward, dlogits: &[f64], grad: &mut [f64]) {
        let layers = self.arch.layers();
        let mut delta = dlogits.to_vec();
        for (li, &(fan_in, fan_out, off)) in layers.iter().enumerate().rev() {
            let x = &fwd.acts[li];
            for o in 0..fan_out {
                let row = off + o * fan_in;
                for i in 0..fan_in {
                    grad[row + i] += delta[o] * x[i];
                }
                grad[off + fan_in * fan_out + o] += delta[o];
            }
            if li == 0 {
                break;
            }
            let w = &self.weights[off..off + fan_in * fan_out];
            delta = (0..fan_in)
                .map(|i| {
                    let back: f64 = (0..fan_out).map(|o| w[o * fan_in + i] * delta[o]).sum();
                    back * (1.0 - x[i] * x[i])
                })
                .collect();
        }
    }
}

pub(crate) struct Forward {
    acts: Vec<Vec<f64>>,
}

impl Forward {
    pub(crate) fn logits(&self) -> &[f64] {
        self.acts.last().expect("output layer")
    }
}

pub(crate) fn softmax(logits: &[f64]) -> [f64; OUTPUT_DIM] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; OUTPUT_DIM];
    let mut sum = 0.0;
    for (pi, &z) in p.iter_mut().zip(logits) {
        *pi = (z - max).exp();
        sum += *pi;
    }
    p.iter_mut().for_each(|v| *v /= sum);
    p
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_param_count() {
        let arch = Architecture::default();
        assert_eq!(arch.widths(), vec![2, 32, 32, 4]);
        assert_eq!(arch.param_count(), 2 * 32 + 32 + 32 * 32 + 32 + 32 * 4 + 4);
        assert_eq!(arch.param_count(), 1284);
        assert_eq!(new_policy(&arch, 0).weights().len(), 1284);
    }

    #[test]
    fn init_is_seeded() {
        let arch = Architecture::default();
        assert_eq!(new_policy(&arch, 7), new_policy(&arch, 7));
        assert_ne!(new_policy(&arch, 7), new_policy(&arch, 8));
        let p = new_policy(&arch, 1);
        let first = &p.weights()[..64];
        assert!(first.iter().all(|w| w.abs() <= 1.0 / 2f64.sqrt()));
    }

    #[test]
    fn zero_weights_are_uniform() {
        let arch = Architecture::default();
        let p = unflatten(&arch, vec![0.0; arch.param_count()]).unwrap();
        for r in 0..5 {
            for c in 0..5 {
                let d = p.action_distribution(Cell::new(r, c), 5).unwrap();
                assert_eq!(d, [0.25; 4]);
                assert!((entropy(&d) - 4f64.ln()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn bias_saturation() {
        let arch = Architecture::default();
        let mut w = flatten(&new_policy(&arch, 5));
        let n = w.len();
        // Final-layer bias of action 2 (Left).
        w[n - 4 + 2] += 10.0;
        let p = unflatten(&arch, w).unwrap();
        let d = p.action_distribution(Cell::new(3, 3), 8).unwrap();
        assert!(d[2] > 0.99, "{d:?}");
    }

    #[test]
    fn canonical_order_first_entry() {
        let arch = Architecture::new(vec![3]).unwrap();
        // One hidden unit-0 weight on input 0 only; everything else zero.
        let mut w = vec![0.0; arch.param_count()];
        w[0] = 1.0;
        let p = unflatten(&arch, w).unwrap();
        let f = p.forward(&[0.5, 0.0]);
        assert_eq!(f.acts[1], vec![0.5f64.tanh(), 0.0, 0.0]);
        let f = p.forward(&[0.0, 0.5]);
        assert_eq!(f.acts[1], vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_finite_weights_are_rejected() {
        let arch = Architecture::default();
        let mut w = vec![0.0; arch.param_count()];
        w[10] = f64::NAN;
        let p = unflatten(&arch, w).unwrap();
        assert!(matches!(p.action_distribution(Cell::new(0, 0), 4), Err(Error::Numeric(_))));
    }

    #[test]
    fn unflatten_rejects_length() {
        let arch = Architecture::default();
        assert!(matches!(unflatten(&arch, vec![0.0; 1283]), Err(Error::Shape(_))));
    }

    #[test]
    fn entropy_is_max_only_for_equal_logits() {
        assert!((entropy(&softmax(&[1.5; 4])) - 4f64.ln()).abs() < 1e-15);
        assert!(entropy(&softmax(&[1.5, 1.5, 1.5, 1.5001])) < 4f64.ln());
    }

    proptest! {
        #[test]
        fn distribution_normalized(seed in any::<u64>(), r in 0usize..10, c in 0usize..10) {
            let p = new_policy(&Architecture::default(), seed);
            let d = p.action_distribution(Cell::new(r, c), 10).unwrap();
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(d.iter().all(|&v| v > 0.0));
        }

        #[test]
        fn flatten_roundtrip(seed in any::<u64>()) {
            let arch = Architecture::default();
            let p = new_policy(&arch, seed);
            let q = unflatten(&arch, flatten(&p)).unwrap();
            prop_assert_eq!(
                p.weights().iter().map(|w| w.to_bits()).collect::<Vec<_>>(),
                q.weights().iter().map(|w| w.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
