use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{entropy, features, softmax, Architecture, Forward, PolicyNetwork, OUTPUT_DIM};
use crate::env::{self, Action, Cell, GridSpec};
use crate::error::{Error, Result};
use crate::optim::Adam;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub entropy_bonus: f64,
    pub baseline_decay: f64,
    pub convergence_window: usize,
    pub convergence_slack: f64,
    pub max_episodes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            learning_rate: 3e-3,
            entropy_bonus: 0.01,
            baseline_decay: 0.99,
            convergence_window: 50,
            convergence_slack: 1.2,
            max_episodes: 20_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.into()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("discount must lie in (0, 1]");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(self.convergence_slack >= 1.0) {
            return bad("convergence slack must be at least 1");
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad("baseline decay must lie in [0, 1)");
        }
        if self.convergence_window == 0 {
            return bad("convergence window must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub steps: usize,
    /// Undiscounted.
    pub ret: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub records: Vec<EpisodeRecord>,
    pub converged: bool,
}

impl LearningCurve {
    /// Episodes run, which is the convergence episode when `converged`.
    pub fn episodes(&self) -> usize {
        self.records.len()
    }

    /// Environment steps summed over every episode run.
    pub fn env_steps(&self) -> usize {
        self.records.iter().map(|r| r.steps).sum()
    }

    /// Mean episode length over the last `window` episodes (all, if fewer).
    pub fn trailing_mean_steps(&self, upto: usize, window: usize) -> f64 {
        let end = upto.min(self.records.len());
        let start = end.saturating_sub(window);
        let slice = &self.records[start..end];
        slice.iter().map(|r| r.steps as f64).sum::<f64>() / slice.len().max(1) as f64
    }
}

/// REINFORCE with an EMA return baseline and an entropy bonus, run until the
/// trailing-window mean episode length is within `convergence_slack` of the
/// optimum or `max_episodes` is reached.
pub fn train_policy(
    spec: &GridSpec,
    config: &TrainConfig,
    init: Option<&PolicyNetwork>,
) -> Result<(PolicyNetwork, LearningCurve)> {
    config.validate()?;
    spec.validate()?;
    let arch = Architecture::for_grid(spec.size);
    let mut policy = match init {
        Some(p) if p.arch() != &arch => {
            return Err(Error::Shape(format!(
                "init architecture {:?} differs from {:?} used on {}x{} grids",
                p.arch().widths(),
                arch.widths(),
                spec.size,
                spec.size
            )))
        }
        Some(p) if !p.is_finite() => {
            return Err(Error::Numeric("init policy has non-finite weights".into()))
        }
        Some(p) => p.clone(),
        None => super::new_policy(&arch, config.seed),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let threshold = config.convergence_slack * env::optimal_expected_steps(spec);
    let mut opt = Adam::new(policy.weights().len(), config.learning_rate);
    let mut grad = vec![0.0; policy.weights().len()];
    let mut baseline: Option<f64> = None;
    let mut curve = LearningCurve::default();
    let mut window_sum = 0usize;

    for episode in 0..config.max_episodes {
        let (steps, rewards) = rollout(&policy, spec, &mut rng);
        let returns = discounted_returns(&rewards, config.gamma);
        let mean_return = returns.iter().sum::<f64>() / returns.len() as f64;
        let b = *baseline.get_or_insert(mean_return);

        grad.iter_mut().for_each(|g| *g = 0.0);
        for (st, g) in steps.iter().zip(&returns) {
            accumulate_step(&policy, &st.fwd, st.action, g - b, config.entropy_bonus, &mut grad);
        }
        // Ascent on the surrogate objective.
        grad.iter_mut().for_each(|g| *g = -*g);
        opt.step(policy.weights_mut(), &grad);
        baseline = Some(config.baseline_decay * b + (1.0 - config.baseline_decay) * mean_return);

        let len = steps.len();
        curve.records.push(EpisodeRecord { episode, steps: len, ret: rewards.iter().sum() });
        window_sum += len;
        if curve.records.len() > config.convergence_window {
            window_sum -= curve.records[curve.records.len() - 1 - config.convergence_window].steps;
        }
        if curve.records.len() >= config.convergence_window
            && window_sum as f64 / config.convergence_window as f64 <= threshold
        {
            curve.converged = true;
            break;
        }
    }
    if !policy.is_finite() {
        return Err(Error::Numeric("policy weights diverged during training".into()));
    }
    Ok((policy, curve))
}

struct Step {
    fwd: Forward,
    action: Action,
}

fn rollout<R: Rng>(policy: &PolicyNetwork, spec: &GridSpec, rng: &mut R) -> (Vec<Step>, Vec<f64>) {
    let mut state = env::reset(spec, rng);
    let mut steps = Vec::new();
    let mut rewards = Vec::new();
    while !state.done {
        let fwd = policy.forward(&features(state.agent, spec.size));
        let p = softmax(fwd.logits());
        let action = sample(&p, rng);
        let (next, r, _) = env::step(&state, action, spec).expect("episode is live");
        steps.push(Step { fwd, action });
        rewards.push(r);
        state = next;
    }
    (steps, rewards)
}

fn sample<R: Rng>(p: &[f64; OUTPUT_DIM], rng: &mut R) -> Action {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return Action::from_index(i);
        }
    }
    Action::from_index(OUTPUT_DIM - 1)
}

fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for (o, r) in out.iter_mut().zip(rewards).rev() {
        g = r + gamma * g;
        *o = g;
    }
    out
}

/// Adds the gradient of `adv * log p(action) + beta * H(p)` at one step.
fn accumulate_step(
    policy: &PolicyNetwork,
    fwd: &Forward,
    action: Action,
    adv: f64,
    beta: f64,
    grad: &mut [f64],
) {
    let p = softmax(fwd.logits());
    let h = entropy(&p);
    let mut dlogits = [0.0; OUTPUT_DIM];
    for k in 0..OUTPUT_DIM {
        let onehot = if k == action.index() { 1.0 } else { 0.0 };
        // dH/dz_k = -p_k (ln p_k + H)
        dlogits[k] = adv * (onehot - p[k]) - beta * p[k] * (p[k].ln() + h);
    }
    policy.backward(fwd, &dlogits, grad);
}

/// Per-episode surrogate objective
/// `sum_t adv_t * ln p(a_t | s_t) + beta * sum_t H(p(. | s_t))`.
pub fn episode_surrogate(
    policy: &PolicyNetwork,
    n: usize,
    cells: &[Cell],
    actions: &[Action],
    advantages: &[f64],
    entropy_bonus: f64,
) -> f64 {
    cells
        .iter()
        .zip(actions)
        .zip(advantages)
        .map(|((&c, a), adv)| {
            let p = softmax(policy.forward(&features(c, n)).logits());
            adv * p[a.index()].ln() + entropy_bonus * entropy(&p)
        })
        .sum()
}

/// Analytic gradient of [`episode_surrogate`] with respect to the flat weights.
pub fn episode_gradient(
    policy: &PolicyNetwork,
    n: usize,
    cells: &[Cell],
    actions: &[Action],
    advantages: &[f64],
    entropy_bonus: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; policy.weights().len()];
    for ((&c, &a), &adv) in cells.iter().zip(actions).zip(advantages) {
        let fwd = policy.forward(&features(c, n));
        accumulate_step(policy, &fwd, a, adv, entropy_bonus, &mut grad);
    }
    grad
}
