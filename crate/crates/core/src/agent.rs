//! The active agent: a controller circuit that estimates per-action values
//! and a generator circuit that predicts the next observation.
//!
//! The generator's residual error after settling is the epistemic
//! (curiosity) signal. It is normalized by a running maximum and blended with
//! the environment's reward before the transition is stored. The controller
//! regresses onto Q-learning style targets built against a slowly tracking
//! copy of itself.

use crate::ngc::{NgcConfig, NgcError, NgcModel};
use crate::replay::{EmptyBuffer, ReplayBuffer, Transition};
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Ngc(#[from] NgcError),
    #[error(transparent)]
    Replay(#[from] EmptyBuffer),
    #[error("action {action} out of range for {n_actions} actions")]
    ActionOutOfRange { action: usize, n_actions: usize },
    #[error("invalid agent configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Weight of the epistemic (generator-surprise) reward.
    pub alpha_e: f64,
    /// Weight of the instrumental (environment) reward.
    pub alpha_i: f64,
    /// Discount factor.
    pub gamma: f64,
    pub epsilon0: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    /// Transitions between target-controller syncs (`C`).
    pub sync_interval: u64,
    /// Polyak coefficient used at each sync.
    pub tau_c: f64,
    pub n_batch: usize,
    pub replay_capacity: usize,
    pub controller: NgcConfig,
    pub generator: NgcConfig,
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: String| Err(AgentError::Config(m));
        if !(self.alpha_e >= 0.0 && self.alpha_i >= 0.0) {
            return bad(format!("reward weights must be non-negative ({}, {})", self.alpha_e, self.alpha_i));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.epsilon0) || !(0.0..=1.0).contains(&self.epsilon_floor) {
            return bad("epsilon0 and epsilon_floor must lie in [0, 1]".into());
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return bad(format!("epsilon_decay must lie in (0, 1], got {}", self.epsilon_decay));
        }
        if self.sync_interval == 0 || self.n_batch == 0 || self.replay_capacity == 0 {
            return bad("sync_interval, n_batch and replay_capacity must be positive".into());
        }
        if !(self.tau_c > 0.0 && self.tau_c <= 1.0) {
            return bad(format!("tau_c must lie in (0, 1], got {}", self.tau_c));
        }
        self.controller.validate()?;
        self.generator.validate()?;
        Ok(())
    }

    /// `α_e·r_ep + α_i·r_ext`
    pub fn combine_rewards(&self, epistemic: f64, external: f64) -> f64 {
        self.alpha_e * epistemic + self.alpha_i * external
    }
}

/// `1` at `action`, `0` elsewhere.
pub fn one_hot(action: usize, n_actions: usize) -> Result<Vec<f64>, AgentError> {
    if action >= n_actions {
        return Err(AgentError::ActionOutOfRange { action, n_actions });
    }
    let mut v = vec![0.0; n_actions];
    v[action] = 1.0;
    Ok(v)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnStats {
    pub controller_loss: f64,
    pub generator_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngcAgent {
    config: AgentConfig,
    obs_dim: usize,
    n_actions: usize,
    controller: NgcModel,
    target: NgcModel,
    generator: NgcModel,
    epsilon: f64,
    r_max: f64,
    step_count: u64,
}

impl AngcAgent {
    /// Builds both circuits. `config.controller` must map `obs_dim` to
    /// `n_actions`; `config.generator` must map `n_actions + obs_dim` to
    /// `obs_dim`.
    pub fn new(config: AgentConfig, obs_dim: usize, n_actions: usize, seed: u64) -> Result<Self, AgentError> {
        config.validate()?;
        let c = &config.controller;
        if c.input_dim() != obs_dim || c.output_dim() != n_actions {
            return Err(AgentError::Config(format!(
                "controller maps {} -> {}, expected {obs_dim} -> {n_actions}",
                c.input_dim(),
                c.output_dim()
            )));
        }
        let g = &config.generator;
        if g.input_dim() != obs_dim + n_actions || g.output_dim() != obs_dim {
            return Err(AgentError::Config(format!(
                "generator maps {} -> {}, expected {} -> {obs_dim}",
                g.input_dim(),
                g.output_dim(),
                obs_dim + n_actions
            )));
        }
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let controller = NgcModel::init(config.controller.clone(), seeds.gen())?;
        let generator = NgcModel::init(config.generator.clone(), seeds.gen())?;
        Ok(Self {
            target: controller.clone(),
            controller,
            generator,
            epsilon: config.epsilon0,
            r_max: 1.0,
            step_count: 0,
            obs_dim,
            n_actions,
            config,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn controller(&self) -> &NgcModel {
        &self.controller
    }

    pub fn controller_mut(&mut self) -> &mut NgcModel {
        &mut self.controller
    }

    pub fn target_controller(&self) -> &NgcModel {
        &self.target
    }

    pub fn target_controller_mut(&mut self) -> &mut NgcModel {
        &mut self.target
    }

    pub fn generator(&self) -> &NgcModel {
        &self.generator
    }

    pub fn generator_mut(&mut self) -> &mut NgcModel {
        &mut self.generator
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon;
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Controller value estimates for one observation.
    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(self.controller.project(obs)?)
    }

    /// ε-greedy: a uniform draw `p`, then a random action if `p < ε`, else
    /// the greedy one.
    pub fn select_action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<usize, AgentError> {
        let p: f64 = rng.gen();
        if p < self.epsilon {
            Ok(rng.gen_range(0..self.n_actions))
        } else {
            Ok(argmax(&self.q_values(obs)?))
        }
    }

    /// `[one_hot(a); obs]`, the generator's clamped input.
    pub fn generator_input(&self, obs: &[f64], action: usize) -> Result<Vec<f64>, AgentError> {
        let mut x = one_hot(action, self.n_actions)?;
        x.extend_from_slice(obs);
        Ok(x)
    }

    /// Raw generator surprise `Σ_ℓ‖e^ℓ‖²` for a transition. Does not touch
    /// the running maximum.
    pub fn generator_surprise(&self, obs: &[f64], action: usize, next_obs: &[f64]) -> Result<f64, AgentError> {
        let x = self.generator_input(obs, action)?;
        Ok(self.generator.infer(&x, next_obs)?.squared_error_sum())
    }

    /// Generator surprise normalized by its running maximum, which is raised
    /// first if needed. Always in `[0, 1]`.
    pub fn epistemic_reward(&mut self, obs: &[f64], action: usize, next_obs: &[f64]) -> Result<f64, AgentError> {
        let raw = self.generator_surprise(obs, action, next_obs)?;
        self.r_max = self.r_max.max(raw);
        Ok(raw / self.r_max)
    }

    pub fn combine_rewards(&self, epistemic: f64, external: f64) -> f64 {
        self.config.combine_rewards(epistemic, external)
    }

    /// Target vector for one stored transition.
    pub fn build_target(&self, sample: &Transition) -> Result<Vec<f64>, AgentError> {
        let t = self.build_targets(&[sample])?;
        Ok(t.column(0).to_vec())
    }

    /// Column `b` holds the target for `samples[b]`: the controller's own
    /// projection everywhere except the taken action, which gets
    /// `r` (terminal) or `r + γ·max_a target(o')`.
    pub fn build_targets(&self, samples: &[&Transition]) -> Result<Array2<f64>, AgentError> {
        let (obs, next) = self.stack_observations(samples);
        let mut targets = self.controller.project_batch(obs.view())?;
        let bootstrap = if self.config.gamma > 0.0 && samples.iter().any(|s| !s.done) {
            Some(self.target.project_batch(next.view())?)
        } else {
            None
        };
        for (b, s) in samples.iter().enumerate() {
            if s.action >= self.n_actions {
                return Err(AgentError::ActionOutOfRange {
                    action: s.action,
                    n_actions: self.n_actions,
                });
            }
            let scalar = match (&bootstrap, s.done) {
                (Some(q_next), false) => {
                    let best = q_next.column(b).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    s.reward + self.config.gamma * best
                }
                _ => s.reward,
            };
            targets[[s.action, b]] = scalar;
        }
        Ok(targets)
    }

    fn stack_observations(&self, samples: &[&Transition]) -> (Array2<f64>, Array2<f64>) {
        let mut obs = Array2::zeros((self.obs_dim, samples.len()));
        let mut next = Array2::zeros((self.obs_dim, samples.len()));
        for (b, s) in samples.iter().enumerate() {
            obs.column_mut(b).iter_mut().zip(&s.obs).for_each(|(d, &v)| *d = v);
            next.column_mut(b).iter_mut().zip(&s.next_obs).for_each(|(d, &v)| *d = v);
        }
        (obs, next)
    }

    /// One replay update of both circuits from a shared mini-batch.
    pub fn learn_step<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<LearnStats, AgentError> {
        let batch = buffer.sample(self.config.n_batch, rng)?;
        let stats = self.learn_from(&batch)?;
        self.step_count += 1;
        if self.step_count % self.config.sync_interval == 0 {
            self.sync_target();
        }
        Ok(stats)
    }

    /// Updates controller then generator on the given transitions. Does not
    /// count as a step.
    pub fn learn_from(&mut self, batch: &[&Transition]) -> Result<LearnStats, AgentError> {
        let targets = self.build_targets(batch)?;
        let (obs, next) = self.stack_observations(batch);
        let controller_loss = self.controller.fit_batch(obs.view(), targets.view())?;

        let gen_in = self.generator_batch_input(batch, &obs);
        let generator_loss = self.generator.fit_batch(gen_in.view(), next.view())?;
        Ok(LearnStats {
            controller_loss,
            generator_loss,
        })
    }

    fn generator_batch_input(&self, batch: &[&Transition], obs: &Array2<f64>) -> Array2<f64> {
        let mut gen_in = Array2::zeros((self.n_actions + self.obs_dim, batch.len()));
        for (b, t) in batch.iter().enumerate() {
            gen_in[[t.action, b]] = 1.0;
        }
        gen_in.slice_mut(s![self.n_actions.., ..]).assign(obs);
        gen_in
    }

    /// Polyak-blends the controller into the target copy.
    pub fn sync_target(&mut self) {
        self.target
            .blend_from(&self.controller, self.config.tau_c)
            .expect("target and controller share a shape");
    }

    /// `ε ← max(floor, ε·decay)`, once per finished episode.
    pub fn decay_epsilon(&mut self) {
        self.epsilon = self.config.epsilon_floor.max(self.epsilon * self.config.epsilon_decay);
    }

    /// Mean `Σ_ℓ‖e^ℓ‖²` per sample of a generator batch; used by tests and
    /// diagnostics.
    pub fn generator_surprise_batch(&self, batch: &[&Transition]) -> Result<Vec<f64>, AgentError> {
        let (obs, next) = self.stack_observations(batch);
        let gen_in = self.generator_batch_input(batch, &obs);
        let act = self.generator.infer_batch(gen_in.view(), next.view())?;
        Ok(act.squared_error_per_sample())
    }
}
