//! Experiment configuration: presets, flat `section.key = value` files and
//! command-line overrides.
//!
//! Sections are `controller.`, `generator.`, `agent.`, `env.` and `run.`.
//! Later assignments win. `env.name` and `run.preset` are resolved before
//! everything else because they decide the circuit shapes.

use crate::agent::AgentConfig;
use crate::envs::{EnvKind, EnvSpec};
use crate::ngc::{Activation, NgcConfig};
use crate::optim::UpdateRule;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {reason}")]
    Value { key: String, reason: String },
    #[error("unknown preset `{0}` (expected cartpole, mountaincar or robotarm)")]
    UnknownPreset(String),
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

/// Hyperparameters of one circuit that do not depend on the task's
/// observation or action counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitPreset {
    /// Hidden widths listed from the input side.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub rule: UpdateRule,
    pub eta: f64,
}

impl CircuitPreset {
    fn build(&self, input_dim: usize, output_dim: usize) -> NgcConfig {
        let mut c = NgcConfig::new(input_dim, &self.hidden, output_dim, self.activation);
        c.update_rule = self.rule;
        c.eta = self.eta;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    CartPole,
    MountainCar,
    RobotArm,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::CartPole => "cartpole",
            Preset::MountainCar => "mountaincar",
            Preset::RobotArm => "robotarm",
        }
    }

    pub fn for_env(kind: EnvKind) -> Self {
        match kind {
            EnvKind::CartPole => Preset::CartPole,
            EnvKind::MountainCar => Preset::MountainCar,
            EnvKind::RobotArm => Preset::RobotArm,
        }
    }

    pub fn circuits(self) -> (CircuitPreset, CircuitPreset) {
        use Activation::*;
        use UpdateRule::*;
        let c = |hidden: &[usize], activation, rule, eta| CircuitPreset {
            hidden: hidden.to_vec(),
            activation,
            rule,
            eta,
        };
        match self {
            Preset::CartPole => (c(&[256, 128], Relu, Rmsprop, 5e-4), c(&[256, 128], Relu, Adam, 1e-3)),
            Preset::MountainCar => (c(&[128, 128], Relu6, Adam, 1e-3), c(&[128, 128], Relu6, Adam, 1e-3)),
            Preset::RobotArm => (c(&[512, 256], Relu, Adam, 5e-4), c(&[256, 128], Relu, Adam, 1e-3)),
        }
    }

    /// Agent hyperparameters for a task with the given shape.
    pub fn agent_config(self, spec: &EnvSpec) -> AgentConfig {
        let (ctrl, gen) = self.circuits();
        let (epsilon_decay, sync_interval, replay_capacity, n_batch) = match self {
            Preset::CartPole => (0.97, 100, 1_000_000, 256),
            Preset::MountainCar => (0.95, 200, 500_000, 128),
            Preset::RobotArm => (0.97, 100, 1_000_000, 256),
        };
        AgentConfig {
            alpha_e: 1.0,
            alpha_i: 1.0,
            gamma: 0.99,
            epsilon0: 1.0,
            epsilon_decay,
            epsilon_floor: 0.05,
            sync_interval,
            tau_c: 1.0,
            n_batch,
            replay_capacity,
            controller: ctrl.build(spec.obs_dim, spec.n_actions),
            generator: gen.build(spec.obs_dim + spec.n_actions, spec.obs_dim),
        }
    }
}

impl FromStr for Preset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "cartpole" => Ok(Preset::CartPole),
            "mountaincar" => Ok(Preset::MountainCar),
            "robotarm" => Ok(Preset::RobotArm),
            _ => Err(ConfigError::UnknownPreset(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub preset: Preset,
    pub episodes: usize,
    /// Overrides the task's own step limit.
    pub max_steps: Option<usize>,
    pub seeds: Vec<u64>,
    pub agent: AgentConfig,
    pub output_dir: Option<PathBuf>,
    /// Write a resumable checkpoint every this many episodes (0: never).
    pub checkpoint_every: usize,
    /// Log a progress line every this many episodes (0: never).
    pub log_every: usize,
    pub workers: usize,
    /// Run replay updates. Off only makes sense for a pinned random policy.
    pub learn: bool,
}

impl ExperimentConfig {
    /// Table defaults for `preset` on `env`, ten trials seeded `0..10`.
    pub fn new(env: EnvKind, preset: Preset) -> Self {
        Self {
            env,
            preset,
            episodes: 1000,
            max_steps: None,
            seeds: (0..10).collect(),
            agent: preset.agent_config(&env.spec()),
            output_dir: None,
            checkpoint_every: 0,
            log_every: 0,
            workers: 1,
            learn: true,
        }
    }

    pub fn n_trials(&self) -> usize {
        self.seeds.len()
    }

    pub fn env_spec(&self) -> EnvSpec {
        let mut spec = self.env.spec();
        if let Some(t) = self.max_steps {
            spec.max_steps = t;
        }
        spec
    }

    /// Pins ε at 1 and skips learning: the uniform random baseline.
    pub fn make_random_policy(&mut self) {
        self.agent.epsilon0 = 1.0;
        self.agent.epsilon_decay = 1.0;
        self.agent.epsilon_floor = 1.0;
        self.learn = false;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.episodes == 0 {
            return Err(ConfigError::Invalid("episodes must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("at least one seed is required".into()));
        }
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        if self.max_steps == Some(0) {
            return Err(ConfigError::Invalid("max_steps must be at least 1".into()));
        }
        let spec = self.env.spec();
        self.agent
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let c = &self.agent.controller;
        let g = &self.agent.generator;
        if c.input_dim() != spec.obs_dim
            || c.output_dim() != spec.n_actions
            || g.input_dim() != spec.obs_dim + spec.n_actions
            || g.output_dim() != spec.obs_dim
        {
            return Err(ConfigError::Invalid(format!(
                "circuit shapes do not fit {} ({} observations, {} actions)",
                spec.name, spec.obs_dim, spec.n_actions
            )));
        }
        Ok(())
    }

    /// Builds a config from `key = value` text followed by `overrides`.
    /// Missing `env.name` defaults to cartpole; a missing `run.preset`
    /// follows the environment.
    pub fn from_assignments(text: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut pairs = parse_assignments(text)?;
        pairs.extend(overrides.iter().cloned());
        let last = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.clone());
        let env = match last("env.name") {
            Some(v) => v.parse::<EnvKind>().map_err(|e| ConfigError::Value {
                key: "env.name".into(),
                reason: e.to_string(),
            })?,
            None => EnvKind::CartPole,
        };
        let preset = match last("run.preset") {
            Some(v) => v.parse()?,
            None => Preset::for_env(env),
        };
        let mut cfg = Self::new(env, preset);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let (section, field) = key.split_once('.').ok_or_else(|| ConfigError::UnknownKey(key.into()))?;
        match section {
            "controller" => set_circuit(&mut self.agent.controller, key, field, value),
            "generator" => set_circuit(&mut self.agent.generator, key, field, value),
            "agent" => {
                let a = &mut self.agent;
                match field {
                    "alpha_e" => a.alpha_e = num(key, value)?,
                    "alpha_i" => a.alpha_i = num(key, value)?,
                    "gamma" => a.gamma = num(key, value)?,
                    "epsilon0" | "epsilon" => a.epsilon0 = num(key, value)?,
                    "epsilon_decay" => a.epsilon_decay = num(key, value)?,
                    "epsilon_floor" => a.epsilon_floor = num(key, value)?,
                    "sync_interval" | "c" => a.sync_interval = num(key, value)?,
                    "tau_c" => a.tau_c = num(key, value)?,
                    "n_batch" => a.n_batch = num(key, value)?,
                    "n_mem" | "replay_capacity" => a.replay_capacity = num(key, value)?,
                    _ => return Err(ConfigError::UnknownKey(key.into())),
                }
                Ok(())
            }
            "env" => match field {
                "name" => {
                    let kind: EnvKind = value.parse().map_err(|e: crate::envs::EnvError| ConfigError::Value {
                        key: key.into(),
                        reason: e.to_string(),
                    })?;
                    if kind != self.env {
                        return Err(ConfigError::Value {
                            key: key.into(),
                            reason: format!("environment is already {}", self.env),
                        });
                    }
                    Ok(())
                }
                "max_steps" => {
                    self.max_steps = Some(num(key, value)?);
                    Ok(())
                }
                _ => Err(ConfigError::UnknownKey(key.into())),
            },
            "run" => {
                match field {
                    "preset" => {
                        let p: Preset = value.parse()?;
                        if p != self.preset {
                            return Err(ConfigError::Value {
                                key: key.into(),
                                reason: format!("preset is already {}", self.preset.name()),
                            });
                        }
                    }
                    "episodes" => self.episodes = num(key, value)?,
                    "seeds" => self.seeds = list(key, value)?,
                    "trials" => {
                        let n: u64 = num(key, value)?;
                        let base = self.seeds.first().copied().unwrap_or(0);
                        self.seeds = (base..base + n).collect();
                    }
                    "seed_base" => {
                        let base: u64 = num(key, value)?;
                        let n = self.seeds.len() as u64;
                        self.seeds = (base..base + n).collect();
                    }
                    "output_dir" | "out" => self.output_dir = Some(PathBuf::from(value)),
                    "checkpoint_every" => self.checkpoint_every = num(key, value)?,
                    "log_every" => self.log_every = num(key, value)?,
                    "workers" => self.workers = num(key, value)?,
                    "learn" => self.learn = num(key, value)?,
                    _ => return Err(ConfigError::UnknownKey(key.into())),
                }
                Ok(())
            }
            _ => Err(ConfigError::UnknownKey(key.into())),
        }
    }

    /// Renders the full configuration as assignments that
    /// [`from_assignments`](Self::from_assignments) reads back.
    pub fn to_assignments(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "env.name = {}", self.env);
        if let Some(t) = self.max_steps {
            let _ = writeln!(s, "env.max_steps = {t}");
        }
        let _ = writeln!(s, "run.preset = {}", self.preset.name());
        let _ = writeln!(s, "run.episodes = {}", self.episodes);
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(s, "run.seeds = {}", seeds.join(","));
        let _ = writeln!(s, "run.checkpoint_every = {}", self.checkpoint_every);
        let _ = writeln!(s, "run.log_every = {}", self.log_every);
        let _ = writeln!(s, "run.learn = {}", self.learn);
        let a = &self.agent;
        for (k, v) in [
            ("alpha_e", a.alpha_e.to_string()),
            ("alpha_i", a.alpha_i.to_string()),
            ("gamma", a.gamma.to_string()),
            ("epsilon0", a.epsilon0.to_string()),
            ("epsilon_decay", a.epsilon_decay.to_string()),
            ("epsilon_floor", a.epsilon_floor.to_string()),
            ("sync_interval", a.sync_interval.to_string()),
            ("tau_c", a.tau_c.to_string()),
            ("n_batch", a.n_batch.to_string()),
            ("n_mem", a.replay_capacity.to_string()),
        ] {
            let _ = writeln!(s, "agent.{k} = {v}");
        }
        for (name, c) in [("controller", &a.controller), ("generator", &a.generator)] {
            write_circuit(&mut s, name, c);
        }
        s
    }
}

fn write_circuit(s: &mut String, name: &str, c: &NgcConfig) {
    let depth = c.depth();
    let hidden: Vec<String> = c.layer_dims[1..depth].iter().rev().map(|d| d.to_string()).collect();
    let _ = writeln!(s, "{name}.hidden = {}", hidden.join(","));
    let acts: Vec<String> = c.activations.iter().map(|a| a.to_string()).collect();
    let _ = writeln!(s, "{name}.activations = {}", acts.join(","));
    for (k, v) in [
        ("rule", c.update_rule.to_string()),
        ("eta", c.eta.to_string()),
        ("beta", c.beta.to_string()),
        ("beta_e", c.beta_e.to_string()),
        ("gamma_v", c.gamma_v.to_string()),
        ("gamma_e", c.gamma_e.to_string()),
        ("k", c.k_steps.to_string()),
        ("gamma_s", c.gamma_s.to_string()),
        ("modulation", c.modulation.to_string()),
        ("init_std", c.init_std.to_string()),
        ("rescale_target", c.rescale_target.to_string()),
        ("c_eps", c.c_eps.to_string()),
    ] {
        let _ = writeln!(s, "{name}.{k} = {v}");
    }
}

fn set_circuit(c: &mut NgcConfig, key: &str, field: &str, value: &str) -> Result<(), ConfigError> {
    match field {
        "hidden" => {
            let hidden: Vec<usize> = if value.is_empty() { Vec::new() } else { list(key, value)? };
            let hidden_act = c
                .activations
                .get(1)
                .filter(|_| c.depth() > 1)
                .copied()
                .unwrap_or(Activation::Relu);
            let (input, output) = (c.input_dim(), c.output_dim());
            let rebuilt = NgcConfig::new(input, &hidden, output, hidden_act);
            c.layer_dims = rebuilt.layer_dims;
            c.activations = rebuilt.activations;
        }
        "activation" => {
            let act: Activation = parse(key, value)?;
            let depth = c.depth();
            for a in &mut c.activations[1..depth] {
                *a = act;
            }
        }
        "activations" => {
            let acts: Vec<Activation> = list(key, value)?;
            if acts.len() != c.layer_dims.len() {
                return Err(ConfigError::Value {
                    key: key.into(),
                    reason: format!("{} activations for {} layers", acts.len(), c.layer_dims.len()),
                });
            }
            c.activations = acts;
        }
        "rule" => c.update_rule = parse(key, value)?,
        "eta" => c.eta = num(key, value)?,
        "beta" => c.beta = num(key, value)?,
        "beta_e" => c.beta_e = num(key, value)?,
        "gamma_v" => c.gamma_v = num(key, value)?,
        "gamma_e" => c.gamma_e = num(key, value)?,
        "k" | "k_steps" => c.k_steps = num(key, value)?,
        "gamma_s" => c.gamma_s = num(key, value)?,
        "modulation" => c.modulation = num(key, value)?,
        "init_std" => c.init_std = num(key, value)?,
        "rescale_target" => c.rescale_target = num(key, value)?,
        "c_eps" => c.c_eps = num(key, value)?,
        _ => return Err(ConfigError::UnknownKey(key.into())),
    }
    Ok(())
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        reason: e.to_string(),
    })
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    parse(key, value)
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

/// Splits `key = value` lines; `#` starts a comment.
pub fn parse_assignments(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartpole_preset_matches_table() {
        let cfg = ExperimentConfig::new(EnvKind::CartPole, Preset::CartPole);
        let a = &cfg.agent;
        assert_eq!(a.controller.layer_dims, vec![2, 128, 256, 4]);
        assert_eq!(a.generator.layer_dims, vec![4, 128, 256, 6]);
        assert_eq!(a.controller.update_rule, UpdateRule::Rmsprop);
        assert_eq!(a.controller.eta, 5e-4);
        assert_eq!(a.generator.update_rule, UpdateRule::Adam);
        assert_eq!((a.epsilon_decay, a.sync_interval, a.gamma, a.n_batch), (0.97, 100, 0.99, 256));
        assert_eq!(a.replay_capacity, 1_000_000);
        assert_eq!(a.controller.init_std, 0.025);
        assert_eq!((a.alpha_e, a.alpha_i), (1.0, 1.0));
    }

    #[test]
    fn mountaincar_preset_uses_relu6() {
        let cfg = ExperimentConfig::new(EnvKind::MountainCar, Preset::MountainCar);
        let c = &cfg.agent.controller;
        assert_eq!(c.layer_dims, vec![3, 128, 128, 2]);
        assert_eq!(
            c.activations,
            vec![Activation::Identity, Activation::Relu6, Activation::Relu6, Activation::Identity]
        );
        assert_eq!(cfg.agent.epsilon_decay, 0.95);
        assert_eq!(cfg.agent.sync_interval, 200);
    }

    #[test]
    fn assignments_round_trip() {
        let text = "env.name = mountaincar\nrun.episodes = 7 # short\ncontroller.hidden = 8,4\nagent.alpha_e = 0\n";
        let cfg = ExperimentConfig::from_assignments(text, &[("run.seeds".into(), "3,3".into())]).unwrap();
        assert_eq!(cfg.env, EnvKind::MountainCar);
        assert_eq!(cfg.episodes, 7);
        assert_eq!(cfg.agent.controller.layer_dims, vec![3, 4, 8, 2]);
        assert_eq!(cfg.seeds, vec![3, 3]);
        let again = ExperimentConfig::from_assignments(&cfg.to_assignments(), &[]).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(matches!(parse_assignments("novalue"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(
            ExperimentConfig::from_assignments("agent.bogus = 1", &[]),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_assignments("agent.gamma = x", &[]),
            Err(ConfigError::Value { .. })
        ));
        assert!(ExperimentConfig::from_assignments("agent.gamma = 2", &[]).is_err());
    }

    #[test]
    fn trials_and_seed_base_compose() {
        let cfg = ExperimentConfig::from_assignments("run.trials = 3\nrun.seed_base = 10", &[]).unwrap();
        assert_eq!(cfg.seeds, vec![10, 11, 12]);
    }
}
