//! Self-contained control tasks behind one stepping interface.
//!
//! Every environment is deterministic given the seed passed to
//! [`Environment::reset`] and the action sequence that follows.

pub mod cartpole;
pub mod mountain_car;
pub mod robot_arm;

pub use cartpole::CartPole;
pub use mountain_car::MountainCar;
pub use robot_arm::{forward_kinematics, RobotArm, LINK_LENGTH};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: &'static str,
    pub obs_dim: usize,
    pub n_actions: usize,
    pub max_steps: usize,
    /// Trailing-100-episode mean return at which the task counts as solved.
    pub solve_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_obs: Vec<f64>,
    pub reward: f64,
    /// Failure or goal: the next state is terminal.
    pub done: bool,
    /// Cut off by the time limit; the next state is not terminal.
    pub truncated: bool,
}

impl StepResult {
    pub fn finished(&self) -> bool {
        self.done || self.truncated
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvError {
    #[error("action {action} out of range for {n_actions} actions")]
    InvalidAction { action: usize, n_actions: usize },
    #[error("episode is over; call reset before stepping again")]
    EpisodeOver,
    #[error("unknown environment `{0}` (expected cartpole, mountaincar or robotarm)")]
    UnknownEnv(String),
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode and returns its first observation.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    CartPole,
    MountainCar,
    RobotArm,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::CartPole => "cartpole",
            EnvKind::MountainCar => "mountaincar",
            EnvKind::RobotArm => "robotarm",
        }
    }

    pub fn spec(self) -> EnvSpec {
        match self {
            EnvKind::CartPole => CartPole::default_spec(),
            EnvKind::MountainCar => MountainCar::default_spec(),
            EnvKind::RobotArm => RobotArm::default_spec(),
        }
    }

    /// A fresh environment; `max_steps` overrides the task's default limit.
    pub fn make(self, max_steps: Option<usize>) -> Box<dyn Environment> {
        match self {
            EnvKind::CartPole => Box::new(CartPole::new(max_steps)),
            EnvKind::MountainCar => Box::new(MountainCar::new(max_steps)),
            EnvKind::RobotArm => Box::new(RobotArm::new(max_steps)),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "cartpole" => Ok(EnvKind::CartPole),
            "mountaincar" => Ok(EnvKind::MountainCar),
            "robotarm" => Ok(EnvKind::RobotArm),
            _ => Err(EnvError::UnknownEnv(s.to_string())),
        }
    }
}

/// Tracks the step limit and refuses to step a finished episode.
#[derive(Debug, Clone, Default)]
pub(crate) struct EpisodeClock {
    pub steps: usize,
    pub over: bool,
}

impl EpisodeClock {
    pub fn restart(&mut self) {
        self.steps = 0;
        self.over = false;
    }

    pub fn begin_step(&mut self, action: usize, spec: &EnvSpec) -> Result<(), EnvError> {
        if action >= spec.n_actions {
            return Err(EnvError::InvalidAction {
                action,
                n_actions: spec.n_actions,
            });
        }
        if self.over {
            return Err(EnvError::EpisodeOver);
        }
        self.steps += 1;
        Ok(())
    }

    /// Returns `(done, truncated)` and latches the episode as over.
    pub fn finish_step(&mut self, terminal: bool, spec: &EnvSpec) -> (bool, bool) {
        let truncated = !terminal && self.steps >= spec.max_steps;
        self.over = terminal || truncated;
        (terminal, truncated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for kind in [EnvKind::CartPole, EnvKind::MountainCar, EnvKind::RobotArm] {
            assert_eq!(kind.name().parse::<EnvKind>().unwrap(), kind);
            assert_eq!(kind.make(None).spec().name, kind.name());
        }
        assert!(matches!("lunarlander".parse::<EnvKind>(), Err(EnvError::UnknownEnv(_))));
    }

    #[test]
    fn invalid_action_and_finished_episode_are_errors() {
        for kind in [EnvKind::CartPole, EnvKind::MountainCar, EnvKind::RobotArm] {
            let mut env = kind.make(Some(1));
            env.reset(0);
            let n = env.spec().n_actions;
            assert!(matches!(env.step(n), Err(EnvError::InvalidAction { .. })));
            let r = env.step(0).unwrap();
            assert!(r.finished());
            assert_eq!(env.step(0), Err(EnvError::EpisodeOver));
            env.reset(1);
            assert!(env.step(0).is_ok());
        }
    }
}
