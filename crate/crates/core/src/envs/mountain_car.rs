use super::{EnvError, EnvSpec, Environment, EpisodeClock, StepResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.5;
const FORCE: f64 = 0.001;
const GRAVITY: f64 = 0.0025;

/// Under-powered car in a valley. Observation `[x, v]`; actions push left,
/// coast, push right. Every step pays `-1`.
#[derive(Debug, Clone)]
pub struct MountainCar {
    spec: EnvSpec,
    position: f64,
    velocity: f64,
    clock: EpisodeClock,
}

impl MountainCar {
    pub fn default_spec() -> EnvSpec {
        EnvSpec {
            name: "mountaincar",
            obs_dim: 2,
            n_actions: 3,
            max_steps: 200,
            solve_threshold: -110.0,
        }
    }

    pub fn new(max_steps: Option<usize>) -> Self {
        let mut spec = Self::default_spec();
        if let Some(t) = max_steps {
            spec.max_steps = t;
        }
        Self {
            spec,
            position: -0.5,
            velocity: 0.0,
            clock: EpisodeClock::default(),
        }
    }

    pub fn state(&self) -> [f64; 2] {
        [self.position, self.velocity]
    }

    pub fn set_state(&mut self, position: f64, velocity: f64) {
        self.position = position;
        self.velocity = velocity;
    }
}

impl Environment for MountainCar {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.position = rng.gen_range(-0.6..=-0.4);
        self.velocity = 0.0;
        self.clock.restart();
        self.state().to_vec()
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        self.clock.begin_step(action, &self.spec)?;
        self.velocity += (action as f64 - 1.0) * FORCE - GRAVITY * (3.0 * self.position).cos();
        self.velocity = self.velocity.clamp(-MAX_SPEED, MAX_SPEED);
        self.position = (self.position + self.velocity).clamp(MIN_POSITION, MAX_POSITION);
        if self.position <= MIN_POSITION && self.velocity < 0.0 {
            self.velocity = 0.0;
        }
        let (done, truncated) = self.clock.finish_step(self.position >= GOAL_POSITION, &self.spec);
        Ok(StepResult {
            next_obs: self.state().to_vec(),
            reward: -1.0,
            done,
            truncated,
        })
    }
}
