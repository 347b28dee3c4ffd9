use super::{EnvError, EnvSpec, Environment, EpisodeClock, StepResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const TOTAL_MASS: f64 = CART_MASS + POLE_MASS;
/// Half the pole's length.
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = POLE_MASS * HALF_LENGTH;
const FORCE: f64 = 10.0;
const DT: f64 = 0.02;
const X_LIMIT: f64 = 2.4;
const THETA_LIMIT_DEG: f64 = 15.0;

/// Pole balancing on a cart, Euler-integrated.
///
/// Observation `[x, ẋ, θ, θ̇]`; action 0 pushes left, 1 pushes right.
/// Every step, including the failing one, pays `+1`.
#[derive(Debug, Clone)]
pub struct CartPole {
    spec: EnvSpec,
    state: [f64; 4],
    clock: EpisodeClock,
}

impl CartPole {
    pub fn default_spec() -> EnvSpec {
        EnvSpec {
            name: "cartpole",
            obs_dim: 4,
            n_actions: 2,
            max_steps: 500,
            solve_threshold: 475.0,
        }
    }

    pub fn new(max_steps: Option<usize>) -> Self {
        let mut spec = Self::default_spec();
        if let Some(t) = max_steps {
            spec.max_steps = t;
        }
        Self {
            spec,
            state: [0.0; 4],
            clock: EpisodeClock::default(),
        }
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    /// Overwrites the physical state mid-episode.
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
    }

    fn failed(&self) -> bool {
        let [x, _, theta, _] = self.state;
        x.abs() > X_LIMIT || theta.abs() > THETA_LIMIT_DEG.to_radians()
    }
}

impl Environment for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut self.state {
            *v = rng.gen_range(-0.05..=0.05);
        }
        self.clock.restart();
        self.state.to_vec()
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        self.clock.begin_step(action, &self.spec)?;
        let [x, x_dot, theta, theta_dot] = self.state;
        let force = if action == 1 { FORCE } else { -FORCE };
        let (sin, cos) = theta.sin_cos();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc =
            (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
        self.state = [
            x + DT * x_dot,
            x_dot + DT * x_acc,
            theta + DT * theta_dot,
            theta_dot + DT * theta_acc,
        ];
        let (done, truncated) = self.clock.finish_step(self.failed(), &self.spec);
        Ok(StepResult {
            next_obs: self.state.to_vec(),
            reward: 1.0,
            done,
            truncated,
        })
    }
}
