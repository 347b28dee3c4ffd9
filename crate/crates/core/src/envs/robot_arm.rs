use super::{EnvError, EnvSpec, Environment, EpisodeClock, StepResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

/// Length of each of the two links, in pixels.
pub const LINK_LENGTH: f64 = 100.0;
/// Joint increment per action, in radians.
pub const JOINT_STEP: f64 = 0.01;
/// Radius of the goal ball around the target, in pixels.
pub const GOAL_RADIUS: f64 = 10.0;
/// The episode ends once the running return reaches `±RETURN_LIMIT`.
pub const RETURN_LIMIT: f64 = 10.0;

/// Joint deltas `(Δθ₁, Δθ₂)` per action: hold, ±joint 1, ±joint 2, ±both.
const ACTIONS: [(f64, f64); 7] = [
    (0.0, 0.0),
    (JOINT_STEP, 0.0),
    (-JOINT_STEP, 0.0),
    (0.0, JOINT_STEP),
    (0.0, -JOINT_STEP),
    (JOINT_STEP, JOINT_STEP),
    (-JOINT_STEP, -JOINT_STEP),
];

/// Tip position of the two-link planar arm with its base at the origin.
pub fn forward_kinematics(theta1: f64, theta2: f64) -> (f64, f64) {
    let (s1, c1) = theta1.sin_cos();
    let (s12, c12) = (theta1 + theta2).sin_cos();
    (LINK_LENGTH * c1 + LINK_LENGTH * c12, LINK_LENGTH * s1 + LINK_LENGTH * s12)
}

/// Two-link planar reaching task.
///
/// Observation `[target_x/200, target_y/200, θ₁, θ₂]`: target pixels
/// scaled by the arm's reach, joints in radians. The arm
/// starts at `θ = (0, 0)` every episode and the target is drawn uniformly
/// over the reachable disc.
///
/// Reward per step: `+1` inside the goal ball, otherwise `-1` when the
/// tip did not get closer to the target and `0` when it did.
#[derive(Debug, Clone)]
pub struct RobotArm {
    spec: EnvSpec,
    joints: (f64, f64),
    target: (f64, f64),
    last_distance: f64,
    episode_return: f64,
    clock: EpisodeClock,
}

impl RobotArm {
    pub fn default_spec() -> EnvSpec {
        EnvSpec {
            name: "robotarm",
            obs_dim: 4,
            n_actions: ACTIONS.len(),
            max_steps: 100,
            solve_threshold: 0.0,
        }
    }

    pub fn new(max_steps: Option<usize>) -> Self {
        let mut spec = Self::default_spec();
        if let Some(t) = max_steps {
            spec.max_steps = t;
        }
        let mut arm = Self {
            spec,
            joints: (0.0, 0.0),
            target: (LINK_LENGTH, 0.0),
            last_distance: 0.0,
            episode_return: 0.0,
            clock: EpisodeClock::default(),
        };
        arm.last_distance = arm.distance();
        arm
    }

    pub fn joints(&self) -> (f64, f64) {
        self.joints
    }

    pub fn target(&self) -> (f64, f64) {
        self.target
    }

    pub fn tip(&self) -> (f64, f64) {
        forward_kinematics(self.joints.0, self.joints.1)
    }

    pub fn distance(&self) -> f64 {
        let (x, y) = self.tip();
        (x - self.target.0).hypot(y - self.target.1)
    }

    /// Places the target explicitly; the distance baseline is reset to it.
    pub fn set_target(&mut self, x: f64, y: f64) {
        self.target = (x, y);
        self.last_distance = self.distance();
    }

    pub fn set_joints(&mut self, theta1: f64, theta2: f64) {
        self.joints = (theta1, theta2);
        self.last_distance = self.distance();
    }

    fn observe(&self) -> Vec<f64> {
        let reach = 2.0 * LINK_LENGTH;
        vec![self.target.0 / reach, self.target.1 / reach, self.joints.0, self.joints.1]
    }
}

impl Environment for RobotArm {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // uniform over the disc of radius 2L
        let reach = 2.0 * LINK_LENGTH;
        let r = reach * rng.gen::<f64>().sqrt();
        let phi = TAU * rng.gen::<f64>();
        self.joints = (0.0, 0.0);
        self.target = (r * phi.cos(), r * phi.sin());
        self.last_distance = self.distance();
        self.episode_return = 0.0;
        self.clock.restart();
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        self.clock.begin_step(action, &self.spec)?;
        let (d1, d2) = ACTIONS[action];
        self.joints = (self.joints.0 + d1, self.joints.1 + d2);
        let d = self.distance();
        let reward = if d < GOAL_RADIUS {
            1.0
        } else if d < self.last_distance {
            0.0
        } else {
            -1.0
        };
        self.last_distance = d;
        self.episode_return += reward;
        let terminal = self.episode_return.abs() >= RETURN_LIMIT;
        let (done, truncated) = self.clock.finish_step(terminal, &self.spec);
        Ok(StepResult {
            next_obs: self.observe(),
            reward,
            done,
            truncated,
        })
    }
}
