//! Active neural generative coding.
//!
//! A reinforcement-learning agent built from two predictive-coding circuits
//! that learn without backpropagation:
//!
//! - the **controller** maps an observation to one value estimate per
//!   discrete action and is trained toward Q-learning targets;
//! - the **generator** predicts the next observation from the current one
//!   and the chosen action, and its leftover prediction error is paid out as
//!   a curiosity reward.
//!
//! Each circuit settles its latent states iteratively with its top and
//! bottom layers clamped, then adjusts every synapse from the error below it
//! and the activity above it.
//!
//! ## Modules
//!
//! - [`ngc`]: the circuit (projection, settling, Hebbian deltas, synaptic
//!   scaling, norm-managed updates)
//! - [`optim`]: SGD, Adam and RMSprop steps applied to those deltas
//! - [`replay`]: ring-buffer experience replay
//! - [`agent`]: action selection, reward composition, targets, target sync
//! - [`envs`]: cart-pole, mountain car and a two-link reaching arm
//! - [`harness`]: episodes, trials, learning curves and aggregate reports
//! - [`checkpoint`]: bit-exact JSON checkpoints
//!
//! ```
//! use angc::ngc::{Activation, NgcConfig, NgcModel};
//!
//! let cfg = NgcConfig::new(3, &[8], 2, Activation::Tanh);
//! let mut model = NgcModel::init(cfg, 7).unwrap();
//! let before = model.infer(&[0.5, -0.2, 0.1], &[1.0, 0.0]).unwrap();
//! let deltas = model.compute_weight_deltas(&before).unwrap();
//! model.apply_update(&deltas).unwrap();
//! assert_eq!(model.project(&[0.5, -0.2, 0.1]).unwrap().len(), 2);
//! ```

pub mod agent;
pub mod checkpoint;
pub mod envs;
pub mod harness;
pub mod ngc;
pub mod optim;
pub mod replay;

pub use agent::{AgentConfig, AgentError, AngcAgent};
pub use envs::{EnvKind, Environment};
pub use harness::{ExperimentConfig, Preset};
pub use ngc::{Activation, CircuitActivity, NgcConfig, NgcError, NgcModel};
pub use optim::UpdateRule;
pub use replay::{ReplayBuffer, Transition};

// Every code block in the book runs as a doc-test of this crate.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/circuit.md")]
    mod circuit {}
    #[doc = include_str!("../../../book/src/learning.md")]
    mod learning {}
    #[doc = include_str!("../../../book/src/agent.md")]
    mod agent {}
    #[doc = include_str!("../../../book/src/environments.md")]
    mod environments {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
