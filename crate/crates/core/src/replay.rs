//! Fixed-capacity experience replay shared by the controller and generator.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    /// Combined (epistemic + instrumental) reward.
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// The transition ended the episode by failure or goal (not by a time
    /// limit), so its target must not bootstrap.
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("cannot sample from an empty replay buffer")]
pub struct EmptyBuffer;

/// Ring buffer of transitions. Once full, each push overwrites the oldest
/// surviving slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    slots: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            slots: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.slots.len() < self.capacity {
            self.slots.push(t);
        } else {
            self.slots[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Draws `n` transitions uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Transition>, EmptyBuffer> {
        if self.slots.is_empty() {
            return Err(EmptyBuffer);
        }
        Ok((0..n).map(|_| &self.slots[rng.gen_range(0..self.slots.len())]).collect())
    }

    /// Stored transitions, oldest first.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.slots.len() < self.capacity { 0 } else { self.cursor };
        self.slots[split..].iter().chain(self.slots[..split].iter())
    }
}
