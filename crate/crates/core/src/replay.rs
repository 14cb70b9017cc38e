//! Bounded FIFO experience memory with uniform mini-batch sampling.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: usize,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    obs_dim: usize,
    n_actions: usize,
    buffer: VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize, obs_dim: usize, n_actions: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay_capacity", "must be >= 1"));
        }
        Ok(ReplayMemory {
            capacity,
            obs_dim,
            n_actions,
            buffer: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    /// Appends `t`, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.s.len() != self.obs_dim || t.s_next.len() != self.obs_dim {
            return Err(Error::Contract(format!(
                "transition vectors must have length {}",
                self.obs_dim
            )));
        }
        if t.a >= self.n_actions {
            return Err(Error::Contract(format!(
                "action {} outside {} actions",
                t.a, self.n_actions
            )));
        }
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(t);
        Ok(())
    }

    /// Indices (oldest = 0) of `batch` distinct transitions chosen uniformly.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.buffer.len() < batch {
            return Err(Error::NotEnoughData {
                have: self.buffer.len(),
                need: batch,
            });
        }
        Ok(index::sample(rng, self.buffer.len(), batch).into_vec())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        Ok(self
            .sample_indices(batch, rng)?
            .into_iter()
            .map(|i| &self.buffer[i])
            .collect())
    }

    /// Transition at `index`, counting from the oldest.
    pub fn get(&self, index: usize) -> &Transition {
        &self.buffer[index]
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buffer.iter()
    }
}
