//! Fixed-capacity replay memory with uniform sampling (with replacement).

use crate::error::{Error, Result};
use crate::mdp::{RngStream, Transition};

#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    min_fill: usize,
    slots: Vec<Transition>,
    write_cursor: usize,
}

pub type Minibatch = Vec<Transition>;

impl ReplayMemory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be positive"));
        }
        Ok(Self {
            capacity,
            min_fill: 1,
            slots: Vec::with_capacity(capacity.min(1 << 16)),
            write_cursor: 0,
        })
    }

    /// Minimum resident count before [`sample`](Self::sample) succeeds
    /// (clamped to `[1, capacity]`).
    pub fn with_min_fill(mut self, min_fill: usize) -> Self {
        self.min_fill = min_fill.clamp(1, self.capacity);
        self
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

    pub fn is_ready(&self) -> bool {
        self.slots.len() >= self.min_fill
    }

    /// Stores `t`, overwriting the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.slots.len() < self.capacity {
            self.slots.push(t);
        } else {
            self.slots[self.write_cursor] = t;
        }
        self.write_cursor = (self.write_cursor + 1) % self.capacity;
    }

    /// Resident transitions from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.slots.len() < self.capacity { 0 } else { self.write_cursor };
        self.slots[split..].iter().chain(&self.slots[..split])
    }

    pub fn sample(&self, batch_size: usize, rng: &mut RngStream) -> Result<Minibatch> {
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !self.is_ready() || self.slots.is_empty() {
            return Err(Error::NotReady {
                count: self.slots.len(),
                required: self.min_fill,
            });
        }
        Ok((0..batch_size)
            .map(|_| self.slots[rng.below(self.slots.len())])
            .collect())
    }
}
