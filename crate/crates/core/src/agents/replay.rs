use rand::Rng;

use crate::env::ActionMask;

/// One transition `(s, a, r, s')` as seen by the Q-network.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state_encoding: Vec<f64>,
    pub action: usize,
    pub cost: f64,
    pub next_encoding: Vec<f64>,
    pub next_feasible: ActionMask,
    pub terminal: bool,
}

/// Returned when the memory holds fewer entries than the requested batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("replay memory holds {have} experiences, {need} required")]
pub struct NotReady {
    pub have: usize,
    pub need: usize,
}

/// Bounded FIFO ring buffer of experiences.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: Vec<Experience>,
    cursor: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest entry once full.
    pub fn push(&mut self, exp: Experience) {
        if self.items.len() < self.capacity {
            self.items.push(exp);
        } else {
            self.items[self.cursor] = exp;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Stored entries from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &Experience> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    /// Uniform sampling with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<&Experience>, NotReady> {
        if self.items.is_empty() || self.items.len() < batch_size {
            return Err(NotReady {
                have: self.items.len(),
                need: batch_size.max(1),
            });
        }
        Ok((0..batch_size)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect())
    }
}
