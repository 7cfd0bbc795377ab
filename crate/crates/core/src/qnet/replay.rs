use rand::seq::index;

use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: [f64; 4],
    pub action: usize,
    pub reward: f64,
    pub next_state: [f64; 4],
    pub terminal: bool,
}

/// Fixed-capacity ring buffer; once full, each push evicts the oldest entry.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    buf: Vec<Transition>,
    /// Slot the next push overwrites once the buffer is full.
    head: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            buf: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.buf.len() < self.capacity {
            self.buf.push(t);
        } else {
            self.buf[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buf[self.head..].iter().chain(&self.buf[..self.head])
    }

    /// `n` distinct transitions drawn uniformly (all of them if fewer).
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Vec<Transition> {
        let n = n.min(self.buf.len());
        index::sample(rng, self.buf.len(), n)
            .into_iter()
            .map(|i| self.buf[i])
            .collect()
    }
}
