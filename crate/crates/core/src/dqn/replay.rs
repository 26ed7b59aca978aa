use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One stored transition `(s, a, r, s', terminal)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Bounded FIFO replay memory; inserting into a full buffer evicts the
/// oldest experience.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: VecDeque<Experience>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            storage: VecDeque::with_capacity(capacity.min(1 << 20)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, experience: Experience) {
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(experience);
    }

    pub fn get(&self, index: usize) -> Option<&Experience> {
        self.storage.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.storage.iter()
    }

    /// `m` indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, m: usize, rng: &mut R, out: &mut Vec<usize>) -> Result<()> {
        if self.storage.is_empty() {
            return Err(Error::State("cannot sample from an empty replay buffer"));
        }
        let n = self.storage.len();
        out.clear();
        out.extend((0..m).map(|_| rng.random_range(0..n)));
        Ok(())
    }

    pub fn sample_minibatch<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<&Experience>> {
        let mut idx = Vec::with_capacity(m);
        self.sample_indices(m, rng, &mut idx)?;
        Ok(idx.into_iter().map(|i| &self.storage[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    fn exp(tag: usize) -> Experience {
        Experience {
            state: vec![tag as f64],
            action: tag,
            reward: tag as f64,
            next_state: vec![0.0],
            terminal: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3);
        for i in 1..=5 {
            b.push(exp(i));
        }
        let tags: Vec<usize> = b.iter().map(|e| e.action).collect();
        assert_eq!(tags, vec![3, 4, 5]);
    }

    #[test]
    fn overflow_by_one_drops_first() {
        let mut b = ReplayBuffer::new(4);
        for i in 0..5 {
            b.push(exp(i));
        }
        assert_eq!(b.len(), 4);
        assert!(b.iter().all(|e| e.action != 0));
    }

    #[test]
    fn single_element_sampling() {
        let mut b = ReplayBuffer::new(10);
        b.push(exp(7));
        let mut rng = SimRng::seed_from_u64(1);
        let batch = b.sample_minibatch(4, &mut rng).unwrap();
        assert_eq!(batch.len(), 4);
        assert!(batch.iter().all(|e| **e == exp(7)));
    }

    #[test]
    fn empty_buffer_errors() {
        let b = ReplayBuffer::new(10);
        let mut rng = SimRng::seed_from_u64(1);
        assert!(matches!(b.sample_minibatch(1, &mut rng), Err(Error::State(_))));
    }

    #[test]
    fn sampling_is_seeded() {
        let mut b = ReplayBuffer::new(100);
        (0..50).for_each(|i| b.push(exp(i)));
        let draw = |seed| {
            let mut rng = SimRng::seed_from_u64(seed);
            b.sample_minibatch(32, &mut rng)
                .unwrap()
                .iter()
                .map(|e| e.action)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }
}
