//! Experience records and the circular replay buffer.

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{PuncturingVector, ScheduleVector};

/// One TTI of experience: schedule, admitted counts, applied punctures, reward.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceRecord {
    pub schedule: ScheduleVector,
    /// Admitted packets per mini-slot.
    pub admitted: Vec<usize>,
    /// `Y(t)`, one vector per mini-slot.
    pub punctures: Vec<PuncturingVector>,
    pub reward: f64,
}

impl ExperienceRecord {
    /// Checks `sum Y[tau] = k[tau] * L` and `r` in `[-1, 0]`.
    pub fn check(&self, urllc_sc_len: usize) -> Result<()> {
        if self.admitted.len() != self.punctures.len() {
            return Err(Error::Shape(format!(
                "{} admitted counts but {} puncturing vectors",
                self.admitted.len(),
                self.punctures.len()
            )));
        }
        for (tau, (k, y)) in self.admitted.iter().zip(&self.punctures).enumerate() {
            y.check(&self.schedule, k * urllc_sc_len).map_err(|e| Error::Contract(format!("mini-slot {tau}: {e}")))?;
        }
        if !(-1.0..=0.0).contains(&self.reward) {
            return Err(Error::Contract(format!("reward {} outside [-1, 0]", self.reward)));
        }
        Ok(())
    }

    pub fn minislots(&self) -> usize {
        self.admitted.len()
    }
}

/// Fixed-capacity FIFO buffer with circular indexing.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    records: Vec<ExperienceRecord>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay buffer capacity must be positive".into()));
        }
        Ok(Self { capacity, records: Vec::with_capacity(capacity.min(1 << 16)), next: 0 })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Overwrites the oldest record once full.
    pub fn push(&mut self, rec: ExperienceRecord) {
        if self.records.len() < self.capacity {
            self.records.push(rec);
        } else {
            self.records[self.next] = rec;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Records from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &ExperienceRecord> {
        let split = if self.records.len() < self.capacity { 0 } else { self.next };
        self.records[split..].iter().chain(&self.records[..split])
    }

    /// `h` uniform draws with replacement, or `None` while fewer than `h` records are stored.
    pub fn sample<R: Rng + ?Sized>(&self, h: usize, rng: &mut R) -> Option<Vec<&ExperienceRecord>> {
        if h == 0 || self.records.len() < h {
            return None;
        }
        Some((0..h).map(|_| &self.records[rng.random_range(0..self.records.len())]).collect())
    }

    pub fn clear(&mut self) {
        self.records.clear();
        self.next = 0;
    }
}
