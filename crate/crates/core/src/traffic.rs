//! URLLC packet generation, per-mini-slot admission capping and carry-over queueing.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficConfig {
    pub num_urllc: usize,
    /// Per-UE, per-mini-slot Bernoulli arrival probability.
    pub per_ue_prob: f64,
    /// Admission cap per mini-slot, `floor(N / L)`.
    pub cap: usize,
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.per_ue_prob) {
            return Err(Error::Config(format!("per_ue_prob {} outside [0, 1]", self.per_ue_prob)));
        }
        if self.cap == 0 {
            return Err(Error::Config("admission cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Raw and admitted URLLC packet counts for every mini-slot of one TTI.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ArrivalProfile {
    pub raw: Vec<usize>,
    pub admitted: Vec<usize>,
    pub carried_in: usize,
    pub queue_len_after: usize,
}

impl ArrivalProfile {
    /// Profile with no arrivals at all.
    pub fn empty(minislots: usize) -> Self {
        Self { raw: vec![0; minislots], admitted: vec![0; minislots], carried_in: 0, queue_len_after: 0 }
    }
}

/// One Binomial(U, p) draw per mini-slot, realized as U Bernoulli trials.
pub fn draw_arrivals<R: Rng + ?Sized>(cfg: &TrafficConfig, minislots: usize, rng: &mut R) -> Vec<usize> {
    (0..minislots)
        .map(|_| (0..cfg.num_urllc).filter(|_| rng.random_bool(cfg.per_ue_prob)).count())
        .collect()
}

/// Queue-first FIFO admission: in each mini-slot the backlog and new arrivals
/// share the cap, and whatever does not fit waits for the next mini-slot.
pub fn admit(raw: &[usize], carried_in: usize, cap: usize) -> ArrivalProfile {
    assert!(cap >= 1, "admission cap must be at least 1");
    let mut queue = carried_in;
    let admitted = raw
        .iter()
        .map(|&k| {
            queue += k;
            let a = queue.min(cap);
            queue -= a;
            a
        })
        .collect();
    ArrivalProfile { raw: raw.to_vec(), admitted, carried_in, queue_len_after: queue }
}

/// Arrival generator with the carry-over queue that persists across TTIs.
#[derive(Debug, Clone)]
pub struct UrllcSource {
    cfg: TrafficConfig,
    queue: usize,
    generated: u64,
    admitted: u64,
}

impl UrllcSource {
    pub fn new(cfg: TrafficConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, queue: 0, generated: 0, admitted: 0 })
    }

    pub fn config(&self) -> &TrafficConfig {
        &self.cfg
    }

    pub fn queue_len(&self) -> usize {
        self.queue
    }

    pub fn total_generated(&self) -> u64 {
        self.generated
    }

    pub fn total_admitted(&self) -> u64 {
        self.admitted
    }

    pub fn next_tti<R: Rng + ?Sized>(&mut self, minislots: usize, rng: &mut R) -> ArrivalProfile {
        let raw = draw_arrivals(&self.cfg, minislots, rng);
        self.admit_raw(raw)
    }

    /// Admits an externally chosen arrival pattern (used by curriculum scenarios).
    pub fn admit_raw(&mut self, raw: Vec<usize>) -> ArrivalProfile {
        let profile = admit(&raw, self.queue, self.cfg.cap);
        self.generated += raw.iter().sum::<usize>() as u64;
        self.admitted += profile.admitted.iter().sum::<usize>() as u64;
        self.queue = profile.queue_len_after;
        profile
    }

    pub fn clear_queue(&mut self) {
        self.queue = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use proptest::prelude::*;

    fn cfg(u: usize, p: f64) -> TrafficConfig {
        TrafficConfig { num_urllc: u, per_ue_prob: p, cap: 2 }
    }

    #[test]
    fn degenerate_probabilities() {
        let mut rng = SeedTree::new(1).stream("traffic", &[]);
        assert_eq!(draw_arrivals(&cfg(12, 0.0), 7, &mut rng), vec![0; 7]);
        assert_eq!(draw_arrivals(&cfg(3, 1.0), 7, &mut rng), vec![3; 7]);
    }

    #[test]
    fn empirical_mean_matches_binomial() {
        // U = 12, p = 0.08: mean 0.96 per mini-slot
        let c = cfg(12, 0.08);
        let mut rng = SeedTree::new(7).stream("traffic", &[]);
        let n = 100_000;
        let total: usize = (0..n).map(|_| draw_arrivals(&c, 1, &mut rng)[0]).sum();
        let mean = total as f64 / n as f64;
        let sigma = (12.0 * 0.08 * 0.92 / n as f64).sqrt();
        assert!((mean - 0.96).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn overflow_spills_to_next_minislot() {
        let p = admit(&[3, 0, 0, 0, 0, 0, 0], 0, 2);
        assert_eq!(p.admitted, vec![2, 1, 0, 0, 0, 0, 0]);
        assert_eq!(p.queue_len_after, 0);
    }

    #[test]
    fn carried_queue_drains_first() {
        let p = admit(&[0; 7], 5, 2);
        assert_eq!(p.admitted, vec![2, 2, 1, 0, 0, 0, 0]);
        assert_eq!(p.queue_len_after, 0);
    }

    #[test]
    fn at_cap_passthrough() {
        let p = admit(&[2; 7], 0, 2);
        assert_eq!(p.admitted, vec![2; 7]);
        assert_eq!(p.queue_len_after, 0);
    }

    #[test]
    fn queue_persists_across_ttis() {
        let mut src = UrllcSource::new(TrafficConfig { num_urllc: 4, per_ue_prob: 1.0, cap: 1 }).unwrap();
        let mut rng = SeedTree::new(3).stream("traffic", &[]);
        let p = src.next_tti(7, &mut rng);
        assert_eq!(p.admitted, vec![1; 7]);
        assert_eq!(p.queue_len_after, 21);
        let p = src.next_tti(7, &mut rng);
        assert_eq!(p.carried_in, 21);
        assert_eq!(p.queue_len_after, 42);
    }

    #[test]
    fn invalid_probability_rejected() {
        assert!(UrllcSource::new(cfg(3, 1.5)).is_err());
    }

    proptest! {
        #[test]
        fn admission_conserves_packets(raw in prop::collection::vec(0usize..6, 1..10), carried in 0usize..10, cap in 1usize..5) {
            let p = admit(&raw, carried, cap);
            prop_assert_eq!(carried + raw.iter().sum::<usize>(), p.admitted.iter().sum::<usize>() + p.queue_len_after);
            let mut queue = carried;
            for (a, r) in p.admitted.iter().zip(&raw) {
                prop_assert!(*a <= cap);
                prop_assert!(*a <= r + queue);
                queue = queue + r - a;
            }
        }

        #[test]
        fn source_conservation(seed in 0u64..1000, p in 0.0f64..1.0) {
            let mut src = UrllcSource::new(TrafficConfig { num_urllc: 5, per_ue_prob: p, cap: 2 }).unwrap();
            let mut rng = SeedTree::new(seed).stream("traffic", &[]);
            for _ in 0..20 {
                src.next_tti(7, &mut rng);
            }
            prop_assert_eq!(src.total_generated(), src.total_admitted() + src.queue_len() as u64);
        }
    }
}
