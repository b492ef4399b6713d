//! Curriculum pre-training: repeat a fixed scenario for a window of TTIs,
//! then shrink the window and raise the URLLC load stage by stage.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::TtiTrace;
use crate::sac::SacAgent;
use crate::traffic::ArrivalProfile;

use super::world::World;

/// Reporting window of the moving-average reward, in TTIs.
pub const REWARD_WINDOW: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CurriculumStage {
    /// Packets per TTI in every scenario; `None` trains on live Bernoulli traffic.
    pub urllc_count: Option<usize>,
    /// Consecutive TTIs that replay one scenario.
    pub window: usize,
    /// Training TTIs spent in this stage.
    pub episodes: usize,
}

impl CurriculumStage {
    pub const fn fixed(urllc_count: usize, window: usize, episodes: usize) -> Self {
        Self { urllc_count: Some(urllc_count), window, episodes }
    }

    pub const fn live(episodes: usize) -> Self {
        Self { urllc_count: None, window: 1, episodes }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.episodes == 0 {
            return Err(Error::Config(format!("stage {self:?} needs window >= 1 and episodes >= 1")));
        }
        Ok(())
    }
}

/// The reference ladder: (packets, window, episodes).
pub fn default_ladder() -> Vec<CurriculumStage> {
    [(1, 50, 10_000), (2, 40, 10_000), (3, 30, 10_000), (4, 20, 14_000), (5, 10, 14_000), (6, 5, 14_000), (7, 2, 14_000), (8, 1, 14_000), (9, 1, 14_000)]
        .into_iter()
        .map(|(k, w, e)| CurriculumStage::fixed(k, w, e))
        .collect()
}

/// Cumulative TTI count at the end of each stage.
pub fn stage_boundaries(stages: &[CurriculumStage]) -> Vec<u64> {
    stages
        .iter()
        .scan(0u64, |acc, s| {
            *acc += s.episodes as u64;
            Some(*acc)
        })
        .collect()
}

/// Running mean over the last `window` values.
#[derive(Debug, Clone)]
pub struct MovingAverage {
    window: usize,
    values: VecDeque<f64>,
    sum: f64,
}

impl MovingAverage {
    pub fn new(window: usize) -> Self {
        assert!(window > 0, "moving-average window must be positive");
        Self { window, values: VecDeque::with_capacity(window), sum: 0.0 }
    }

    pub fn push(&mut self, v: f64) -> f64 {
        self.values.push_back(v);
        self.sum += v;
        if self.values.len() > self.window {
            self.sum -= self.values.pop_front().expect("non-empty");
        }
        self.mean()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            // recompute rather than trust the running sum, so drift never accumulates
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }
}

/// Places `count` packets uniformly over mini-slots, at most `cap` per mini-slot.
pub fn draw_placement<R: Rng + ?Sized>(count: usize, minislots: usize, cap: usize, rng: &mut R) -> Result<Vec<usize>> {
    if count > minislots * cap {
        return Err(Error::Config(format!("{count} packets cannot fit {minislots} mini-slots of capacity {cap}")));
    }
    let mut slots = vec![0usize; minislots];
    for _ in 0..count {
        let open: Vec<usize> = (0..minislots).filter(|&t| slots[t] < cap).collect();
        slots[open[rng.random_range(0..open.len())]] += 1;
    }
    Ok(slots)
}

/// Reward trajectory of a pre-training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PretrainReport {
    pub rewards: Vec<f64>,
    /// `REWARD_WINDOW`-TTI moving average after each TTI.
    pub moving_avg: Vec<f64>,
    pub stage_ends: Vec<u64>,
}

/// Trains the world's agent through `stages`. `observe` sees every trace
/// together with its stage index.
pub fn acl_pretrain(world: &mut World, stages: &[CurriculumStage], observe: impl FnMut(usize, &TtiTrace)) -> Result<PretrainReport> {
    acl_pretrain_with(world, stages, observe, |_, _| Ok(()))
}

/// [`acl_pretrain`] with a hook run after each stage, e.g. to checkpoint the agent.
pub fn acl_pretrain_with(
    world: &mut World,
    stages: &[CurriculumStage],
    mut observe: impl FnMut(usize, &TtiTrace),
    mut stage_end: impl FnMut(usize, &World) -> Result<()>,
) -> Result<PretrainReport> {
    if stages.is_empty() {
        return Err(Error::Config("curriculum needs at least one stage".into()));
    }
    for s in stages {
        s.validate()?;
    }
    if world.agent().is_none() {
        return Err(Error::Config("curriculum pre-training needs the learned policy".into()));
    }
    world.set_training(true);
    let cell = world.config().cell.clone();
    let minislots = cell.minislots_per_tti;
    let mut report = PretrainReport { stage_ends: stage_boundaries(stages), ..PretrainReport::default() };
    let mut avg = MovingAverage::new(REWARD_WINDOW);
    let mut scenario = 0u64;
    for (idx, stage) in stages.iter().enumerate() {
        let mut left = stage.episodes;
        while left > 0 {
            let reps = stage.window.min(left);
            match stage.urllc_count {
                None => {
                    for _ in 0..reps {
                        let t = world.run_tti()?;
                        report.rewards.push(t.reward);
                        report.moving_avg.push(avg.push(t.reward));
                        observe(idx, &t);
                    }
                }
                Some(count) => {
                    let (s, link) = world.draw_schedule()?;
                    let mut rng = world.seeds().stream("acl-placement", &[scenario]);
                    let raw = draw_placement(count, minislots, cell.branch_count(), &mut rng)?;
                    world.source_mut().clear_queue();
                    for _ in 0..reps {
                        let arrivals: ArrivalProfile = world.source_mut().admit_raw(raw.clone());
                        let t = world.run_fixed_tti(&s, &link, arrivals)?;
                        report.rewards.push(t.reward);
                        report.moving_avg.push(avg.push(t.reward));
                        observe(idx, &t);
                    }
                }
            }
            scenario += 1;
            left -= reps;
        }
        stage_end(idx, world)?;
    }
    world.set_training(false);
    Ok(report)
}

/// Convenience: pre-train and hand back the trained agent.
pub fn pretrain_agent(mut world: World, stages: &[CurriculumStage]) -> Result<(SacAgent, PretrainReport)> {
    let report = acl_pretrain(&mut world, stages, |_, _| {})?;
    Ok((world.into_agent().expect("checked by acl_pretrain"), report))
}
