//! Fixtures shared by the benchmarks.

use puncture_core::engine::WorldConfig;
use puncture_core::sac::{AgentDims, SacAgent};
use puncture_core::{ScheduleVector, SeedTree};

/// Ten-user schedule of the reference 780-SC cell.
pub const REFERENCE_ALLOC: [usize; 10] = [60, 108, 72, 72, 72, 48, 72, 48, 96, 132];

pub fn reference_schedule() -> ScheduleVector {
    ScheduleVector::from_alloc(REFERENCE_ALLOC.to_vec())
}

/// Four-user schedule of the 96-SC desk cell.
pub fn desk_schedule() -> ScheduleVector {
    ScheduleVector::from_alloc(vec![36, 24, 24, 12])
}

/// Freshly initialized agent sized for `cfg`. Weights do not affect timing.
pub fn agent_for(cfg: &WorldConfig, seed: u64) -> SacAgent {
    SacAgent::new(AgentDims::from_cell(&cfg.cell), cfg.sac.clone(), &SeedTree::new(seed)).expect("valid preset")
}
