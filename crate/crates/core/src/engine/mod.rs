//! Codebook generation, the per-TTI loop and curriculum pre-training.

pub mod codebook;
pub mod curriculum;
pub mod world;

pub use codebook::{apply_codebook, build_codebook, Codebook, CodebookSource};
pub use curriculum::{acl_pretrain, acl_pretrain_with, default_ladder, pretrain_agent, stage_boundaries, CurriculumStage, MovingAverage, PretrainReport, REWARD_WINDOW};
pub use world::{distances_from_positions, random_positions, run_for, REFERENCE_EMBB_POSITIONS, DESK_DISTANCES_M, PolicyKind, RunSummary, World, WorldConfig};
