//! Soft actor-critic training: replay buffer, twin critics with target
//! networks and the entropy-regularized policy update.

pub mod agent;
pub mod buffer;

pub use agent::{
    actor_input, branch_batch, critic_input, soft_update, ActionMode, ActorGradient, AgentDims, SacAgent, SacConfig,
    TrainStats,
};
pub use buffer::{ExperienceRecord, ReplayBuffer};
