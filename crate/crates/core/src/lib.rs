//! Deterministic simulator for puncturing URLLC packets onto scheduled eMBB
//! traffic, with a soft actor-critic policy, a feasibility enforcer that
//! projects raw proposals onto the admissible set, and two rule-based baselines.
//!
//! Every random draw flows from a [`rng::SeedTree`], so a master seed fixes the
//! whole run.

pub mod baselines;
pub mod engine;
pub mod enforcer;
pub mod error;
pub mod grid;
pub mod neural;
pub mod phy;
pub mod rng;
pub mod sac;
pub mod scheduler;
pub mod traffic;

pub use baselines::{rp_puncture, sef_puncture};
pub use enforcer::{apportion, enforce, kl_divergence, kl_project, kl_project_vjp, ContinuousProjection, RawPolicySample};
pub use error::{Error, Result};
pub use grid::{
    compute_reward, goodput_bits, goodput_scs, CellConfig, DecodeOutcome, PuncturingVector, ScheduleVector, TtiTrace,
};
pub use phy::{DecodabilityModel, Decoder, LinkQuality, PathlossParams};
pub use rng::{SeedTree, SimRng};
pub use scheduler::{McsTable, PfState};
pub use traffic::{ArrivalProfile, TrafficConfig, UrllcSource};
