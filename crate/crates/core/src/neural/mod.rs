//! From-scratch dense networks with analytic backpropagation, Adam and the
//! squashed Gaussian policy head.

pub mod adam;
pub mod checkpoint;
pub mod matrix;
pub mod mlp;
pub mod policy;

pub use adam::{adam_step, AdamState};
pub use matrix::Matrix;
pub use mlp::{Cache, Dense, Mlp, Params};
pub use policy::{action_to_scs, sample_squashed, squash_with_noise, squashed_backward, GaussianHead, SquashedSample};
