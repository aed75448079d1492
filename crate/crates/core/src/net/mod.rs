//! Dense networks for the policy and the critic.

pub mod critic;
pub mod gradcheck;
pub mod mlp;
pub mod policy;

pub use critic::{critic_forward, CriticBatch};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use mlp::{FlatParams, Gradients, NetParams, NetRecord};
pub use policy::{mean_action, policy_forward, policy_sample, PolicyBatch, PolicyOutput, SampledAction};
