//! Small fully connected Q-network with hand-derived gradients.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, SeedLineage, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use mlp::{glorot_bound, Layer, MlpParams, Scratch};
