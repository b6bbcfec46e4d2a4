//! The recommender network and its exact gradients.
//!
//! [`params`] holds every trainable tensor; [`tape`] is a small reverse-mode
//! engine over `Vec<f64>` values; [`forward`] wires sequence embeddings,
//! attention message passing, and the prediction MLP onto that tape; and
//! [`checkpoint`] persists parameters as manifest + flat binaries.

mod checkpoint;
mod forward;
mod params;
mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use forward::{
    combine_layers, forward_backward, Encoded, Encoder, Example, NodeStates, SampleSettings,
};
pub use params::{BlockRef, Mat, ModelConfig, ModelParams, EDGE_KIND_ROWS, TIME_ROWS};
pub use tape::{NodeId, Tape};
