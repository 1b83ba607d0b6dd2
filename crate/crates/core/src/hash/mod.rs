//! Pixel-difference hashing: binary encoding, the four-term objective and its
//! trace reformulation, and alternating training on the Stiefel manifold.

mod codes;
mod objective;
pub mod stiefel;
mod train;

pub(crate) use codes::pack as codes_pack;
pub use codes::{encode, encode_packed, encode_with, BinaryCodes, MAX_PACKED_BITS};
pub use objective::{
    compute_q, euclidean_gradient, loss_elementwise, loss_matrix_form, relaxed_trace_terms,
    LossTerms, PhaseObjective,
};
pub use train::{initial_projection, train_hashing, HashConfig, HashingModel, TrainStats};
