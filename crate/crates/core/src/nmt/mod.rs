//! Attention-based GRU encoder–decoder.

mod batch;
mod config;
pub mod layers;
mod model;

pub use batch::{Batch, EncodedExample, Padded};
pub use config::{AttentionVariant, ModelConfig, ReconstructorMode, MAX_SENTENCE_LEN};
pub use model::{
    decode_teacher_forced, encode, likelihood_loss, mean_of_column, register_parameters, Decoder,
    DecoderStates, DecoderStep, EncoderStates,
};
