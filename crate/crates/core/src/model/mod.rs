//! The dual-modality localisation network: input-attention LSTM encoders,
//! gated fusion, self-attention, the nonlinear head and its two outputs.

mod attention;
mod checkpoint;
mod config;
mod encoder;
mod forward;
mod grn;
mod params;

pub use attention::{attention_backward, attention_forward, self_attend, AttentionCache};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{ModelConfig, Variant};
pub use encoder::{attn_lstm_encode, encode, encode_backward, input_attention, positional_encoding, EncoderCache};
pub use forward::{backward_batch, forward, forward_batch, nonlinear_map, Batch, Diagnostics, ForwardCache, ForwardOutput};
pub use grn::{fuse, grn_backward, grn_forward, GrnCache};
pub use params::{
    AttentionParams, AttnLstmParams, EncoderParams, FusionParams, GrnParams, HeadParams, ModelParams, Visit,
};
