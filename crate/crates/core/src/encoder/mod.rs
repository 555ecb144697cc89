//! A small transformer encoder trained from scratch: vocabulary,
//! pair encoding, forward/backward passes, gradient checking,
//! self-supervised pretraining, and text checkpoints.

mod checkpoint;
mod encode;
mod forward;
mod gradcheck;
mod params;
mod pretrain;
mod vocab;

pub use checkpoint::{load_encoder, load_encoder_file, save_encoder, save_encoder_file};
pub use encode::{encode_pair, EncodedPair};
pub use forward::{backward, forward, forward_cached, DropoutState, ForwardCache};
pub use gradcheck::grad_check;
pub use params::{
    add_parameter_noise, add_scaled, EncoderConfig, EncoderParams, LayerParams, ParamGroup,
    TensorView, TensorViewMut,
};
pub use pretrain::{make_nsp_pairs, pretrain_mlm_nsp, PretrainConfig, PretrainStep, SentencePair};
pub use vocab::{build_vocab, Vocabulary, CLS, MASK, PAD, SEP, UNK};

pub(crate) use checkpoint::{
    parse_config_line, read_param_group, read_vocab_section, write_config_line, write_param_group,
    write_vocab_section,
};
