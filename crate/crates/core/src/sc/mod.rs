//! The semantic-communication pipeline: semantic/channel encoder, simulated
//! noisy channel, channel/semantic decoder, and classification loss.

mod channel;
mod model;
mod serialize;

pub use channel::{channel_noise, transmit, ChannelSpec};
pub use model::{
    bind_params, decode, decoder_forward, encode, encoder_forward, forward_loss,
    forward_loss_grad, init_params, named_param_grads, predict, ConvSpec, EncodedNodes,
    FeatureMapSet, ParamNodes, SCArchitecture, SCObjective, SemanticVector,
};
pub use serialize::{load_model, save_model};
