//! Dense `f64` tensors, a reverse-mode tape, the encoder/classifier model and Adam.

mod adam;
mod checkpoint;
mod model;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, read_checkpoint, save_checkpoint,
    write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use model::{softmax, Activation, ForwardOutput, Model, ModelConfig, ModelSpec, TapeOutput};
pub use params::{Gradients, ModelParams};
pub use tape::{ConvGeometry, Tape, Var};
pub use tensor::Tensor;
