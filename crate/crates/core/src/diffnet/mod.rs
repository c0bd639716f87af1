//! Dense tensors, a reverse-mode tape, the SELU encoder and its optimisers.

mod adamw;
mod checkpoint;
mod graph;
mod mlp;
mod tensor;

pub use adamw::{clip_global_norm, AdamW, AdamWConfig};
pub use checkpoint::{read_checkpoint, to_bytes, write_checkpoint, MAGIC};
pub use graph::{selu, Gradients, Graph, Var, SELU_ALPHA, SELU_LAMBDA};
pub use mlp::{polyak_update, Dense, Mlp, ParamVars, DEFAULT_HIDDEN, DEFAULT_LATENT_DIM};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum DiffError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
