//! The joint anti-spoofing and fake-span network, its losses and optimizer.

mod attention;
mod checkpoint;
mod conv;
mod dense;
mod linalg;
mod loss;
mod network;
mod optim;
mod params;
mod pooling;
mod switches;

pub use attention::positional_encoding;
pub use checkpoint::{file_hash, Checkpoint, CheckpointMeta};
pub use conv::BnUpdate;
pub use loss::{af_loss, af_loss_grad, decode_span, genuine_score, qa_loss, qa_loss_grad, total_loss, LossParts};
pub use network::{BatchLoss, Example, ForwardOutput, Mode, Model, ModelConfig, ShapeTrace, StepOutput};
pub use optim::Adam;
pub use params::{Grads, ParamId, Params};
pub use pooling::{Pooling, ASP_VAR_FLOOR};
pub use switches::Switches;
