//! Learned keypoint generator: a shared-weight per-point encoder with max
//! pooling feeding either a latent-variable proposal decoder or a success
//! scorer. Networks are small dense stacks with hand-written gradients.

mod encoder;
mod frame;
mod infer;
pub mod nn;
mod params;
mod train;

pub use encoder::{encode_backward, encode_batch, PoolTrace};
pub use frame::CloudFrame;
pub use infer::{
    encode, evaluate, evaluate_many, input_indices, predict_keypoints, predict_scored, prepare, propose,
    score_gradient, Prepared,
};
pub use params::{HeadKind, Net, NetParams, Normalization};
pub use train::{
    auc, dataset_scale, evaluation_loss, proposal_loss, train_evaluation, train_proposal, Example, Hyper,
    ProposalLoss, TrainBatch, Trained,
};

pub const POINT_DIM: usize = 3;
pub const HIDDEN_DIM: usize = 64;
pub const FEATURE_DIM: usize = 128;
pub const KEYPOINT_DIM: usize = 6;
pub const LATENT_DIM: usize = 4;
/// Default proposal count at desk scale.
pub const DEFAULT_PROPOSALS: usize = 64;
