//! Skeleton-based temporal action detection.
//!
//! The pipeline: a 3D skeleton video is rendered as a color *action image*
//! (rows = part-ordered joints, columns = frames, RGB = xyz), a single-shot
//! convolutional detector regresses class scores and box offsets from
//! multi-scale default boxes over that image, and detections are projected
//! back to frame intervals and scored with interval-IoU mean average
//! precision.
//!
//! Modules follow the pipeline order:
//!
//! * [`skeleton`] / [`synth`] — skeleton/label file I/O and synthetic data.
//! * [`encoding`] — action-image encoding (global and invariant mappings).
//! * [`boxes`] — default boxes, IoU, matching, offsets, hard negatives.
//! * [`tensor`] / [`ops`] — the minimal NN engine (conv/pool/relu + grads).
//! * [`net`] — the detector network: config, init, forward/backward.
//! * [`loss`] — multibox objective (smooth L1 + softmax CE) with gradients.
//! * [`train`] — SGD with momentum, plateau lr schedule, augmentation.
//! * [`checkpoint`] — versioned binary model serialization.
//! * [`eval`] — decode, NMS, precision/recall, interpolated mAP(θ).
//! * [`cli`] — the `skeldet` executable: synth/encode/priors/train/detect/eval.

pub mod boxes;
pub mod checkpoint;
pub mod cli;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod loss;
pub mod net;
pub mod ops;
pub mod skeleton;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
