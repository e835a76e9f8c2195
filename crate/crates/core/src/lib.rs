//! Reconstruction of missing areas (clouds, stripes) in multitemporal
//! multispectral image stacks by non-local low-rank tensor completion.
//!
//! The stack is reshaped so that the acquisitions of each pixel sit side by
//! side, similar patches are grouped into 4-order tensors, and every group
//! is completed by an ADMM solver with a logDet rank surrogate.

pub mod degrade;
pub mod detect;
pub mod error;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod rearrange;
pub mod similarity;
pub mod solver;
pub mod stack;
pub mod synthetic;
pub mod tensor;

pub use degrade::{simulate_degradation, Degradation, DegradationSpec, Region};
pub use detect::{detect_clouds, knn_refine, threshold_detect, DetectConfig, ThresholdScan};
pub use error::{Error, Result};
pub use pipeline::{halrtc, inpaint, ExecutionMode, FallbackPolicy, PipelineConfig, PipelineReport};
pub use rearrange::{rearrange_forward, rearrange_inverse, WorkingTensor};
pub use similarity::{group_patches, ncc, search_similar, MaskedPatch, PatchGroup, PatchRef, SearchConfig};
pub use solver::{admm_complete, halrtc_complete, logdet_weights, weighted_svt, SolverConfig, SolverTrace};
pub use stack::{ImageStack, ObservationMask, StackDims};
pub use tensor::{count_fibers, fold, mode_ranks, numerical_rank, unfold, BinaryTensor, ModeRank, Tensor, Unfolding};
