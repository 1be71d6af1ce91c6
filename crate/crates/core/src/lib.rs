//! Alignment of pairs of high-dimensional time series.
//!
//! The crate covers the classic dynamic-time-warping ladder (raw DTW, PCA + DTW,
//! canonical time warping, deep canonical time warping, soft-DTW variants) and
//! conditional deep canonical time warping, where per-frame stochastic gates
//! predicted from a temporal context select the input features that enter the
//! embedding networks.
//!
//! Module map:
//!
//! * [`seqcore`] sequence views, alignment paths, matrix file formats
//! * [`warp`] exact DTW, soft-DTW and its gradient, annealing
//! * [`cca`] covariances, CCA, PCA and the differentiable correlation loss
//! * [`nn`] dense networks with backpropagation and an adaptive-moment optimizer
//! * [`gates`] conditional stochastic gates and the expected-ℓ0 penalty
//! * [`aligners`] the method ladder and training loops
//! * [`datagen`] synthetic benchmark generators with ground truth
//! * [`evalbench`] alignment score, benchmark sweep, reports
//! * [`cli`] the `cdctw` command line

// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aligners;
pub mod cca;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod evalbench;
pub mod gates;
pub mod nn;
pub mod seqcore;
pub mod warp;

pub use aligners::{align, AlignerConfig, AlignmentResult, GateControl, Method};
pub use error::{Error, Result};
pub use seqcore::{AlignmentPath, PairedViews, SequenceView};
