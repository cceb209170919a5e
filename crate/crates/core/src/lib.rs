//! Douglas-Rachford splitting for information bottleneck and privacy
//! funnel problems on finite alphabets.
//!
//! A problem is split as `F(p) + G(q)` subject to `A p = B q`, with `p` and
//! `q` stacks of (conditional) probability vectors. [`drs::run`] alternates
//! approximate block minimizations of the augmented Lagrangian with relaxed
//! dual updates. All information quantities are in bits.

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;

pub mod auglag;
pub mod baselines;
pub mod diagnostics;
pub mod drs;
pub mod formulations;
pub mod harness;
pub mod inner;
pub mod ops;
pub mod prob;

pub use auglag::{Block, BlockState, EntropyTerm, Residual, SplitProblem};
pub use baselines::{ba_ib, ba_ib_best, greedy_pf_merge_two, BaConfig, BaResult, GreedyPoint};
pub use diagnostics::{
    convergence_percentage, info_plane_point, rate_fit, reference_lagrangian,
    sufficient_decrease_report, DecreaseConstants, DecreaseReport, RateFit,
};
pub use drs::{run, RunOutput, RunStatus, StopRule, Trace, TraceRow, Variant};
pub use error::{Error, Result};
pub use formulations::{
    build_ib_mv, build_ib_th, build_pf, derived_constants, penalty_threshold, DerivedConstants,
    Formulation, SmoothnessProfile,
};
pub use harness::{benchmark_joint, sweep, PlaneRecord, SweepConfig};
pub use inner::{InnerConfig, StepScale};
pub use ops::{SpectralBounds, StructuredOperator};
pub use prob::{build_joint, CondProbVector, JointPmf, ProbVector};
