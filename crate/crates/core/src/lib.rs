//! Temporal cross-attention routing.
//!
//! A [`SegmentSchedule`] binds prompts to latent-frame intervals. From it the
//! engine builds a [`PenaltyMatrix`] of boundary-decay penalties, subtracts
//! them from cross-attention logits in [`penalized_attention`], and measures
//! the resulting per-frame prompt occupancy with the [`occupancy`] rig.

pub mod attention;
pub mod csv;
pub mod error;
pub mod matrix;
pub mod occupancy;
pub mod penalty;
pub mod timeline;

pub use attention::{attention, penalized_attention, prior_multiplier_oracle, AttentionInputs, AttentionOutput};
pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use occupancy::{
    boundary_report, occupancy, synth_inputs, BoundaryReport, BoundaryStep, LogitProfile, OccupancyTrace,
};
pub use penalty::{
    build_penalty_matrix, decay_curve, offset_grid, penalty_at_offset, penalty_value, sigma_for, CurvePoint,
    DecayCurve, PenaltyConfig, PenaltyMatrix, PenaltyMode, SegmentDecay, WindowPolicy, DEFAULT_EPSILON,
};
pub use timeline::{
    build_token_layout, uniform_token_layout, validate_schedule, KeyOwner, ScheduleFile, SegmentId,
    SegmentSchedule, SegmentSpec, TemporalSegment, TokenLayout,
};
