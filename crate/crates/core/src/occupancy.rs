//! Desk-scale routing rig.
//!
//! Value vectors are one-hot prompt indicators, so the attention output of a
//! query is exactly the attention mass it gives to each prompt. Averaging
//! those rows per latent frame gives an occupancy trace: which prompt is
//! active at which frame, and how sharply it hands over at boundaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{penalized_attention, AttentionInputs, AttentionOutput};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::penalty::{build_penalty_matrix, PenaltyConfig, PenaltyMode};
use crate::timeline::{KeyOwner, SegmentSchedule, TokenLayout};

/// Width of the synthetic query/key embeddings.
pub const SYNTH_DIM: usize = 8;

/// Tolerance for the one-hot output / grouped-weight identity.
const IDENTITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LogitProfile {
    /// `Q K^T` is identically zero; weights are the normalized priors.
    Uniform,
    /// `Q` and `K` entries drawn uniformly from `[-1, 1)` with a ChaCha8 stream.
    Random(u64),
}

/// Occupancy column of a key owner: segments in schedule order, global last.
pub fn owner_column(schedule: &SegmentSchedule, owner: KeyOwner) -> usize {
    match owner {
        KeyOwner::Segment(id) => id.0 - 1,
        KeyOwner::Global => schedule.segments().len(),
    }
}

/// Synthetic attention inputs for a schedule and layout.
pub fn synth_inputs(
    schedule: &SegmentSchedule,
    layout: &TokenLayout,
    profile: LogitProfile,
) -> Result<AttentionInputs> {
    layout.check_against(schedule)?;
    let (nq, nk) = (layout.query_count(), layout.key_count());
    let (q, k) = match profile {
        LogitProfile::Uniform => (
            DenseMatrix::zeros(nq, SYNTH_DIM),
            DenseMatrix::zeros(nk, SYNTH_DIM),
        ),
        LogitProfile::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = DenseMatrix::from_fn(nq, SYNTH_DIM, |_, _| rng.gen_range(-1.0..1.0));
            let k = DenseMatrix::from_fn(nk, SYNTH_DIM, |_, _| rng.gen_range(-1.0..1.0));
            (q, k)
        }
    };
    let prompts = schedule.prompt_ids().len();
    let v = DenseMatrix::from_fn(nk, prompts, |key, col| {
        if owner_column(schedule, layout.key_owner(key)) == col {
            1.0
        } else {
            0.0
        }
    });
    AttentionInputs::new(q, k, v)
}

/// Per-frame attention mass over prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTrace {
    prompts: Vec<String>,
    mass: DenseMatrix,
    mode: PenaltyMode,
}

impl OccupancyTrace {
    pub fn frames(&self) -> usize {
        self.mass.rows()
    }

    /// Column labels; the global prompt, if any, is last.
    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }

    /// `frames x prompts` matrix of mass fractions.
    pub fn mass(&self) -> &DenseMatrix {
        &self.mass
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        self.mass.row(frame)
    }

    pub fn mode(&self) -> PenaltyMode {
        self.mode
    }

    /// Column with the largest mass at `frame` (first one on ties).
    pub fn argmax(&self, frame: usize) -> usize {
        self.row(frame)
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
            .0
    }
}

/// Grouped attention mass of every query, `query_count x prompts`.
pub fn grouped_weights(
    schedule: &SegmentSchedule,
    layout: &TokenLayout,
    weights: &DenseMatrix,
) -> DenseMatrix {
    let prompts = schedule.prompt_ids().len();
    let mut grouped = DenseMatrix::zeros(weights.rows(), prompts);
    for q in 0..weights.rows() {
        for (k, &w) in weights.row(q).iter().enumerate() {
            let col = owner_column(schedule, layout.key_owner(k));
            let acc = grouped.get(q, col) + w;
            grouped.set(q, col, acc);
        }
    }
    grouped
}

/// Runs penalized attention on synthetic inputs and aggregates the weights
/// into a per-frame occupancy trace.
pub fn occupancy(
    schedule: &SegmentSchedule,
    layout: &TokenLayout,
    config: &PenaltyConfig,
    profile: LogitProfile,
) -> Result<OccupancyTrace> {
    let penalty = build_penalty_matrix(schedule, layout, config)?;
    let inputs = synth_inputs(schedule, layout, profile)?;
    let AttentionOutput { output, weights } = penalized_attention(&inputs, &penalty)?;

    let grouped = grouped_weights(schedule, layout, &weights);
    let drift = grouped.max_abs_diff(&output)?;
    if drift > IDENTITY_TOLERANCE {
        return Err(Error::Invariant(format!(
            "one-hot attention output differs from grouped weights by {drift:e}"
        )));
    }

    let prompts = grouped.cols();
    let per_frame = layout.tokens_per_frame() as f64;
    let mut mass = DenseMatrix::zeros(schedule.video_frames(), prompts);
    for q in 0..grouped.rows() {
        let frame = layout.query_frame(q);
        for (col, &g) in grouped.row(q).iter().enumerate() {
            let acc = mass.get(frame, col) + g;
            mass.set(frame, col, acc);
        }
    }
    // Grouped sums of softmax weights can overshoot 1 by an ulp.
    let mass = mass.map(|x| (x / per_frame).min(1.0));

    Ok(OccupancyTrace {
        prompts: schedule.prompt_ids().into_iter().map(str::to_owned).collect(),
        mass,
        mode: config.mode,
    })
}

/// L1 occupancy change across one segment boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryStep {
    /// Last frame of the earlier segment; the step is to `frame + 1`.
    pub frame: usize,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryReport {
    /// Largest L1 distance between consecutive occupancy rows.
    pub max_step: f64,
    pub per_boundary_steps: Vec<BoundaryStep>,
    pub mode: PenaltyMode,
}

pub fn boundary_report(trace: &OccupancyTrace, schedule: &SegmentSchedule) -> Result<BoundaryReport> {
    if trace.frames() != schedule.video_frames() {
        return Err(Error::Layout(format!(
            "trace has {} frames, schedule has {}",
            trace.frames(),
            schedule.video_frames()
        )));
    }
    let step = |f: usize| -> f64 {
        trace
            .row(f)
            .iter()
            .zip(trace.row(f + 1))
            .map(|(a, b)| (a - b).abs())
            .sum()
    };
    let max_step = (0..trace.frames().saturating_sub(1))
        .map(step)
        .fold(0.0, f64::max);
    let per_boundary_steps = schedule
        .segments()
        .iter()
        .take(schedule.segments().len() - 1)
        .map(|seg| BoundaryStep {
            frame: seg.end_frame(),
            step: step(seg.end_frame()),
        })
        .collect();
    Ok(BoundaryReport {
        max_step,
        per_boundary_steps,
        mode: trace.mode(),
    })
}
